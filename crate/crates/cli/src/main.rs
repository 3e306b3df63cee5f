//! detour: system-optimal, demand-robust path recommendations for public
//! transit disruptions. Scenario in, shares and reports out.

mod io;
mod reports;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use detour_core::benchmarks;
use detour_core::evaluate::{evaluate_shares, travel_time_changes, Evaluation};
use detour_core::gradient::linearize;
use detour_core::model::{flows_from_shares, PathShares, Seconds};
use detour_core::optimizer::{msa_run, solve_wd, MsaConfig};
use detour_core::scenario::{load_bundle, load_demand, ScenarioBundle};
use detour_core::simulator::{
    apply_incident, materialize_passengers, run_prepared, SimConfig,
};
use detour_core::uncertainty::{self, UncertaintyModel};

use io::{config_hash, read_json, shares_from_file, shares_to_file, write_json, write_text};

#[derive(Parser)]
#[command(name = "detour", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// directory holding network.json, timetable.json, paths.json,
    /// demand.json, incident.json
    #[arg(long)]
    scenario: PathBuf,
    /// incident file override
    #[arg(long)]
    incident: Option<PathBuf>,
    /// demand file override (nominal + samples)
    #[arg(long)]
    demand: Option<PathBuf>,
    /// simulation horizon override, seconds since midnight
    #[arg(long)]
    horizon_end: Option<Seconds>,
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one network loading for a share vector and write the summary
    Simulate {
        #[command(flatten)]
        common: ScenarioArgs,
        /// shares JSON; defaults to uniform shares
        #[arg(long)]
        shares: Option<PathBuf>,
    },
    /// Fit the demand uncertainty model from the scenario's samples
    FitUncertainty {
        #[command(flatten)]
        common: ScenarioArgs,
        /// treat samples as baseline days and draw leave proportions first
        #[arg(long)]
        leave_lo: Option<f64>,
        #[arg(long)]
        leave_hi: Option<f64>,
        /// total-demand factor; defaults to the 90th percentile of sampled totals
        #[arg(long)]
        gamma: Option<f64>,
        /// budget stored in the model file
        #[arg(long, default_value = "0.84")]
        rho: f64,
    },
    /// Run the full iterative optimization for each ρ in the grid
    Optimize {
        #[command(flatten)]
        common: ScenarioArgs,
        /// fitted uncertainty model; defaults to fitting from scenario samples
        #[arg(long)]
        uncertainty: Option<PathBuf>,
        /// comma-separated ρ values
        #[arg(long, default_value = "0,0.25,0.52,0.84,1.28,1.64,2.33")]
        rho_grid: String,
        #[arg(long)]
        gamma: Option<f64>,
        /// convergence window T_cvg
        #[arg(long, default_value = "5")]
        tcvg: usize,
        /// convergence threshold in passenger-seconds; defaults to 1% of Z₀
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value = "100")]
        max_iters: usize,
    },
    /// Write the three benchmark share vectors
    BenchmarkShares {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Evaluate share files on an actual demand draw against a baseline
    Evaluate {
        #[command(flatten)]
        common: ScenarioArgs,
        /// one or more shares files (name taken from the file stem)
        #[arg(long, required = true, num_args = 1..)]
        shares: Vec<PathBuf>,
        /// file stem of the baseline shares (defaults to the first file)
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Solve the worst-case demand problem for a share vector
    WorstCaseDemand {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        uncertainty: PathBuf,
        #[arg(long)]
        shares: PathBuf,
    },
    /// Write the bundled synthetic disruption scenario
    GenScenario {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "42")]
        seed: u64,
    },
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        let msg = format!("{err:#}");
        eprintln!(
            "{}",
            serde_json::to_string(&ErrorReport { error: &msg }).unwrap()
        );
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, shares } => cmd_simulate(&common, shares.as_deref()),
        Command::FitUncertainty {
            common,
            leave_lo,
            leave_hi,
            gamma,
            rho,
        } => cmd_fit_uncertainty(&common, leave_lo, leave_hi, gamma, rho),
        Command::Optimize {
            common,
            uncertainty,
            rho_grid,
            gamma,
            tcvg,
            epsilon,
            max_iters,
        } => cmd_optimize(
            &common,
            uncertainty.as_deref(),
            &rho_grid,
            gamma,
            tcvg,
            epsilon,
            max_iters,
        ),
        Command::BenchmarkShares { common } => cmd_benchmark_shares(&common),
        Command::Evaluate {
            common,
            shares,
            baseline,
        } => cmd_evaluate(&common, &shares, baseline.as_deref()),
        Command::WorstCaseDemand {
            common,
            uncertainty,
            shares,
        } => cmd_worst_case_demand(&common, &uncertainty, &shares),
        Command::GenScenario { out_dir, seed } => cmd_gen_scenario(&out_dir, seed),
    }
}

struct Loaded {
    bundle: ScenarioBundle,
    hash_inputs: Vec<PathBuf>,
}

fn load(common: &ScenarioArgs) -> Result<Loaded> {
    let dir = &common.scenario;
    let mut bundle = load_bundle(dir)?;
    let mut hash_inputs = vec![
        dir.join("network.json"),
        dir.join("timetable.json"),
        dir.join("paths.json"),
        dir.join("incident.json"),
        dir.join("demand.json"),
    ];
    if let Some(inc) = &common.incident {
        let incident: detour_core::model::Incident = read_json(inc)?;
        incident.validate(&bundle.scenario.network, &bundle.scenario.timetable)?;
        // the index hangs off T_s, so it follows the incident override
        bundle.index = detour_core::model::build_index(
            &bundle.scenario.od_paths,
            &bundle.scenario.network,
            bundle.scenario.tau,
            bundle.scenario.h_count,
            incident.start,
        )?;
        bundle.incident = incident;
        hash_inputs.push(inc.clone());
    }
    if let Some(dem) = &common.demand {
        let (nominal, samples) = load_demand(dem, &bundle.index)?;
        bundle.nominal_demand = nominal;
        bundle.demand_samples = samples;
        hash_inputs.push(dem.clone());
    }
    Ok(Loaded {
        bundle,
        hash_inputs,
    })
}

fn hash_for(loaded: &Loaded, common: &ScenarioArgs, extra: &[String]) -> Result<String> {
    let mut args = vec![format!("seed={}", common.seed)];
    if let Some(h) = common.horizon_end {
        args.push(format!("horizon_end={h}"));
    }
    args.extend_from_slice(extra);
    config_hash(&loaded.hash_inputs, &args)
}

fn default_horizon(bundle: &ScenarioBundle, common: &ScenarioArgs) -> Option<Seconds> {
    common.horizon_end.or_else(|| {
        Some(
            bundle.index.t_start
                + (bundle.index.h_count as Seconds + 2) * bundle.index.tau,
        )
    })
}

fn load_shares(path: &Path, bundle: &ScenarioBundle) -> Result<PathShares> {
    let file: io::SharesFile = read_json(path)?;
    shares_from_file(&file, &bundle.index)
}

fn cmd_simulate(common: &ScenarioArgs, shares_path: Option<&Path>) -> Result<()> {
    let loaded = load(common)?;
    let bundle = &loaded.bundle;
    let shares = match shares_path {
        Some(p) => load_shares(p, bundle)?,
        None => benchmarks::uniform_shares(&bundle.index),
    };
    let mut extra = Vec::new();
    if let Some(p) = shares_path {
        extra.push(format!("shares={}", p.display()));
    }
    let hash = hash_for(&loaded, common, &extra)?;

    let prepared = apply_incident(&bundle.scenario, Some(&bundle.incident))?;
    let (eval, record) = evaluate_shares(
        &prepared,
        &bundle.scenario,
        &bundle.index,
        &bundle.nominal_demand,
        &shares,
        &bundle.background_ods,
        common.seed,
        default_horizon(bundle, common),
    )?;
    let summary = reports::simulation_summary(&eval, &record, &bundle.index, hash);
    write_json(&common.out_dir.join("summary.json"), &summary)?;
    write_text(
        &common.out_dir.join("trajectories.csv"),
        &reports::trajectories_csv(&record, &bundle.index),
    )?;
    println!(
        "Z = {} passenger-seconds over {} passengers -> {}",
        summary.z_total_passenger_seconds,
        summary.n_passengers,
        common.out_dir.display()
    );
    Ok(())
}

fn cmd_fit_uncertainty(
    common: &ScenarioArgs,
    leave_lo: Option<f64>,
    leave_hi: Option<f64>,
    gamma: Option<f64>,
    rho: f64,
) -> Result<()> {
    let loaded = load(common)?;
    let bundle = &loaded.bundle;
    anyhow::ensure!(
        !bundle.demand_samples.is_empty(),
        "demand.json provides no samples to fit from"
    );
    let samples = match (leave_lo, leave_hi) {
        (Some(lo), Some(hi)) => uncertainty::generate_synthetic_samples(
            &bundle.demand_samples,
            lo,
            hi,
            common.seed,
            &bundle.index,
        )?,
        (None, None) => bundle.demand_samples.clone(),
        _ => anyhow::bail!("--leave-lo and --leave-hi must be given together"),
    };
    let gamma = match gamma {
        Some(g) => g,
        None => uncertainty::gamma_from_percentile(&samples, 0.9)?.max(1.0),
    };
    let model = uncertainty::fit(&samples, rho, gamma, &bundle.index)?;
    let mardia = uncertainty::mardia_demand(&samples, &bundle.index)?;

    write_json(&common.out_dir.join("uncertainty.json"), &model)?;
    #[derive(Serialize)]
    struct MardiaReport {
        config_hash: String,
        tested_dimension: usize,
        n_samples: usize,
        skewness: f64,
        skewness_statistic: f64,
        p_skewness: f64,
        kurtosis: f64,
        kurtosis_statistic: f64,
        p_kurtosis: f64,
    }
    let hash = hash_for(
        &loaded,
        common,
        &[format!("gamma={gamma}"), format!("rho={rho}")],
    )?;
    write_json(
        &common.out_dir.join("mardia.json"),
        &MardiaReport {
            config_hash: hash,
            tested_dimension: mardia.dim,
            n_samples: mardia.n,
            skewness: mardia.skewness,
            skewness_statistic: mardia.skewness_stat,
            p_skewness: mardia.p_skewness,
            kurtosis: mardia.kurtosis,
            kurtosis_statistic: mardia.kurtosis_stat,
            p_kurtosis: mardia.p_kurtosis,
        },
    )?;
    println!(
        "fitted model: gamma = {gamma:.3}, rho = {rho}, Mardia skew p = {:.3}, kurtosis p = {:.3} -> {}",
        mardia.p_skewness,
        mardia.p_kurtosis,
        common.out_dir.display()
    );
    Ok(())
}

fn parse_rho_grid(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad rho value `{t}`"))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    common: &ScenarioArgs,
    uncertainty_path: Option<&Path>,
    rho_grid: &str,
    gamma: Option<f64>,
    tcvg: usize,
    epsilon: Option<f64>,
    max_iters: usize,
) -> Result<()> {
    let loaded = load(common)?;
    let bundle = &loaded.bundle;
    let grid = parse_rho_grid(rho_grid)?;

    let base_model: UncertaintyModel = match uncertainty_path {
        Some(p) => read_json(p)?,
        None => {
            anyhow::ensure!(
                !bundle.demand_samples.is_empty(),
                "no uncertainty file given and demand.json provides no samples"
            );
            let gamma = match gamma {
                Some(g) => g,
                None => uncertainty::gamma_from_percentile(&bundle.demand_samples, 0.9)?.max(1.0),
            };
            uncertainty::fit(&bundle.demand_samples, 0.0, gamma, &bundle.index)?
        }
    };

    let mut extra = vec![
        format!("rho_grid={rho_grid}"),
        format!("tcvg={tcvg}"),
        format!("max_iters={max_iters}"),
    ];
    if let Some(e) = epsilon {
        extra.push(format!("epsilon={e}"));
    }
    if let Some(p) = uncertainty_path {
        extra.push(format!("uncertainty={}", p.display()));
    }
    let hash = hash_for(&loaded, common, &extra)?;

    #[derive(Serialize)]
    struct OptimizeRun {
        rho: f64,
        converged: bool,
        iterations: usize,
        chosen_iteration: usize,
        epsilon: f64,
        z_chosen: f64,
        shares_file: String,
        trace_file: String,
        beta_file: String,
    }
    #[derive(Serialize)]
    struct OptimizeReport {
        config_hash: String,
        runs: Vec<OptimizeRun>,
    }
    let mut runs = Vec::new();
    for rho in &grid {
        let mut model = base_model.clone();
        model.rho = *rho;
        let config = MsaConfig {
            t_cvg: tcvg,
            epsilon,
            max_iters,
            seed: common.seed,
            horizon_end: default_horizon(bundle, common),
            initial_shares: None,
            initial_demand: None,
            solver: Default::default(),
        };
        let result = msa_run(
            &bundle.scenario,
            &[(bundle.incident.clone(), 1.0)],
            &model,
            &bundle.index,
            &config,
        )?;
        let tag = format!("{rho:.2}");
        let shares_file = format!("shares_rho_{tag}.json");
        let trace_file = format!("trace_rho_{tag}.csv");
        let beta_file = format!("beta_rho_{tag}.csv");
        write_json(
            &common.out_dir.join(&shares_file),
            &shares_to_file(&result.shares, &bundle.index),
        )?;
        write_text(
            &common.out_dir.join(&trace_file),
            &reports::trace_csv(&result.trace),
        )?;
        write_text(
            &common.out_dir.join(&beta_file),
            &reports::beta_csv(&result.final_linearization, &bundle.index),
        )?;
        let z_chosen = result
            .trace
            .iter()
            .find(|it| it.t == result.chosen_iteration)
            .map(|it| it.z)
            .unwrap_or(f64::NAN);
        println!(
            "rho {rho}: converged = {} after {} iterations, Z = {z_chosen}",
            result.converged,
            result.trace.len()
        );
        if !result.converged {
            println!("rho {rho}: NOT CONVERGED within {max_iters} iterations; best-so-far shares written");
        }
        runs.push(OptimizeRun {
            rho: *rho,
            converged: result.converged,
            iterations: result.trace.len(),
            chosen_iteration: result.chosen_iteration,
            epsilon: result.epsilon,
            z_chosen,
            shares_file,
            trace_file,
            beta_file,
        });
    }
    write_json(
        &common.out_dir.join("optimize.json"),
        &OptimizeReport {
            config_hash: hash,
            runs,
        },
    )?;
    Ok(())
}

fn cmd_benchmark_shares(common: &ScenarioArgs) -> Result<()> {
    let loaded = load(common)?;
    let bundle = &loaded.bundle;
    let hash = hash_for(&loaded, common, &[])?;

    let uniform = benchmarks::uniform_shares(&bundle.index);
    write_json(
        &common.out_dir.join("uniform_shares.json"),
        &shares_to_file(&uniform, &bundle.index),
    )?;
    let (capacity, fallbacks) = benchmarks::capacity_shares(
        &bundle.scenario,
        &bundle.incident,
        &bundle.index,
        &bundle.nominal_demand,
        common.seed,
    )?;
    write_json(
        &common.out_dir.join("capacity_shares.json"),
        &shares_to_file(&capacity, &bundle.index),
    )?;
    let status_quo = match &bundle.status_quo {
        Some(inputs) => {
            let sq = benchmarks::status_quo_shares(&bundle.index, bundle.incident.end, inputs)?;
            write_json(
                &common.out_dir.join("status_quo_shares.json"),
                &shares_to_file(&sq, &bundle.index),
            )?;
            true
        }
        None => false,
    };
    #[derive(Serialize)]
    struct BenchmarkReport {
        config_hash: String,
        capacity_fallback_cells: Vec<(usize, usize)>,
        status_quo_written: bool,
    }
    write_json(
        &common.out_dir.join("benchmarks.json"),
        &BenchmarkReport {
            config_hash: hash,
            capacity_fallback_cells: fallbacks,
            status_quo_written: status_quo,
        },
    )?;
    println!("benchmark shares -> {}", common.out_dir.display());
    Ok(())
}

fn cmd_evaluate(
    common: &ScenarioArgs,
    shares_paths: &[PathBuf],
    baseline: Option<&str>,
) -> Result<()> {
    let loaded = load(common)?;
    let bundle = &loaded.bundle;
    let prepared = apply_incident(&bundle.scenario, Some(&bundle.incident))?;
    let horizon = default_horizon(bundle, common);

    let mut names = Vec::new();
    let mut shares = Vec::new();
    for p in shares_paths {
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        names.push(name);
        shares.push(load_shares(p, bundle)?);
    }
    let baseline_name = baseline.unwrap_or(&names[0]).to_string();
    let baseline_idx = names
        .iter()
        .position(|n| n == &baseline_name)
        .with_context(|| format!("baseline `{baseline_name}` not among the shares files"))?;

    // independent simulations; safe to spread across threads
    let evals: Vec<(Evaluation, _)> = std::thread::scope(|scope| {
        let handles: Vec<_> = shares
            .iter()
            .map(|s| {
                scope.spawn(|| {
                    evaluate_shares(
                        &prepared,
                        &bundle.scenario,
                        &bundle.index,
                        &bundle.nominal_demand,
                        s,
                        &bundle.background_ods,
                        common.seed,
                        horizon,
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread"))
            .collect::<detour_core::Result<Vec<_>>>()
    })?;

    let mut extra: Vec<String> = shares_paths
        .iter()
        .map(|p| format!("shares={}", p.display()))
        .collect();
    extra.push(format!("baseline={baseline_name}"));
    let mut hash_inputs = loaded.hash_inputs.clone();
    hash_inputs.extend(shares_paths.iter().cloned());
    let hash = config_hash(&hash_inputs, &extra)?;

    let base_eval = &evals[baseline_idx].0;
    let mut rows = Vec::new();
    for (name, (eval, _)) in names.iter().zip(&evals) {
        rows.push(reports::comparison_row(name, eval, base_eval));
        write_text(
            &common.out_dir.join(format!("per_path_{name}.csv")),
            &reports::per_path_csv(eval, &bundle.index),
        )?;
        if name != &baseline_name {
            let changes = travel_time_changes(eval, base_eval);
            write_text(
                &common.out_dir.join(format!("changes_{name}.csv")),
                &reports::changes_csv(&changes),
            )?;
        }
    }
    let report = reports::ComparisonReport {
        config_hash: hash,
        baseline: baseline_name,
        rows,
    };
    write_json(&common.out_dir.join("evaluation.json"), &report)?;
    for row in &report.rows {
        println!(
            "{}: all {:.2} min ({:+.1}%), recommended {:.2} min ({:+.1}%)",
            row.name,
            row.mean_travel_minutes_all,
            row.pct_change_all,
            row.mean_travel_minutes_recommended,
            row.pct_change_recommended
        );
    }
    Ok(())
}

fn cmd_worst_case_demand(
    common: &ScenarioArgs,
    uncertainty_path: &Path,
    shares_path: &Path,
) -> Result<()> {
    let loaded = load(common)?;
    let bundle = &loaded.bundle;
    let model: UncertaintyModel = read_json(uncertainty_path)?;
    let shares = load_shares(shares_path, bundle)?;

    let prepared = apply_incident(&bundle.scenario, Some(&bundle.incident))?;
    let passengers = materialize_passengers(
        &bundle.nominal_demand,
        &shares,
        &bundle.index,
        common.seed,
    )?;
    let record = run_prepared(
        &prepared,
        &bundle.scenario,
        &bundle.index,
        &passengers,
        &SimConfig {
            horizon_end: default_horizon(bundle, common),
        },
    )?;
    let flows = flows_from_shares(&bundle.nominal_demand, &shares, &bundle.index)?;
    let lin = linearize(&record, &bundle.scenario, &bundle.index, &flows);
    let wd = solve_wd(&shares, &lin, &model, &bundle.index, &Default::default())?;
    let membership = model.membership(&wd.z);

    let hash = config_hash(
        &{
            let mut v = loaded.hash_inputs.clone();
            v.push(uncertainty_path.to_path_buf());
            v.push(shares_path.to_path_buf());
            v
        },
        &[format!("seed={}", common.seed)],
    )?;
    #[derive(Serialize)]
    struct WdReport {
        config_hash: String,
        objective: f64,
        z: Vec<f64>,
        ellipsoid_slack: f64,
        p1_slack: f64,
        p2_slack: f64,
        p3_slack: f64,
        clamped_cells: usize,
        demand: Vec<detour_core::scenario::DemandRecord>,
    }
    write_json(
        &common.out_dir.join("worst_case_demand.json"),
        &WdReport {
            config_hash: hash,
            objective: wd.objective,
            z: wd.z.clone(),
            ellipsoid_slack: membership.ellipsoid_slack,
            p1_slack: membership.p1_slack,
            p2_slack: membership.p2_slack,
            p3_slack: membership.p3_slack,
            clamped_cells: wd.clamped.len(),
            demand: detour_core::scenario::demand_to_records(&wd.demand, &bundle.index),
        },
    )?;
    println!(
        "worst-case objective {} over total demand {:.1} -> {}",
        wd.objective,
        wd.demand.total(),
        common.out_dir.display()
    );
    Ok(())
}

fn cmd_gen_scenario(out_dir: &Path, seed: u64) -> Result<()> {
    let synth = detour_core::synth::synthetic_disruption(seed)?;
    let (network, timetable, paths, incident, demand) = synth.to_files();
    detour_core::scenario::write_scenario_files(
        out_dir, &network, &timetable, &paths, &incident, &demand,
    )?;
    write_json(&out_dir.join("eval_demand.json"), &synth.actual_demand_file())?;
    // quick sanity: the files round-trip through the loader
    let bundle = load_bundle(out_dir)?;
    let totals: BTreeMap<&str, f64> = BTreeMap::from([
        ("nominal", bundle.nominal_demand.total()),
        ("actual", synth.actual_demand.total()),
    ]);
    println!(
        "synthetic scenario ({} stations, {} runs, demand {:?}) -> {}",
        bundle.scenario.network.stations.len(),
        bundle.scenario.timetable.runs.len(),
        totals,
        out_dir.display()
    );
    Ok(())
}
