//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values once its assertions hold. Run with
//!   cargo test -p detour-core --test acceptance -- --nocapture

use detour_conic::{ConicProgram, LinExpr, Sense, SolveOptions, SolveStatus};
use detour_core::benchmarks::{capacity_shares, uniform_shares};
use detour_core::evaluate::evaluate_shares;
use detour_core::gradient::{average_path_time, linearize};
use detour_core::model::{flows_from_shares, DemandMatrix, PathShares, RecommendationIndex, Seconds};
use detour_core::optimizer::{build_matrix_a, build_rc, msa_run, solve_wd, MsaConfig};
use detour_core::simulator::{
    apply_incident, materialize_passengers, run_prepared, Passenger, SimConfig, SimulationRecord,
};
use detour_core::synth::{example_line, random_small_scenario, synthetic_disruption, SYNTH_T_START};
use detour_core::uncertainty::{fit, mardia_statistics, UncertaintyModel};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const EVAL_SEED: u64 = 777;
const MSA_SEED: u64 = 4242;

fn horizon() -> Option<Seconds> {
    // generous drain window past the last recommendation interval
    Some(SYNTH_T_START + 5 * 600 + 3000)
}

fn msa_config() -> MsaConfig {
    MsaConfig {
        max_iters: 50,
        seed: MSA_SEED,
        horizon_end: horizon(),
        ..Default::default()
    }
}

#[test]
fn acceptance_01_gradient_exactness_on_example_line() {
    for n in [3usize, 5, 10] {
        let ex = example_line(n, 300, 1).unwrap();
        let base = detour_core::simulator::run(
            &ex.scenario,
            &ex.index,
            None,
            &ex.base_passengers,
            &SimConfig::default(),
        )
        .unwrap();
        let mut demand = DemandMatrix::zeros(&ex.index);
        for k in 0..ex.index.n_ods() {
            demand.set(&ex.index, 0, k, 1.0);
        }
        let flows =
            flows_from_shares(&demand, &uniform_shares(&ex.index), &ex.index).unwrap();
        let lin = linearize(&base, &ex.scenario, &ex.index, &flows);
        let f = ex.index.f_index(0, 0, 0);
        let t_a = average_path_time(&base, ex.rider_triple).unwrap();
        assert_eq!(lin.beta[f], t_a + (n as f64 - 1.0) * 300.0, "β formula, N={n}");

        let mut plus = ex.base_passengers.clone();
        plus.push(ex.added.clone());
        let resim = detour_core::simulator::run(
            &ex.scenario,
            &ex.index,
            None,
            &plus,
            &SimConfig::default(),
        )
        .unwrap();
        let delta = resim.z() - base.z();
        assert_eq!(delta, lin.beta[f], "re-simulated delta, N={n}");
    }
    println!("ACCEPTANCE 01 PASS — β = T^A + (N−1)·W exactly and re-simulation reproduces it for N ∈ {{3,5,10}}");
}

#[test]
fn acceptance_02_gradient_oracle_on_synthetic_scenario() {
    let synth = synthetic_disruption(42).unwrap();
    let index = &synth.index;
    let prepared = apply_incident(&synth.scenario, Some(&synth.incident)).unwrap();
    let config = SimConfig {
        horizon_end: horizon(),
    };
    let shares = uniform_shares(index);
    let passengers =
        materialize_passengers(&synth.nominal_demand, &shares, index, 123).unwrap();
    let record =
        run_prepared(&prepared, &synth.scenario, index, &passengers, &config).unwrap();
    let flows = flows_from_shares(&synth.nominal_demand, &shares, index).unwrap();
    let lin = linearize(&record, &synth.scenario, index, &flows);
    let max_headway = record
        .runs
        .values()
        .flat_map(|r| r.stops.iter())
        .filter(|s| s.operated)
        .map(|s| s.headway)
        .max()
        .unwrap() as f64;

    let mut sampled = 0;
    let mut sign_matches = 0;
    let mut within = 0;
    for (f, &(h, k, r)) in index.triples.iter().enumerate() {
        if flows.as_slice()[f] < 1.0 {
            continue;
        }
        sampled += 1;
        let mut plus = passengers.clone();
        plus.push(Passenger {
            pid: 100_000,
            triple: (h, k, r),
            origin_arrival_time: index.midpoint(h),
        });
        let resim = run_prepared(&prepared, &synth.scenario, index, &plus, &config).unwrap();
        let delta = resim.z() - record.z();
        if (delta > 0.0) == (lin.beta[f] > 0.0) {
            sign_matches += 1;
        }
        if (lin.beta[f] - delta).abs() <= 2.0 * max_headway {
            within += 1;
        }
    }
    assert!(sampled >= 20, "only {sampled} triples carry flow");
    assert_eq!(sign_matches, sampled, "sign agreement must be total");
    assert!(
        within as f64 >= 0.9 * sampled as f64,
        "{within}/{sampled} within 2 max headways"
    );
    println!(
        "ACCEPTANCE 02 PASS — {sampled} sampled triples: signs {sign_matches}/{sampled}, within 2·max-headway {within}/{sampled}"
    );
}

#[test]
fn acceptance_03_support_functions() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    // (a) ellipsoid: ρ‖y‖ dominates yᵀz over ball samples and is attained on
    // the aligned boundary point
    let dim = 24;
    let rho = 0.84;
    for _ in 0..100 {
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let support = rho * ny;
        let mut max_sample = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let mut z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius = rho * rng.random_range(0.0f64..1.0).powf(1.0 / dim as f64);
            for v in z.iter_mut() {
                *v *= radius / nz.max(1e-12);
            }
            let val: f64 = y.iter().zip(&z).map(|(a, b)| a * b).sum();
            assert!(val <= support + 1e-9, "ball sample beats the support value");
            max_sample = max_sample.max(val);
        }
        // include the aligned sphere point: the gap closes exactly
        let aligned: f64 = y.iter().map(|v| rho * v / ny.max(1e-12) * v).sum();
        max_sample = max_sample.max(aligned);
        assert!(support - max_sample <= 1e-9);
    }

    // (b) polyhedral support via the dual LP on a 2-cell fitted model,
    // checked against feasible samples plus enumerated vertices
    let toy_index = toy_index_2cells();
    let samples: Vec<DemandMatrix> = (0..8)
        .map(|_| {
            DemandMatrix::new(
                (0..2).map(|_| rng.random_range(40.0..90.0)).collect(),
                &toy_index,
            )
            .unwrap()
        })
        .collect();
    let model = fit(&samples, 1.0, 1.1, &toy_index).unwrap();
    let (h_rows, c_rhs) = polyhedron_rows(&model);
    for trial in 0..100 {
        let y: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dual = polyhedral_support_dual_lp(&h_rows, &c_rhs, &y);
        // sampled interior points never exceed the dual value
        let mut best = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let z = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            if h_rows
                .iter()
                .zip(&c_rhs)
                .all(|(row, c)| row[0] * z[0] + row[1] * z[1] <= c + 1e-12)
            {
                let v = y[0] * z[0] + y[1] * z[1];
                assert!(v <= dual + 1e-6, "trial {trial}: sample {v} > dual {dual}");
                best = best.max(v);
            }
        }
        // vertex candidates attain the support
        for i in 0..h_rows.len() {
            for j in (i + 1)..h_rows.len() {
                let det = h_rows[i][0] * h_rows[j][1] - h_rows[i][1] * h_rows[j][0];
                if det.abs() < 1e-10 {
                    continue;
                }
                let z = [
                    (c_rhs[i] * h_rows[j][1] - c_rhs[j] * h_rows[i][1]) / det,
                    (h_rows[i][0] * c_rhs[j] - h_rows[j][0] * c_rhs[i]) / det,
                ];
                if h_rows
                    .iter()
                    .zip(&c_rhs)
                    .all(|(row, c)| row[0] * z[0] + row[1] * z[1] <= c + 1e-7)
                {
                    best = best.max(y[0] * z[0] + y[1] * z[1]);
                }
            }
        }
        assert!(
            (dual - best).abs() <= 1e-3 * dual.abs().max(1.0),
            "trial {trial}: dual {dual} vs sampled max {best}"
        );
    }
    println!("ACCEPTANCE 03 PASS — ellipsoid support exact on aligned samples; polyhedral dual LP matches sampled max within 1e-3");
}

/// 1 interval (h0), 2 ods with one path each → 2 cells.
fn toy_index_2cells() -> RecommendationIndex {
    let od = |name: &str| detour_core::model::OdPaths {
        origin: name.into(),
        destination: "s3".into(),
        paths: vec![detour_core::model::Path {
            legs: vec![detour_core::model::Leg {
                board: name.into(),
                route: "line".into(),
                alight: "s3".into(),
            }],
            access_seconds: 0,
            egress_seconds: 0,
        }],
    };
    let ex = example_line(3, 300, 1).unwrap();
    detour_core::model::build_index(
        &[od("s1"), od("s2")],
        &ex.scenario.network,
        600,
        0,
        2000,
    )
    .unwrap()
}

/// All rows Hz ≤ c of Z_P1 ∩ Z_P2 ∩ Z_P3 for a 2-cell model.
fn polyhedron_rows(model: &UncertaintyModel) -> (Vec<[f64; 2]>, Vec<f64>) {
    let d = |i: usize, j: usize| model.factor_entry(i, j);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..2 {
        rows.push([d(i, 0), d(i, 1)]);
        rhs.push(model.d_upper[i] - model.d_bar[i]);
        rows.push([-d(i, 0), -d(i, 1)]);
        rhs.push(model.d_bar[i] - model.d_lower[i]);
    }
    // one interval: S sums both cells
    let s_bar: f64 = model.d_bar.iter().sum();
    rows.push([d(0, 0) + d(1, 0), d(0, 1) + d(1, 1)]);
    rhs.push(model.interval_upper[0] - s_bar);
    rows.push([-(d(0, 0) + d(1, 0)), -(d(0, 1) + d(1, 1))]);
    rhs.push(s_bar - model.interval_lower[0]);
    rows.push([d(0, 0) + d(1, 0), d(0, 1) + d(1, 1)]);
    rhs.push((model.gamma - 1.0) * s_bar);
    (rows, rhs)
}

/// δ*(y | {Hz ≤ c}) = min { cᵀu : Hᵀu = y, u ≥ 0 } by LP duality.
fn polyhedral_support_dual_lp(rows: &[[f64; 2]], rhs: &[f64], y: &[f64]) -> f64 {
    let m = rows.len();
    let mut prog = ConicProgram::new(m, Sense::Minimize);
    for (i, c) in rhs.iter().enumerate() {
        prog.set_objective_term(i, *c);
        prog.set_lower(i, 0.0);
    }
    for col in 0..2 {
        let terms: Vec<(usize, f64)> = rows.iter().enumerate().map(|(i, r)| (i, r[col])).collect();
        prog.add_eq(terms, y[col]);
    }
    let sol = prog.solve(&SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    sol.objective
}

#[test]
fn acceptance_04_rc_matches_grid_min_max_on_one_cell_toy() {
    // 1 interval, 1 od, 2 paths; exact inner maximization per grid point
    let ex = example_line(3, 300, 1).unwrap();
    let od = detour_core::model::OdPaths {
        origin: "s1".into(),
        destination: "s3".into(),
        paths: vec![
            detour_core::model::Path {
                legs: vec![detour_core::model::Leg {
                    board: "s1".into(),
                    route: "line".into(),
                    alight: "s3".into(),
                }],
                access_seconds: 0,
                egress_seconds: 0,
            };
            2
        ],
    };
    let index =
        detour_core::model::build_index(&[od], &ex.scenario.network, 600, 0, 2000).unwrap();
    let beta = vec![300.0, 500.0];
    let f_ref = vec![50.0, 50.0];
    let z_tilde = 40_000.0;
    let lin = detour_core::gradient::LinearizationResult {
        z_tilde,
        beta: beta.clone(),
        terms: beta
            .iter()
            .map(|b| detour_core::gradient::GradientTerms {
                t_a: *b,
                t_q: 0.0,
                t_o: 0.0,
            })
            .collect(),
        reference_flows: detour_core::model::PathFlows::from_values(f_ref.clone(), &index)
            .unwrap(),
    };
    let model = UncertaintyModel {
        n_times: 1,
        n_ods: 1,
        d_bar: vec![100.0],
        cholesky_row_major: vec![8.0],
        d_lower: vec![85.0],
        d_upper: vec![115.0],
        interval_lower: vec![85.0],
        interval_upper: vec![115.0],
        gamma: 1.2,
        rho: 0.84,
    };
    let (prog, _) = build_rc(&lin, &model, &index).unwrap();
    let sol = prog.solve(&SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);

    let d = model.cholesky_row_major[0];
    let zmax = model
        .rho
        .min((model.d_upper[0] - model.d_bar[0]) / d)
        .min((model.gamma - 1.0) * model.d_bar[0] / d);
    let zmin = (-model.rho).max((model.d_lower[0] - model.d_bar[0]) / d);
    let steps = 4000;
    let mut grid_best = f64::INFINITY;
    for i in 0..=steps {
        let p1 = i as f64 / steps as f64;
        let q = beta[0] * p1 + beta[1] * (1.0 - p1);
        let inner = (q * d * zmin).max(q * d * zmax);
        let value = q * model.d_bar[0] + inner + z_tilde - beta[0] * f_ref[0] - beta[1] * f_ref[1];
        grid_best = grid_best.min(value);
    }
    let rel = (sol.objective - grid_best).abs() / grid_best.abs().max(1.0);
    assert!(rel <= 1e-3, "rc {} vs grid {}", sol.objective, grid_best);
    println!(
        "ACCEPTANCE 04 PASS — RC optimum {:.3} matches grid min-max {:.3} (rel {:.2e})",
        sol.objective, grid_best, rel
    );
}

#[test]
fn acceptance_05_wd_dominates_sampled_perturbations() {
    let synth = synthetic_disruption(42).unwrap();
    let index = &synth.index;
    let model = fit(&synth.samples, 0.84, 1.1, index).unwrap();
    let dim = model.dim();
    let beta: Vec<f64> = {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        (0..index.f_len()).map(|_| rng.random_range(100.0..2000.0)).collect()
    };
    let lin = detour_core::gradient::LinearizationResult {
        z_tilde: 0.0,
        beta: beta.clone(),
        terms: beta
            .iter()
            .map(|b| detour_core::gradient::GradientTerms {
                t_a: *b,
                t_q: 0.0,
                t_o: 0.0,
            })
            .collect(),
        reference_flows: detour_core::model::PathFlows::from_values(
            vec![0.0; index.f_len()],
            index,
        )
        .unwrap(),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let a = build_matrix_a(&lin, index);
    for trial in 0..10 {
        let mut values: Vec<f64> = (0..index.f_len()).map(|_| rng.random_range(0.01..1.0)).collect();
        for h in 0..index.n_times() {
            for k in 0..index.n_ods() {
                let range = index.row_range(h, k);
                let s: f64 = values[range.clone()].iter().sum();
                for f in range {
                    values[f] /= s;
                }
            }
        }
        let shares = PathShares::new(values, index).unwrap();
        let wd = solve_wd(&shares, &lin, &model, index, &SolveOptions::default()).unwrap();
        let mut checked = 0u32;
        while checked < 10_000 {
            let mut z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius = model.rho * rng.random_range(0.0f64..1.0);
            for v in z.iter_mut() {
                *v *= radius / norm.max(1e-12);
            }
            if !model.membership(&z).in_all() {
                continue;
            }
            checked += 1;
            let adz = a.apply_cells(&model.apply_factor(&z));
            let val: f64 = adz.iter().zip(shares.as_slice()).map(|(x, y)| x * y).sum();
            assert!(
                val <= wd.objective + 1e-6 * wd.objective.abs().max(1.0),
                "trial {trial}: sampled {val} beats WD {}",
                wd.objective
            );
        }
    }
    println!("ACCEPTANCE 05 PASS — WD objective dominates 10×10,000 sampled feasible perturbations");
}

#[test]
fn acceptance_06_conic_kkt_and_grid_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let mut worst_resid = 0.0f64;
    let mut worst_rel = 0.0f64;
    for trial in 0..100 {
        let d = if trial % 2 == 0 { 2 } else { 3 };
        let (prog, oracle) = random_socp(&mut rng, d);
        let sol = prog.solve(&SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
        worst_resid = worst_resid.max(sol.residuals.max());
        assert!(
            sol.residuals.max() <= 1e-8,
            "trial {trial}: residuals {:?}",
            sol.residuals
        );
        let exact = enumerate_minimum(&oracle, d);
        let rel = (sol.objective - exact).abs() / exact.abs().max(1.0);
        worst_rel = worst_rel.max(rel);
        assert!(rel <= 1e-4, "trial {trial}: solver {} vs {}", sol.objective, exact);
    }
    println!(
        "ACCEPTANCE 06 PASS — 100 random SOCPs: max residual {worst_resid:.2e}, max oracle gap {worst_rel:.2e}"
    );
}

#[test]
fn acceptance_07_simulator_invariant_suite() {
    let mut violations = 0;
    for seed in 0..50u64 {
        let (scenario, incident, index, demand) = random_small_scenario(seed).unwrap();
        let shares = uniform_shares(&index);
        let passengers = materialize_passengers(&demand, &shares, &index, seed).unwrap();
        let r1 = detour_core::simulator::run(
            &scenario,
            &index,
            Some(&incident),
            &passengers,
            &SimConfig::default(),
        )
        .unwrap();
        let r2 = detour_core::simulator::run(
            &scenario,
            &index,
            Some(&incident),
            &passengers,
            &SimConfig::default(),
        )
        .unwrap();
        if serde_json::to_string(&r1).unwrap() != serde_json::to_string(&r2).unwrap() {
            violations += 1;
        }
        violations += invariant_violations(&r1, passengers.len());
    }
    assert_eq!(violations, 0);
    println!("ACCEPTANCE 07 PASS — conservation, capacity, FCFS, determinism: 0 violations over 50 seeds");
}

fn invariant_violations(record: &SimulationRecord, n_passengers: usize) -> u32 {
    let mut violations = 0;
    let c = &record.counts;
    if c.finished + c.onboard_at_horizon + c.queued_at_horizon + c.stranded != n_passengers as u64 {
        violations += 1;
    }
    for run_rec in record.runs.values() {
        for stop in &run_rec.stops {
            if stop.onboard_after_departure > run_rec.capacity
                || stop.onboard_at_arrival > run_rec.capacity
            {
                violations += 1;
            }
        }
    }
    for p in &record.passengers {
        for leg in &p.legs {
            for q in &record.passengers {
                for leg2 in &q.legs {
                    if leg.board_station == leg2.board_station
                        && record.runs[&leg.run].route == record.runs[&leg2.run].route
                        && leg.platform_arrival < leg2.platform_arrival
                        && leg.board_time > leg2.board_time
                    {
                        violations += 1;
                    }
                }
            }
        }
        let mut last = p.tap_in;
        for leg in &p.legs {
            if leg.platform_arrival < last || leg.board_time < leg.platform_arrival {
                violations += 1;
            }
            last = leg.board_time;
            if let Some(t) = leg.alight_time {
                if t < last {
                    violations += 1;
                }
                last = t;
            }
        }
    }
    violations
}

#[test]
fn acceptance_08_nominal_gain_over_benchmarks() {
    let synth = synthetic_disruption(42).unwrap();
    let index = &synth.index;
    let prepared = apply_incident(&synth.scenario, Some(&synth.incident)).unwrap();
    let bg = &synth.background_ods;

    let model = fit(&synth.samples, 0.0, 1.1, index).unwrap();
    let nominal = msa_run(
        &synth.scenario,
        &[(synth.incident.clone(), 1.0)],
        &model,
        index,
        &msa_config(),
    )
    .unwrap();

    let evaluate = |shares: &PathShares| {
        evaluate_shares(
            &prepared,
            &synth.scenario,
            index,
            &synth.actual_demand,
            shares,
            bg,
            EVAL_SEED,
            horizon(),
        )
        .unwrap()
        .0
    };
    let e_opt = evaluate(&nominal.shares);
    let e_uni = evaluate(&uniform_shares(index));
    let (cap, _) = capacity_shares(
        &synth.scenario,
        &synth.incident,
        index,
        &synth.nominal_demand,
        31,
    )
    .unwrap();
    let e_cap = evaluate(&cap);

    let gain_uniform = (e_uni.mean_travel_all - e_opt.mean_travel_all) / e_uni.mean_travel_all;
    let gain_capacity = (e_cap.mean_travel_all - e_opt.mean_travel_all) / e_cap.mean_travel_all;
    assert!(
        gain_uniform >= 0.05,
        "gain vs uniform {:.2}% below 5%",
        100.0 * gain_uniform
    );
    assert!(
        gain_capacity >= 0.01,
        "gain vs capacity {:.2}% below 1%",
        100.0 * gain_capacity
    );
    println!(
        "ACCEPTANCE 08 PASS — nominal optimization: {:.1} min vs uniform {:.1} min (−{:.1}%) and capacity {:.1} min (−{:.1}%)",
        e_opt.mean_travel_all / 60.0,
        e_uni.mean_travel_all / 60.0,
        100.0 * gain_uniform,
        e_cap.mean_travel_all / 60.0,
        100.0 * gain_capacity
    );
}

#[test]
fn acceptance_09_msa_converges_within_50_iterations() {
    let synth = synthetic_disruption(42).unwrap();
    let index = &synth.index;
    let model = fit(&synth.samples, 0.0, 1.1, index).unwrap();
    let result = msa_run(
        &synth.scenario,
        &[(synth.incident.clone(), 1.0)],
        &model,
        index,
        &msa_config(),
    )
    .unwrap();
    assert!(result.converged, "did not converge within 50 iterations");
    assert!(result.trace.len() <= 50);
    println!(
        "ACCEPTANCE 09 PASS — windowed Z criterion met after {} iterations (ε = {:.0} pax·s)",
        result.trace.len(),
        result.epsilon
    );
}

#[test]
fn acceptance_10_robust_value() {
    let synth = synthetic_disruption(42).unwrap();
    let index = &synth.index;
    let prepared = apply_incident(&synth.scenario, Some(&synth.incident)).unwrap();
    let bg = &synth.background_ods;
    let config = msa_config();

    let nominal_model = fit(&synth.samples, 0.0, 1.1, index).unwrap();
    let nominal = msa_run(
        &synth.scenario,
        &[(synth.incident.clone(), 1.0)],
        &nominal_model,
        index,
        &config,
    )
    .unwrap();

    let mut robust = Vec::new();
    for rho in [0.52, 0.84, 1.28] {
        let model = fit(&synth.samples, rho, 1.1, index).unwrap();
        let result = msa_run(
            &synth.scenario,
            &[(synth.incident.clone(), 1.0)],
            &model,
            index,
            &config,
        )
        .unwrap();
        robust.push((rho, model, result));
    }

    // (a) final common linearization: the robust shares' worst case never
    // exceeds the nominal shares' worst case under the same uncertainty set
    let flows = flows_from_shares(&synth.nominal_demand, &nominal.shares, index).unwrap();
    let pax =
        materialize_passengers(&synth.nominal_demand, &nominal.shares, index, 999).unwrap();
    let record = run_prepared(
        &prepared,
        &synth.scenario,
        index,
        &pax,
        &SimConfig {
            horizon_end: horizon(),
        },
    )
    .unwrap();
    let lin = linearize(&record, &synth.scenario, index, &flows);
    for (rho, model, result) in &robust {
        let wd_rob = solve_wd(&result.shares, &lin, model, index, &SolveOptions::default())
            .unwrap()
            .objective;
        let wd_nom = solve_wd(&nominal.shares, &lin, model, index, &SolveOptions::default())
            .unwrap()
            .objective;
        assert!(
            wd_rob <= wd_nom + 1e-6,
            "rho={rho}: robust worst case {wd_rob} exceeds nominal {wd_nom}"
        );
    }

    // (b) at least one interior ρ beats the nominal on a demand drawn near
    // the uncertainty boundary
    let boundary_model = &robust[1].1;
    let mut rng = ChaCha12Rng::seed_from_u64(31337);
    let dim = boundary_model.dim();
    let mut z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in z.iter_mut() {
        *v *= 0.9 * boundary_model.rho / norm;
    }
    let mut scale = 1.0;
    let zb = loop {
        let zs: Vec<f64> = z.iter().map(|v| v * scale).collect();
        if boundary_model.membership(&zs).in_all() {
            break zs;
        }
        scale *= 0.8;
    };
    let boundary_demand = boundary_model.realize(&zb, index).unwrap().demand;
    let evaluate = |shares: &PathShares| {
        evaluate_shares(
            &prepared,
            &synth.scenario,
            index,
            &boundary_demand,
            shares,
            bg,
            EVAL_SEED,
            horizon(),
        )
        .unwrap()
        .0
        .mean_travel_all
    };
    let nominal_time = evaluate(&nominal.shares);
    let mut improvements = Vec::new();
    for (rho, _, result) in &robust {
        let t = evaluate(&result.shares);
        if t <= nominal_time {
            improvements.push(*rho);
        }
    }
    assert!(
        !improvements.is_empty(),
        "no robust solution matched the nominal on the boundary demand"
    );
    println!(
        "ACCEPTANCE 10 PASS — robust worst-case ≤ nominal for ρ ∈ {{0.52, 0.84, 1.28}}; ρ {improvements:?} beat the nominal on the boundary draw"
    );
}

#[test]
fn acceptance_11_mardia_monte_carlo_calibration() {
    use rand_distr::{Distribution, StandardNormal};
    let reps = 100;
    let mut accepted = 0;
    for rep in 0..reps {
        let mut rng = ChaCha12Rng::seed_from_u64(9_000 + rep);
        let vectors: Vec<Vec<f64>> = (0..150)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        25.0 + 4.0 * z
                    })
                    .collect()
            })
            .collect();
        let res = mardia_statistics(&vectors).unwrap();
        if res.p_skewness > 0.05 {
            accepted += 1;
        }
    }
    assert!(
        accepted as f64 >= 0.9 * reps as f64,
        "skewness accepted only {accepted}/{reps}"
    );
    println!(
        "ACCEPTANCE 11 PASS — skewness p > 0.05 in {accepted}/{reps} repetitions on true multivariate normal draws"
    );
}

// ---------------------------------------------------------------------------
// random SOCP generator + exact enumeration oracle (criterion 6)
// ---------------------------------------------------------------------------

struct OracleProblem {
    c: Vec<f64>,
    constant: f64,
    ineqs: Vec<(Vec<f64>, f64)>,
    center: Vec<f64>,
    radius: f64,
}

fn random_socp(rng: &mut ChaCha12Rng, d: usize) -> (ConicProgram, OracleProblem) {
    let x0: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut prog = ConicProgram::new(d, Sense::Minimize);
    let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let constant = rng.random_range(2.0..4.0);
    for (j, v) in c.iter().enumerate() {
        prog.set_objective_term(j, *v);
        prog.set_lower(j, -1.0);
        prog.set_upper(j, 2.0);
    }
    prog.add_objective_constant(constant);
    let mut ineqs = Vec::new();
    for _ in 0..2 {
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        let a: Vec<f64> = a.iter().map(|v| v / norm).collect();
        let slack = rng.random_range(0.3..1.0);
        let rhs = a.iter().zip(x0.iter()).map(|(u, v)| u * v).sum::<f64>() + slack;
        prog.add_ineq(a.iter().cloned().enumerate().collect(), rhs);
        ineqs.push((a, rhs));
    }
    let center: Vec<f64> = x0.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
    let radius = rng.random_range(0.6..1.5);
    let tail: Vec<LinExpr> = (0..d)
        .map(|j| LinExpr {
            terms: vec![(j, 1.0)],
            constant: -center[j],
        })
        .collect();
    prog.add_soc(LinExpr::constant(radius), tail);
    (
        prog,
        OracleProblem {
            c,
            constant,
            ineqs,
            center,
            radius,
        },
    )
}

impl OracleProblem {
    fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + self.constant
    }

    fn feasible(&self, x: &[f64]) -> bool {
        for v in x {
            if *v < -1.0 - 1e-7 || *v > 2.0 + 1e-7 {
                return false;
            }
        }
        for (a, rhs) in &self.ineqs {
            if a.iter().zip(x.iter()).map(|(u, v)| u * v).sum::<f64>() > rhs + 1e-7 {
                return false;
            }
        }
        let dist2: f64 = self
            .center
            .iter()
            .zip(x.iter())
            .map(|(c, v)| (v - c) * (v - c))
            .sum();
        dist2.sqrt() <= self.radius + 1e-7
    }

    fn planes(&self, d: usize) -> Vec<(Vec<f64>, f64)> {
        let mut planes = self.ineqs.clone();
        for j in 0..d {
            let mut up = vec![0.0; d];
            up[j] = 1.0;
            planes.push((up, 2.0));
            let mut lo = vec![0.0; d];
            lo[j] = -1.0;
            planes.push((lo, 1.0));
        }
        planes
    }
}

/// Exact brute force for a linear objective over planes ∩ ball in d ≤ 3:
/// enumerate every candidate optimum and keep the best feasible one.
fn enumerate_minimum(problem: &OracleProblem, d: usize) -> f64 {
    let planes = problem.planes(d);
    let o = &problem.center;
    let r = problem.radius;
    let c = &problem.c;
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let dotv = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let norm = |a: &[f64]| -> f64 { dotv(a, a).sqrt() };

    let cn = norm(c);
    if cn > 1e-12 {
        candidates.push((0..d).map(|j| o[j] - r * c[j] / cn).collect());
    }
    for (a, b) in &planes {
        let an2 = dotv(a, a);
        let t = (b - dotv(a, o)) / an2;
        let center: Vec<f64> = (0..d).map(|j| o[j] + t * a[j]).collect();
        let r2 = r * r - t * t * an2;
        if r2 < 0.0 {
            continue;
        }
        let rr = r2.sqrt();
        if d == 2 {
            let u = [-a[1], a[0]];
            let un = norm(&u);
            for sgn in [-1.0, 1.0] {
                candidates.push(vec![
                    center[0] + sgn * rr * u[0] / un,
                    center[1] + sgn * rr * u[1] / un,
                ]);
            }
        } else {
            let ca = dotv(c, a) / an2;
            let cp: Vec<f64> = (0..d).map(|j| c[j] - ca * a[j]).collect();
            let cpn = norm(&cp);
            if cpn > 1e-12 {
                candidates.push((0..d).map(|j| center[j] - rr * cp[j] / cpn).collect());
            }
        }
    }
    if d == 2 {
        for i in 0..planes.len() {
            for j in (i + 1)..planes.len() {
                let (a1, b1) = &planes[i];
                let (a2, b2) = &planes[j];
                let det = a1[0] * a2[1] - a1[1] * a2[0];
                if det.abs() < 1e-10 {
                    continue;
                }
                candidates.push(vec![
                    (b1 * a2[1] - b2 * a1[1]) / det,
                    (a1[0] * b2 - a2[0] * b1) / det,
                ]);
            }
        }
    } else {
        for i in 0..planes.len() {
            for j in (i + 1)..planes.len() {
                for k in (j + 1)..planes.len() {
                    if let Some(x) = solve3(
                        &planes[i].0,
                        &planes[j].0,
                        &planes[k].0,
                        planes[i].1,
                        planes[j].1,
                        planes[k].1,
                    ) {
                        candidates.push(x);
                    }
                }
            }
        }
        for i in 0..planes.len() {
            for j in (i + 1)..planes.len() {
                let a1 = &planes[i].0;
                let a2 = &planes[j].0;
                let u = vec![
                    a1[1] * a2[2] - a1[2] * a2[1],
                    a1[2] * a2[0] - a1[0] * a2[2],
                    a1[0] * a2[1] - a1[1] * a2[0],
                ];
                if norm(&u) < 1e-10 {
                    continue;
                }
                if let Some(p) = solve3(a1, a2, &u, planes[i].1, planes[j].1, dotv(&u, o)) {
                    let w: Vec<f64> = p.iter().zip(o).map(|(x, y)| x - y).collect();
                    let uu = dotv(&u, &u);
                    let disc = dotv(&u, &w) * dotv(&u, &w) - uu * (dotv(&w, &w) - r * r);
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for sgn in [-1.0, 1.0] {
                            let t = (-dotv(&u, &w) + sgn * sq) / uu;
                            candidates.push((0..d).map(|m| p[m] + t * u[m]).collect());
                        }
                    }
                }
            }
        }
    }
    let mut best = f64::INFINITY;
    for x in &candidates {
        if problem.feasible(x) {
            best = best.min(problem.objective(x));
        }
    }
    assert!(best.is_finite(), "enumeration found no feasible candidate");
    best
}

#[allow(clippy::needless_range_loop)]
fn solve3(a1: &[f64], a2: &[f64], a3: &[f64], b1: f64, b2: f64, b3: f64) -> Option<Vec<f64>> {
    let m = [a1, a2, a3];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-10 {
        return None;
    }
    let b = [b1, b2, b3];
    let mut x = vec![0.0; 3];
    for col in 0..3 {
        let mut mm = [[0.0; 3]; 3];
        for row in 0..3 {
            for cc in 0..3 {
                mm[row][cc] = if cc == col { b[row] } else { m[row][cc] };
            }
        }
        let dc = mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1])
            - mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0])
            + mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0]);
        x[col] = dc / det;
    }
    Some(x)
}
