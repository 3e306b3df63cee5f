use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn detour(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detour"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn detour_ok(args: &[&str]) -> Output {
    let out = detour(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_scenario(dir: &Path) {
    detour_ok(&[
        "gen-scenario",
        "--out-dir",
        dir.to_str().unwrap(),
        "--seed",
        "42",
    ]);
}

#[test]
fn simulate_is_deterministic_under_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scenario");
    gen_scenario(&scen);
    for run in ["a", "b"] {
        detour_ok(&[
            "simulate",
            "--scenario",
            scen.to_str().unwrap(),
            "--seed",
            "7",
            "--out-dir",
            tmp.path().join(run).to_str().unwrap(),
        ]);
    }
    for file in ["summary.json", "trajectories.csv"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn simulate_empty_demand_reports_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scenario");
    gen_scenario(&scen);
    let empty = tmp.path().join("empty_demand.json");
    fs::write(&empty, r#"{"nominal": [], "samples": []}"#).unwrap();
    detour_ok(&[
        "simulate",
        "--scenario",
        scen.to_str().unwrap(),
        "--demand",
        empty.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["z_total_passenger_seconds"], 0.0);
    assert_eq!(summary["n_passengers"], 0);
}

#[test]
fn validation_failure_exits_nonzero_with_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scenario");
    gen_scenario(&scen);
    // corrupt the paths file with an unknown route
    let paths = fs::read_to_string(scen.join("paths.json")).unwrap();
    fs::write(scen.join("paths.json"), paths.replace("\"pbus\"", "\"ghost\"")).unwrap();
    let out = detour(&[
        "simulate",
        "--scenario",
        scen.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("stderr is machine-readable json");
    assert!(err["error"].as_str().unwrap().contains("ghost"));
}

#[test]
fn optimize_writes_one_share_file_per_rho_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scenario");
    gen_scenario(&scen);
    detour_ok(&[
        "optimize",
        "--scenario",
        scen.to_str().unwrap(),
        "--seed",
        "4242",
        "--max-iters",
        "30",
        "--out-dir",
        tmp.path().join("grid").to_str().unwrap(),
    ]);
    let shares: Vec<_> = fs::read_dir(tmp.path().join("grid"))
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.starts_with("shares_rho_").then_some(name)
        })
        .collect();
    assert_eq!(shares.len(), 7, "expected one share file per grid value: {shares:?}");

    for run in ["d1", "d2"] {
        detour_ok(&[
            "optimize",
            "--scenario",
            scen.to_str().unwrap(),
            "--rho-grid",
            "0.52",
            "--seed",
            "4242",
            "--max-iters",
            "30",
            "--out-dir",
            tmp.path().join(run).to_str().unwrap(),
        ]);
    }
    let a = fs::read(tmp.path().join("d1/trace_rho_0.52.csv")).unwrap();
    let b = fs::read(tmp.path().join("d2/trace_rho_0.52.csv")).unwrap();
    assert_eq!(a, b, "optimize traces differ under a fixed seed");
}

#[test]
fn evaluate_against_self_is_zero_change() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scenario");
    gen_scenario(&scen);
    detour_ok(&[
        "benchmark-shares",
        "--scenario",
        scen.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("bench").to_str().unwrap(),
    ]);
    detour_ok(&[
        "evaluate",
        "--scenario",
        scen.to_str().unwrap(),
        "--demand",
        scen.join("eval_demand.json").to_str().unwrap(),
        "--shares",
        tmp.path().join("bench/uniform_shares.json").to_str().unwrap(),
        "--out-dir",
        tmp.path().join("eval").to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("eval/evaluation.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["rows"][0]["pct_change_all"], 0.0);
    assert_eq!(report["baseline"], "uniform_shares");
}

#[test]
fn worst_case_demand_stays_in_the_uncertainty_set() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scenario");
    gen_scenario(&scen);
    detour_ok(&[
        "fit-uncertainty",
        "--scenario",
        scen.to_str().unwrap(),
        "--rho",
        "0.84",
        "--out-dir",
        tmp.path().join("unc").to_str().unwrap(),
    ]);
    detour_ok(&[
        "benchmark-shares",
        "--scenario",
        scen.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("bench").to_str().unwrap(),
    ]);
    detour_ok(&[
        "worst-case-demand",
        "--scenario",
        scen.to_str().unwrap(),
        "--uncertainty",
        tmp.path().join("unc/uncertainty.json").to_str().unwrap(),
        "--shares",
        tmp.path().join("bench/uniform_shares.json").to_str().unwrap(),
        "--out-dir",
        tmp.path().join("wd").to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("wd/worst_case_demand.json")).unwrap(),
    )
    .unwrap();
    for slack in ["ellipsoid_slack", "p1_slack", "p2_slack", "p3_slack"] {
        assert!(
            report[slack].as_f64().unwrap() >= -1e-6,
            "{slack} negative: {}",
            report[slack]
        );
    }
    assert!(report["objective"].as_f64().unwrap() > 0.0);
}
