//! Report writers: simulation summaries, trajectory/trace/β CSVs, and the
//! share-comparison tables.

use std::fmt::Write as _;

use serde::Serialize;

use detour_core::evaluate::Evaluation;
use detour_core::gradient::LinearizationResult;
use detour_core::model::RecommendationIndex;
use detour_core::optimizer::MsaIteration;
use detour_core::simulator::{trajectory_rows, SimulationRecord, TerminalCounts};

#[derive(Serialize)]
pub struct SimulationSummary {
    pub config_hash: String,
    pub z_total_passenger_seconds: f64,
    pub n_passengers: u64,
    pub mean_travel_seconds_all: f64,
    pub mean_travel_seconds_recommended: f64,
    pub terminal_counts: TerminalCounts,
    pub left_behind_events: u64,
    pub per_path: Vec<PathRow>,
}

#[derive(Serialize)]
pub struct PathRow {
    pub origin: String,
    pub destination: String,
    pub path: usize,
    pub passengers: u64,
    pub finished: u64,
    pub mean_travel_seconds: f64,
    pub mean_wait_seconds: f64,
}

pub fn simulation_summary(
    eval: &Evaluation,
    record: &SimulationRecord,
    index: &RecommendationIndex,
    config_hash: String,
) -> SimulationSummary {
    SimulationSummary {
        config_hash,
        z_total_passenger_seconds: eval.z_total,
        n_passengers: eval.n_passengers,
        mean_travel_seconds_all: eval.mean_travel_all,
        mean_travel_seconds_recommended: eval.mean_travel_recommended,
        terminal_counts: record.counts,
        left_behind_events: record.left_behind_events,
        per_path: eval
            .per_path
            .iter()
            .map(|p| {
                let (o, d) = &index.ods[p.k];
                PathRow {
                    origin: o.0.clone(),
                    destination: d.0.clone(),
                    path: p.r,
                    passengers: p.passengers,
                    finished: p.finished,
                    mean_travel_seconds: p.mean_travel_seconds,
                    mean_wait_seconds: p.mean_wait_seconds,
                }
            })
            .collect(),
    }
}

pub fn trajectories_csv(record: &SimulationRecord, index: &RecommendationIndex) -> String {
    let mut out = String::from("pid,h,k,r,event_type,time,station,run_id\n");
    for row in trajectory_rows(record, index) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.pid,
            row.h,
            row.k,
            row.r,
            row.event,
            row.time,
            row.station.map(|s| s.0).unwrap_or_default(),
            row.run.map(|r| r.0).unwrap_or_default()
        );
    }
    out
}

pub fn trace_csv(trace: &[MsaIteration]) -> String {
    let mut out = String::from("t,z,rc_objective,wd_objective,max_share_change\n");
    for it in trace {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            it.t,
            it.z,
            fmt(it.rc_objective),
            fmt(it.wd_objective),
            fmt(it.max_share_change)
        );
    }
    out
}

pub fn beta_csv(lin: &LinearizationResult, index: &RecommendationIndex) -> String {
    let mut out = String::from("h,k,r,beta_seconds,TA,TQ,TO\n");
    for (f, &(h, k, r)) in index.triples.iter().enumerate() {
        let t = &lin.terms[f];
        let _ = writeln!(
            out,
            "{h},{k},{r},{},{},{},{}",
            lin.beta[f], t.t_a, t.t_q, t.t_o
        );
    }
    out
}

#[derive(Serialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub n_passengers: u64,
    pub mean_travel_minutes_all: f64,
    pub pct_change_all: f64,
    pub n_recommended: u64,
    pub mean_travel_minutes_recommended: f64,
    pub pct_change_recommended: f64,
}

pub fn comparison_row(name: &str, eval: &Evaluation, baseline: &Evaluation) -> ComparisonRow {
    let pct = |v: f64, b: f64| if b > 0.0 { 100.0 * (v - b) / b } else { 0.0 };
    ComparisonRow {
        name: name.to_string(),
        n_passengers: eval.n_passengers,
        mean_travel_minutes_all: eval.mean_travel_all / 60.0,
        pct_change_all: pct(eval.mean_travel_all, baseline.mean_travel_all),
        n_recommended: eval.n_recommended,
        mean_travel_minutes_recommended: eval.mean_travel_recommended / 60.0,
        pct_change_recommended: pct(
            eval.mean_travel_recommended,
            baseline.mean_travel_recommended,
        ),
    }
}

pub fn per_path_csv(eval: &Evaluation, index: &RecommendationIndex) -> String {
    let mut out = String::from("origin,destination,path,passengers,finished,mean_travel_seconds,mean_wait_seconds\n");
    for p in &eval.per_path {
        let (o, d) = &index.ods[p.k];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            o.0, d.0, p.r, p.passengers, p.finished, p.mean_travel_seconds, p.mean_wait_seconds
        );
    }
    out
}

pub fn changes_csv(changes: &[f64]) -> String {
    let mut out = String::from("travel_time_change_seconds\n");
    for c in changes {
        let _ = writeln!(out, "{c}");
    }
    out
}
