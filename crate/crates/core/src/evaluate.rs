//! Evaluate a share vector on a fixed demand draw: one simulation, grouped
//! travel-time summaries shaped for the comparison reports.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::model::{DemandMatrix, PathShares, RecommendationIndex, Scenario, Seconds};
use crate::simulator::{
    materialize_passengers, run_prepared, Prepared, SimConfig, SimulationRecord,
};

#[derive(Clone, Debug, Serialize)]
pub struct PathStats {
    pub k: usize,
    pub r: usize,
    pub passengers: u64,
    pub finished: u64,
    pub mean_travel_seconds: f64,
    pub mean_wait_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub n_passengers: u64,
    pub z_total: f64,
    pub mean_travel_all: f64,
    /// passengers of recommended (non-background) od pairs
    pub n_recommended: u64,
    pub mean_travel_recommended: f64,
    pub per_path: Vec<PathStats>,
    /// pid → Z contribution, for paired change distributions
    pub travel_by_pid: BTreeMap<u32, f64>,
}

/// Simulate `shares` under `demand` and summarize. `background` flags which
/// od indices are fixed background traffic rather than recommendations.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_shares(
    prepared: &Prepared,
    scenario: &Scenario,
    index: &RecommendationIndex,
    demand: &DemandMatrix,
    shares: &PathShares,
    background: &[bool],
    seed: u64,
    horizon_end: Option<Seconds>,
) -> Result<(Evaluation, SimulationRecord)> {
    let passengers = materialize_passengers(demand, shares, index, seed)?;
    let record = run_prepared(
        prepared,
        scenario,
        index,
        &passengers,
        &SimConfig { horizon_end },
    )?;
    Ok((summarize(&record, background), record))
}

pub fn summarize(record: &SimulationRecord, background: &[bool]) -> Evaluation {
    let mut per_path: BTreeMap<(usize, usize), (u64, u64, f64, f64)> = BTreeMap::new();
    let mut z_total = 0.0;
    let mut rec_total = 0.0;
    let mut n_rec = 0u64;
    let mut travel_by_pid = BTreeMap::new();
    for p in &record.passengers {
        let (_h, k, r) = p.triple;
        let t = p.travel_seconds as f64;
        z_total += t;
        travel_by_pid.insert(p.pid, t);
        let recommended = !background.get(k).copied().unwrap_or(false);
        if recommended {
            rec_total += t;
            n_rec += 1;
        }
        let entry = per_path.entry((k, r)).or_insert((0, 0, 0.0, 0.0));
        entry.0 += 1;
        if p.tap_out.is_some() {
            entry.1 += 1;
            entry.2 += t;
            let wait: f64 = p
                .legs
                .iter()
                .map(|l| (l.board_time - l.platform_arrival) as f64)
                .sum();
            entry.3 += wait;
        }
    }
    let n = record.passengers.len() as u64;
    Evaluation {
        n_passengers: n,
        z_total,
        mean_travel_all: if n > 0 { z_total / n as f64 } else { 0.0 },
        n_recommended: n_rec,
        mean_travel_recommended: if n_rec > 0 { rec_total / n_rec as f64 } else { 0.0 },
        per_path: per_path
            .into_iter()
            .map(|((k, r), (count, fin, travel, wait))| PathStats {
                k,
                r,
                passengers: count,
                finished: fin,
                mean_travel_seconds: if fin > 0 { travel / fin as f64 } else { f64::NAN },
                mean_wait_seconds: if fin > 0 { wait / fin as f64 } else { f64::NAN },
            })
            .collect(),
        travel_by_pid,
    }
}

/// Per-passenger travel-time changes against a baseline evaluation on the
/// same demand draw and seed, excluding unchanged passengers.
pub fn travel_time_changes(eval: &Evaluation, baseline: &Evaluation) -> Vec<f64> {
    let mut out = Vec::new();
    for (pid, t) in &eval.travel_by_pid {
        if let Some(t0) = baseline.travel_by_pid.get(pid) {
            let delta = t - t0;
            if delta != 0.0 {
                out.push(delta);
            }
        }
    }
    out
}
