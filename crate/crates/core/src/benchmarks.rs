//! Benchmark path-share generators: uniform, capacity-based, and status quo.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{
    DemandMatrix, Incident, PathShares, RecommendationIndex, Scenario, Seconds,
};
use crate::simulator::{apply_incident, materialize_passengers, run_prepared, SimConfig};

/// p_{hkr} = 1 / |R_k|
pub fn uniform_shares(index: &RecommendationIndex) -> PathShares {
    let mut values = vec![0.0; index.f_len()];
    for (f, &(_h, k, _r)) in index.triples.iter().enumerate() {
        values[f] = 1.0 / index.n_paths(k) as f64;
    }
    PathShares::from_raw(values)
}

/// Shares proportional to the available capacity of vehicles passing the
/// first boarding station of each path within the interval, measured on a
/// baseline loading (baseline demand, incident supply, uniform shares).
/// Rows where every path measures zero fall back to uniform; those cells are
/// reported alongside the shares.
pub fn capacity_shares(
    scenario: &Scenario,
    incident: &Incident,
    index: &RecommendationIndex,
    baseline_demand: &DemandMatrix,
    seed: u64,
) -> Result<(PathShares, Vec<(usize, usize)>)> {
    let prepared = apply_incident(scenario, Some(incident))?;
    let uniform = uniform_shares(index);
    let passengers = materialize_passengers(baseline_demand, &uniform, index, seed)?;
    let record = run_prepared(
        &prepared,
        scenario,
        index,
        &passengers,
        &SimConfig::default(),
    )?;

    // available capacity per (route, station, departure window)
    let mut values = vec![0.0; index.f_len()];
    let mut fallbacks = Vec::new();
    for h in 0..index.n_times() {
        // h₀ is the instant T_s; measure it over the first interval width
        let (lo, hi) = if h == 0 {
            (index.t_start, index.t_start + index.tau)
        } else {
            index.interval(h)
        };
        for k in 0..index.n_ods() {
            let range = index.row_range(h, k);
            let mut caps = Vec::with_capacity(range.len());
            for f in range.clone() {
                let (_, _, r) = index.triples[f];
                let leg = &index.paths[k][r].legs[0];
                let mut cap = 0.0f64;
                for run in record.runs.values() {
                    if run.route != leg.route {
                        continue;
                    }
                    for stop in &run.stops {
                        if stop.station == leg.board
                            && stop.operated
                            && stop.departure_time > lo
                            && stop.departure_time <= hi
                        {
                            cap += (run.capacity as f64 - stop.onboard_at_arrival as f64).max(0.0);
                        }
                    }
                }
                caps.push(cap);
            }
            let total: f64 = caps.iter().sum();
            if total > 0.0 {
                for (offset, f) in range.enumerate() {
                    values[f] = caps[offset] / total;
                }
            } else {
                fallbacks.push((h, k));
                let n = caps.len() as f64;
                for f in range {
                    values[f] = 1.0 / n;
                }
            }
        }
    }
    Ok((PathShares::from_raw(values), fallbacks))
}

/// Inputs for the status-quo inference: the waiting-propensity curve over
/// remaining recovery time, which path per OD is the "wait for recovery"
/// path, and the observed passenger increases on the alternative paths.
#[derive(Clone, Debug)]
pub struct StatusQuoInputs {
    /// (remaining recovery seconds, waiting proportion), piecewise linear
    pub wait_curve: Vec<(f64, f64)>,
    /// od index → path index of the waiting path
    pub waiting_path: BTreeMap<usize, usize>,
    /// (h, k, r) → observed passenger increase on that alternative
    pub observed_increases: BTreeMap<(usize, usize, usize), f64>,
}

fn interp_curve(curve: &[(f64, f64)], x: f64) -> f64 {
    debug_assert!(!curve.is_empty());
    if x <= curve[0].0 {
        return curve[0].1;
    }
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    curve.last().unwrap().1
}

/// Fix the waiting share from the curve at the interval's remaining recovery
/// time; split the rest proportionally to the observed increases.
pub fn status_quo_shares(
    index: &RecommendationIndex,
    incident_end: Seconds,
    inputs: &StatusQuoInputs,
) -> Result<PathShares> {
    if inputs.wait_curve.is_empty() {
        return Err(Error::InvalidScenario("empty wait curve".into()));
    }
    let mut curve = inputs.wait_curve.clone();
    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if curve.iter().any(|&(_, y)| !(0.0..=1.0).contains(&y)) {
        return Err(Error::InvalidScenario(
            "wait curve proportions must lie in [0, 1]".into(),
        ));
    }
    let mut values = vec![0.0; index.f_len()];
    for h in 0..index.n_times() {
        let (start, _) = index.interval(h);
        let remaining = f64::from(incident_end.saturating_sub(start));
        let wait = interp_curve(&curve, remaining);
        for k in 0..index.n_ods() {
            let range = index.row_range(h, k);
            let n_paths = range.len();
            if n_paths == 1 {
                values[index.f_index(h, k, 0)] = 1.0;
                continue;
            }
            let &wait_r = inputs.waiting_path.get(&k).ok_or_else(|| {
                Error::InvalidScenario(format!("no waiting path declared for od {k}"))
            })?;
            if wait_r >= n_paths {
                return Err(Error::InvalidScenario(format!(
                    "waiting path {wait_r} out of range for od {k}"
                )));
            }
            let increases: Vec<f64> = (0..n_paths)
                .map(|r| {
                    if r == wait_r {
                        0.0
                    } else {
                        *inputs.observed_increases.get(&(h, k, r)).unwrap_or(&0.0)
                    }
                })
                .collect();
            let total: f64 = increases.iter().sum();
            values[index.f_index(h, k, wait_r)] = wait;
            for r in 0..n_paths {
                if r == wait_r {
                    continue;
                }
                values[index.f_index(h, k, r)] = if total > 0.0 {
                    (1.0 - wait) * increases[r] / total
                } else {
                    (1.0 - wait) / (n_paths - 1) as f64
                };
            }
        }
    }
    let shares = PathShares::from_raw(values);
    shares.validate(index)?;
    Ok(shares)
}
