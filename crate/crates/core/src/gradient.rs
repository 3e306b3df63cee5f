//! Sim-FOA: extract Z(f̃) and the full gradient β(f̃) from one simulation
//! record without re-simulation.
//!
//! For a triple with passengers M_{hkr}, the marginal cost of one extra unit
//! decomposes into the member's own average travel time T^A, the extra
//! headway paid by passengers queued behind at each boarding station (T^Q),
//! and the extra headway paid at stations the member rides through while the
//! vehicle departs full (T^O). Triples carrying no flow are priced by tracing
//! a virtual passenger through the recorded vehicle states.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{PathFlows, RecommendationIndex, RunId, Scenario, Seconds, StationId};
use crate::simulator::{PassengerRecord, SimulationRecord, TerminalState};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradientTerms {
    pub t_a: f64,
    pub t_q: f64,
    pub t_o: f64,
}

impl GradientTerms {
    pub fn beta(&self) -> f64 {
        self.t_a + self.t_q + self.t_o
    }
}

#[derive(Clone, Debug)]
pub struct LinearizationResult {
    /// Z(f̃), passenger-seconds
    pub z_tilde: f64,
    /// β over F, seconds per unit flow
    pub beta: Vec<f64>,
    /// decomposition per F entry, for audit export
    pub terms: Vec<GradientTerms>,
    pub reference_flows: PathFlows,
}

impl LinearizationResult {
    /// Ẑ(f) = Z(f̃) + βᵀ(f − f̃)
    pub fn predict(&self, flows: &PathFlows) -> f64 {
        let mut z = self.z_tilde;
        for ((b, f), fr) in self
            .beta
            .iter()
            .zip(flows.as_slice())
            .zip(self.reference_flows.as_slice())
        {
            z += b * (f - fr);
        }
        z
    }
}

fn members(record: &SimulationRecord, triple: (usize, usize, usize)) -> Vec<&PassengerRecord> {
    record
        .passengers
        .iter()
        .filter(|p| p.triple == triple)
        .collect()
}

/// Mean Z-contribution of the passengers counted in f̃_{hkr}; None when the
/// triple carries no flow.
pub fn average_path_time(record: &SimulationRecord, triple: (usize, usize, usize)) -> Option<f64> {
    let m = members(record, triple);
    if m.is_empty() {
        return None;
    }
    Some(m.iter().map(|p| p.travel_seconds as f64).sum::<f64>() / m.len() as f64)
}

/// Boarding stations of the member set, each with the distinct runs members
/// boarded there: (station, leg index, runs with a representative stop span).
type BoardingSets = Vec<(StationId, Vec<(RunId, usize, usize)>)>;

fn boarding_sets(m: &[&PassengerRecord]) -> BoardingSets {
    // leg index → station → run → (board_idx, alight_idx or usize::MAX)
    let mut by_leg: BTreeMap<(usize, StationId), BTreeMap<RunId, (usize, usize)>> = BTreeMap::new();
    for p in m {
        for leg in &p.legs {
            by_leg
                .entry((leg.leg, leg.board_station.clone()))
                .or_default()
                .entry(leg.run.clone())
                .or_insert((leg.board_idx, leg.alight_idx.unwrap_or(usize::MAX)));
        }
    }
    by_leg
        .into_iter()
        .map(|((_leg, station), runs)| {
            (
                station,
                runs.into_iter()
                    .map(|(run, (b, a))| (run, b, a))
                    .collect(),
            )
        })
        .collect()
}

/// T^Q: Σ over boarding stations b, Σ over vehicles members boarded at b of
/// 1{full after departing b}·W / |V_b|.
pub fn queue_term(record: &SimulationRecord, triple: (usize, usize, usize)) -> f64 {
    let m = members(record, triple);
    let mut total = 0.0;
    for (_station, vehicles) in boarding_sets(&m) {
        let card = vehicles.len() as f64;
        for (run, board_idx, _alight_idx) in vehicles {
            let stop = &record.runs[&run].stops[board_idx];
            if stop.full_after_departure {
                total += stop.headway as f64 / card;
            }
        }
    }
    total
}

/// T^O: for each boarded vehicle, the headway at every stop the member rides
/// through while the vehicle departs full — stops strictly after boarding and
/// before alighting — averaged over the vehicles boarded at each station.
pub fn onboard_term(record: &SimulationRecord, triple: (usize, usize, usize)) -> f64 {
    let m = members(record, triple);
    let mut total = 0.0;
    for (_station, vehicles) in boarding_sets(&m) {
        let card = vehicles.len() as f64;
        for (run, board_idx, alight_idx) in vehicles {
            let stops = &record.runs[&run].stops;
            let end = alight_idx.min(stops.len());
            for stop in stops.iter().take(end).skip(board_idx + 1) {
                if stop.full_after_departure {
                    total += stop.headway as f64 / card;
                }
            }
        }
    }
    total
}

/// Gradient value used for triples whose flow cannot complete at all.
pub fn stranded_beta(record: &SimulationRecord, index: &RecommendationIndex, h: usize) -> f64 {
    let start = index.midpoint(h);
    record.horizon_end.saturating_sub(start) as f64 + record.global_median_headway as f64
}

/// Price a zero-flow triple by tracing a virtual passenger departing at the
/// interval midpoint through the recorded vehicle states: it boards the first
/// run with recorded spare capacity after its platform arrival (queue-end
/// position) and accrues the full-flag terms of the runs it rides.
pub fn probe_zero_flow(
    record: &SimulationRecord,
    scenario: &Scenario,
    index: &RecommendationIndex,
    triple: (usize, usize, usize),
) -> GradientTerms {
    let (h, k, r) = triple;
    let path = &index.paths[k][r];
    let tap_in = index.midpoint(h);
    let mut platform_arrival = tap_in.saturating_add(path.access_seconds);
    let mut t_q = 0.0;
    let mut t_o = 0.0;

    for (leg_no, leg) in path.legs.iter().enumerate() {
        // first run of the leg's route departing after arrival with a spare
        // seat recorded and the alight stop still served
        let mut candidates: Vec<(Seconds, &RunId, usize, usize)> = Vec::new();
        for (run_id, run) in &record.runs {
            if run.route != leg.route {
                continue;
            }
            let bpos = run.stops.iter().position(|s| s.station == leg.board);
            let apos = run.stops.iter().position(|s| s.station == leg.alight);
            if let (Some(b), Some(a)) = (bpos, apos) {
                if b < a {
                    let stop = &run.stops[b];
                    let spare = record.runs[run_id].capacity > stop.onboard_after_departure;
                    if stop.operated && stop.departure_time >= platform_arrival && spare {
                        candidates.push((stop.departure_time, run_id, b, a));
                    }
                }
            }
        }
        candidates.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let Some(&(board_time, run_id, b, a)) = candidates.first() else {
            // no feasible run remaining: stranded penalty steers flow away
            return GradientTerms {
                t_a: stranded_beta(record, index, h),
                t_q,
                t_o,
            };
        };
        let _ = board_time;
        let run = &record.runs[run_id];
        let board_stop = &run.stops[b];
        if board_stop.full_after_departure {
            t_q += board_stop.headway as f64;
        }
        for stop in run.stops.iter().take(a).skip(b + 1) {
            if stop.full_after_departure {
                t_o += stop.headway as f64;
            }
        }
        let arrive = run.stops[a].arrival_time;
        if arrive > record.horizon_end {
            // rides past the analysis window: same pricing as an onboard
            // passenger at the horizon
            let penalty = *record
                .route_median_headway
                .get(&leg.route)
                .unwrap_or(&record.global_median_headway);
            return GradientTerms {
                t_a: record.horizon_end.saturating_sub(tap_in) as f64 + penalty as f64,
                t_q,
                t_o,
            };
        }
        if leg_no + 1 == path.legs.len() {
            let tap_out = arrive + path.egress_seconds;
            return GradientTerms {
                t_a: (tap_out - tap_in) as f64,
                t_q,
                t_o,
            };
        }
        let next_board = &path.legs[leg_no + 1].board;
        let walk = scenario
            .network
            .walk_seconds(&leg.alight, next_board)
            .unwrap_or(0);
        platform_arrival = arrive + walk;
    }
    unreachable!("paths have at least one leg");
}

/// β over all of F from one record: the three-term decomposition for flowing
/// triples, virtual-passenger pricing for zero-flow triples, and the stranded
/// penalty when every member was stranded.
pub fn linearize(
    record: &SimulationRecord,
    scenario: &Scenario,
    index: &RecommendationIndex,
    reference_flows: &PathFlows,
) -> LinearizationResult {
    let mut beta = Vec::with_capacity(index.f_len());
    let mut terms = Vec::with_capacity(index.f_len());
    for &(h, k, r) in &index.triples {
        let triple = (h, k, r);
        let m = members(record, triple);
        let t = if m.is_empty() {
            probe_zero_flow(record, scenario, index, triple)
        } else if m.iter().all(|p| p.terminal == TerminalState::Stranded) {
            GradientTerms {
                t_a: stranded_beta(record, index, h),
                t_q: 0.0,
                t_o: 0.0,
            }
        } else {
            GradientTerms {
                t_a: average_path_time(record, triple).unwrap(),
                t_q: queue_term(record, triple),
                t_o: onboard_term(record, triple),
            }
        };
        beta.push(t.beta());
        terms.push(t);
    }
    LinearizationResult {
        z_tilde: record.z(),
        beta,
        terms,
        reference_flows: reference_flows.clone(),
    }
}

/// Probability-weighted mixture over incident scenarios: expected Z and β;
/// the robust counterpart downstream is unchanged.
pub fn expected_linearization(parts: &[(LinearizationResult, f64)]) -> Result<LinearizationResult> {
    if parts.is_empty() {
        return Err(Error::Solver("no scenarios to mix".into()));
    }
    let total_p: f64 = parts.iter().map(|(_, p)| p).sum();
    if (total_p - 1.0).abs() > 1e-9 {
        return Err(Error::Solver(format!(
            "scenario probabilities sum to {total_p}, not 1"
        )));
    }
    let f_len = parts[0].0.beta.len();
    for (lin, _) in parts {
        if lin.beta.len() != f_len
            || lin.reference_flows.as_slice() != parts[0].0.reference_flows.as_slice()
        {
            return Err(Error::Solver(
                "scenario linearizations disagree on F or reference flows".into(),
            ));
        }
    }
    let mut z = 0.0;
    let mut beta = vec![0.0; f_len];
    let mut terms = vec![GradientTerms::default(); f_len];
    for (lin, p) in parts {
        z += p * lin.z_tilde;
        for i in 0..f_len {
            beta[i] += p * lin.beta[i];
            terms[i].t_a += p * lin.terms[i].t_a;
            terms[i].t_q += p * lin.terms[i].t_q;
            terms[i].t_o += p * lin.terms[i].t_o;
        }
    }
    Ok(LinearizationResult {
        z_tilde: z,
        beta,
        terms,
        reference_flows: parts[0].0.reference_flows.clone(),
    })
}
