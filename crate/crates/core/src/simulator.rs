//! Event-based network loading: time-sorted arrival/departure events, FCFS
//! boarding under hard capacity, left-behind tracking, full trajectories, and
//! incident supply changes.
//!
//! A single run is strictly sequential; the inputs (scenario, prepared event
//! list) are immutable, so multiple runs with different demand/share inputs
//! can execute concurrently on shared references.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{
    DemandMatrix, Incident, Leg, Path, PathShares, RecommendationIndex, RouteId, RunId, Scenario,
    Seconds, StationId, SupplyChange,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Arrival,
    Departure,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub time: Seconds,
    pub kind: EventKind,
    pub route: RouteId,
    pub run: RunId,
    pub stop_idx: usize,
    pub station: StationId,
}

/// A run as it operates after incident changes (possibly with stops removed).
#[derive(Clone, Debug)]
pub struct ActiveRun {
    pub run_id: RunId,
    pub route: RouteId,
    pub capacity: u32,
    pub stops: Vec<crate::model::StopTime>,
}

/// Immutable per-(scenario, incident) state shared by all simulation runs.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub events: Vec<Event>,
    pub runs: BTreeMap<RunId, ActiveRun>,
    pub route_median_headway: BTreeMap<RouteId, Seconds>,
    pub global_median_headway: Seconds,
}

/// Apply incident supply changes and rebuild the time-sorted event list.
/// Suspensions cancel stop events inside the window and span; shuttle runs
/// add events; replacements swap a route's run set. Ties are broken
/// arrivals-first, then (route, run) lexicographically.
pub fn apply_incident(scenario: &Scenario, incident: Option<&Incident>) -> Result<Prepared> {
    let mut runs: BTreeMap<RunId, ActiveRun> = scenario
        .timetable
        .runs
        .iter()
        .map(|r| {
            (
                r.run_id.clone(),
                ActiveRun {
                    run_id: r.run_id.clone(),
                    route: r.route.clone(),
                    capacity: r.capacity,
                    stops: r.stop_times.clone(),
                },
            )
        })
        .collect();

    if let Some(incident) = incident {
        incident.validate(&scenario.network, &scenario.timetable)?;
        for change in &incident.supply_changes {
            match change {
                SupplyChange::ReplaceRuns { route, runs: new_runs } => {
                    runs.retain(|_, r| &r.route != route);
                    for nr in new_runs {
                        runs.insert(
                            nr.run_id.clone(),
                            ActiveRun {
                                run_id: nr.run_id.clone(),
                                route: nr.route.clone(),
                                capacity: nr.capacity,
                                stops: nr.stop_times.clone(),
                            },
                        );
                    }
                }
                SupplyChange::AddRuns { runs: new_runs } => {
                    for nr in new_runs {
                        if runs.contains_key(&nr.run_id) {
                            return Err(Error::InvalidIncident(format!(
                                "added run `{}` collides with an existing run id",
                                nr.run_id
                            )));
                        }
                        runs.insert(
                            nr.run_id.clone(),
                            ActiveRun {
                                run_id: nr.run_id.clone(),
                                route: nr.route.clone(),
                                capacity: nr.capacity,
                                stops: nr.stop_times.clone(),
                            },
                        );
                    }
                }
                SupplyChange::SuspendRouteBetween {
                    route,
                    from,
                    to,
                    start,
                    end,
                } => {
                    let seq = &scenario.network.routes[route].stop_sequence;
                    let lo = seq.iter().position(|s| s == from).unwrap();
                    let hi = seq.iter().position(|s| s == to).unwrap();
                    let span: Vec<&StationId> = seq[lo..=hi].iter().collect();
                    runs.retain(|_, r| {
                        if &r.route != route {
                            return true;
                        }
                        r.stops.retain(|st| {
                            let in_span = span.contains(&&st.station);
                            let in_window = st.departure >= *start && st.arrival <= *end;
                            !(in_span && in_window)
                        });
                        r.stops.len() >= 2
                    });
                }
            }
        }
    }

    let mut events = Vec::new();
    for run in runs.values() {
        for (idx, st) in run.stops.iter().enumerate() {
            events.push(Event {
                time: st.arrival,
                kind: EventKind::Arrival,
                route: run.route.clone(),
                run: run.run_id.clone(),
                stop_idx: idx,
                station: st.station.clone(),
            });
            events.push(Event {
                time: st.departure,
                kind: EventKind::Departure,
                route: run.route.clone(),
                run: run.run_id.clone(),
                stop_idx: idx,
                station: st.station.clone(),
            });
        }
    }
    events.sort_by(|a, b| {
        (a.time, a.kind, &a.route, &a.run, a.stop_idx).cmp(&(
            b.time,
            b.kind,
            &b.route,
            &b.run,
            b.stop_idx,
        ))
    });

    let (route_median_headway, global_median_headway) =
        median_headways(&runs, scenario.tau.max(1));

    Ok(Prepared {
        events,
        runs,
        route_median_headway,
        global_median_headway,
    })
}

fn median_headways(
    runs: &BTreeMap<RunId, ActiveRun>,
    fallback: Seconds,
) -> (BTreeMap<RouteId, Seconds>, Seconds) {
    // per (route, station): consecutive departure gaps
    let mut departures: BTreeMap<(RouteId, StationId), Vec<Seconds>> = BTreeMap::new();
    for run in runs.values() {
        for st in &run.stops {
            departures
                .entry((run.route.clone(), st.station.clone()))
                .or_default()
                .push(st.departure);
        }
    }
    let mut per_route: BTreeMap<RouteId, Vec<Seconds>> = BTreeMap::new();
    let mut all = Vec::new();
    for ((route, _station), mut times) in departures {
        times.sort_unstable();
        for w in times.windows(2) {
            let gap = w[1] - w[0];
            per_route.entry(route.clone()).or_default().push(gap);
            all.push(gap);
        }
    }
    let median = |v: &mut Vec<Seconds>| -> Option<Seconds> {
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        Some(v[v.len() / 2])
    };
    let global = median(&mut all).unwrap_or(fallback);
    let by_route = per_route
        .into_iter()
        .map(|(r, mut v)| {
            let m = median(&mut v).unwrap_or(global);
            (r, m)
        })
        .collect();
    (by_route, global)
}

/// A materialized traveler: identity, recommendation triple, and tap-in time.
#[derive(Clone, Debug, PartialEq)]
pub struct Passenger {
    pub pid: u32,
    /// (h, k, r)
    pub triple: (usize, usize, usize),
    pub origin_arrival_time: Seconds,
}

/// Integer loads per path by largest-remainder rounding of d_{hk}·p_{hkr}
/// (row total = round(d_{hk}), remainder ties to the lower path index);
/// arrival times uniform in the interval, h₀ passengers depart exactly at T_s.
///
/// Identities are stable per (h, k) row: the same demand and seed produce the
/// same travelers with the same arrival times, and only the path assignment
/// follows the shares. Evaluating two share vectors on one demand draw then
/// compares the same individuals.
pub fn materialize_passengers(
    demand: &DemandMatrix,
    shares: &PathShares,
    index: &RecommendationIndex,
    seed: u64,
) -> Result<Vec<Passenger>> {
    shares.validate(index)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut passengers = Vec::new();
    let mut pid: u32 = 0;
    for h in 0..index.n_times() {
        for k in 0..index.n_ods() {
            let d = demand.get(index, h, k);
            let total = d.round().max(0.0) as u64;
            let (lo, hi) = index.interval(h);
            let arrivals: Vec<Seconds> = (0..total)
                .map(|_| {
                    if h == 0 {
                        index.t_start
                    } else {
                        rng.random_range(lo + 1..=hi)
                    }
                })
                .collect();
            let row: Vec<f64> = index
                .row_range(h, k)
                .map(|f| shares.as_slice()[f] * d)
                .collect();
            let counts = largest_remainder(&row, total);
            let mut next = arrivals.into_iter();
            for (r, &count) in counts.iter().enumerate() {
                for _ in 0..count {
                    passengers.push(Passenger {
                        pid,
                        triple: (h, k, r),
                        origin_arrival_time: next.next().expect("counts sum to total"),
                    });
                    pid += 1;
                }
            }
        }
    }
    Ok(passengers)
}

/// Integer apportionment: floor the quotas, then hand out the remaining units
/// by descending fractional remainder, ties toward the lower index.
pub fn largest_remainder(quotas: &[f64], total: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.max(0.0).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut remaining = total.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a].max(0.0).fract();
        let fb = quotas[b].max(0.0).fract();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut cursor = 0;
    while remaining > 0 && !order.is_empty() {
        counts[order[cursor % order.len()]] += 1;
        cursor += 1;
        remaining -= 1;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TerminalState {
    TappedOut,
    OnboardAtHorizon,
    QueuedAtHorizon,
    Stranded,
}

use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct LegRecord {
    pub leg: usize,
    pub run: RunId,
    pub board_station: StationId,
    pub board_idx: usize,
    pub platform_arrival: Seconds,
    pub board_time: Seconds,
    pub alight_station: Option<StationId>,
    pub alight_idx: Option<usize>,
    pub alight_time: Option<Seconds>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PassengerRecord {
    pub pid: u32,
    pub triple: (usize, usize, usize),
    pub tap_in: Seconds,
    pub tap_out: Option<Seconds>,
    pub terminal: TerminalState,
    /// contribution to Z, including the unfinished/stranded penalty
    pub travel_seconds: u64,
    pub legs: Vec<LegRecord>,
    /// where the passenger was last waiting, if they never finished
    pub waiting_at: Option<(StationId, RouteId, Seconds)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StopRecord {
    pub station: StationId,
    pub arrival_time: Seconds,
    pub departure_time: Seconds,
    pub onboard_at_arrival: u32,
    pub onboard_after_departure: u32,
    pub full_after_departure: bool,
    /// time since the previous departure of the same route at this station;
    /// the first run falls back to the route's median scheduled headway
    pub headway: Seconds,
    pub boarded: u32,
    pub left_behind: u32,
    /// true once the departure event was actually processed within the horizon
    pub operated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub route: RouteId,
    pub capacity: u32,
    pub stops: Vec<StopRecord>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TerminalCounts {
    pub finished: u64,
    pub onboard_at_horizon: u64,
    pub queued_at_horizon: u64,
    pub stranded: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationRecord {
    pub passengers: Vec<PassengerRecord>,
    pub runs: BTreeMap<RunId, RunRecord>,
    /// system travel time Z in passenger-seconds
    pub z_total: u64,
    pub horizon_end: Seconds,
    pub counts: TerminalCounts,
    pub left_behind_events: u64,
    pub route_median_headway: BTreeMap<RouteId, Seconds>,
    pub global_median_headway: Seconds,
}

impl SimulationRecord {
    pub fn z(&self) -> f64 {
        self.z_total as f64
    }
}

#[derive(Clone, Debug, Default)]
pub struct SimConfig {
    /// process events up to this time; None runs the full event list
    pub horizon_end: Option<Seconds>,
}

/// One traveler's plan as the engine sees it (recommendation passengers and
/// background pre-incident travelers share this shape).
#[derive(Clone, Debug)]
pub struct Itinerary {
    pub pid: u32,
    pub triple: (usize, usize, usize),
    pub tap_in: Seconds,
    pub legs: Vec<Leg>,
    pub access_seconds: Seconds,
    pub egress_seconds: Seconds,
}

pub fn itinerary_from_path(
    pid: u32,
    triple: (usize, usize, usize),
    tap_in: Seconds,
    path: &Path,
) -> Itinerary {
    Itinerary {
        pid,
        triple,
        tap_in,
        legs: path.legs.clone(),
        access_seconds: path.access_seconds,
        egress_seconds: path.egress_seconds,
    }
}

/// Full network loading for materialized passengers.
pub fn run(
    scenario: &Scenario,
    index: &RecommendationIndex,
    incident: Option<&Incident>,
    passengers: &[Passenger],
    config: &SimConfig,
) -> Result<SimulationRecord> {
    let prepared = apply_incident(scenario, incident)?;
    run_prepared(&prepared, scenario, index, passengers, config)
}

pub fn run_prepared(
    prepared: &Prepared,
    scenario: &Scenario,
    index: &RecommendationIndex,
    passengers: &[Passenger],
    config: &SimConfig,
) -> Result<SimulationRecord> {
    let itineraries: Vec<Itinerary> = passengers
        .iter()
        .map(|p| {
            let (h, k, r) = p.triple;
            if k >= index.n_ods() || r >= index.n_paths(k) || h >= index.n_times() {
                return Err(Error::InvalidShares(format!(
                    "passenger {} references triple ({h},{k},{r}) outside F",
                    p.pid
                )));
            }
            Ok(itinerary_from_path(
                p.pid,
                p.triple,
                p.origin_arrival_time,
                &index.paths[k][r],
            ))
        })
        .collect::<Result<_>>()?;
    run_itineraries(prepared, scenario, &itineraries, config)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PaxPhase {
    Waiting,
    Onboard,
    Done,
}

struct PaxState {
    itin: Itinerary,
    phase: PaxPhase,
    leg_cursor: usize,
    platform_arrival: Seconds,
    legs: Vec<LegRecord>,
    tap_out: Option<Seconds>,
}

/// The core loading loop over a prepared event list.
pub fn run_itineraries(
    prepared: &Prepared,
    scenario: &Scenario,
    itineraries: &[Itinerary],
    config: &SimConfig,
) -> Result<SimulationRecord> {
    let horizon_end = config
        .horizon_end
        .or_else(|| prepared.events.last().map(|e| e.time))
        .unwrap_or(0);

    // station → stop index per run, for "does this run still reach my stop"
    let run_stop_pos: BTreeMap<&RunId, BTreeMap<&StationId, usize>> = prepared
        .runs
        .iter()
        .map(|(id, r)| {
            (
                id,
                r.stops
                    .iter()
                    .enumerate()
                    .map(|(i, st)| (&st.station, i))
                    .collect(),
            )
        })
        .collect();

    let mut pax: Vec<PaxState> = itineraries
        .iter()
        .map(|it| PaxState {
            itin: it.clone(),
            phase: PaxPhase::Waiting,
            leg_cursor: 0,
            platform_arrival: it.tap_in.saturating_add(it.access_seconds),
            legs: Vec::new(),
            tap_out: None,
        })
        .collect();

    // queues keyed by (station, route): entries (platform_arrival, pax index)
    let mut queues: BTreeMap<(StationId, RouteId), Vec<(Seconds, usize)>> = BTreeMap::new();
    let enqueue = |queues: &mut BTreeMap<(StationId, RouteId), Vec<(Seconds, usize)>>,
                       station: &StationId,
                       route: &RouteId,
                       arrival: Seconds,
                       idx: usize| {
        let q = queues.entry((station.clone(), route.clone())).or_default();
        let pos = q.partition_point(|&(t, i)| (t, i) < (arrival, idx));
        q.insert(pos, (arrival, idx));
    };

    for (i, st) in pax.iter().enumerate() {
        let leg = &st.itin.legs[0];
        enqueue(&mut queues, &leg.board, &leg.route, st.platform_arrival, i);
    }

    let mut onboard: BTreeMap<RunId, Vec<usize>> = BTreeMap::new();
    let mut last_departure: BTreeMap<(RouteId, StationId), Seconds> = BTreeMap::new();
    let mut records: BTreeMap<RunId, RunRecord> = prepared
        .runs
        .iter()
        .map(|(id, r)| {
            (
                id.clone(),
                RunRecord {
                    route: r.route.clone(),
                    capacity: r.capacity,
                    stops: r
                        .stops
                        .iter()
                        .map(|st| StopRecord {
                            station: st.station.clone(),
                            arrival_time: st.arrival,
                            departure_time: st.departure,
                            onboard_at_arrival: 0,
                            onboard_after_departure: 0,
                            full_after_departure: false,
                            headway: 0,
                            boarded: 0,
                            left_behind: 0,
                            operated: false,
                        })
                        .collect(),
                },
            )
        })
        .collect();
    let mut left_behind_events: u64 = 0;

    for event in &prepared.events {
        if event.time > horizon_end {
            break;
        }
        match event.kind {
            EventKind::Arrival => {
                let riders = onboard.entry(event.run.clone()).or_default();
                records.get_mut(&event.run).unwrap().stops[event.stop_idx].onboard_at_arrival =
                    riders.len() as u32;
                let mut staying = Vec::with_capacity(riders.len());
                for &i in riders.iter() {
                    let st = &mut pax[i];
                    let leg = &st.itin.legs[st.leg_cursor];
                    if leg.alight != event.station {
                        staying.push(i);
                        continue;
                    }
                    let leg_rec = st.legs.last_mut().unwrap();
                    leg_rec.alight_station = Some(event.station.clone());
                    leg_rec.alight_idx = Some(event.stop_idx);
                    leg_rec.alight_time = Some(event.time);
                    if st.leg_cursor + 1 == st.itin.legs.len() {
                        st.phase = PaxPhase::Done;
                        st.tap_out = Some(event.time + st.itin.egress_seconds);
                    } else {
                        st.leg_cursor += 1;
                        let next = st.itin.legs[st.leg_cursor].clone();
                        let walk = scenario
                            .network
                            .walk_seconds(&event.station, &next.board)
                            .ok_or_else(|| {
                                Error::InvalidScenario(format!(
                                    "no transfer walk `{}`->`{}`",
                                    event.station, next.board
                                ))
                            })?;
                        st.phase = PaxPhase::Waiting;
                        st.platform_arrival = event.time + walk;
                        enqueue(&mut queues, &next.board, &next.route, st.platform_arrival, i);
                    }
                }
                *riders = staying;
            }
            EventKind::Departure => {
                let riders = onboard.entry(event.run.clone()).or_default();
                let capacity = prepared.runs[&event.run].capacity;
                let mut cap_left = capacity - riders.len() as u32;
                let stop_pos = &run_stop_pos[&event.run];
                if let Some(q) = queues.get_mut(&(event.station.clone(), event.route.clone())) {
                    let mut boarded = 0u32;
                    let mut i = 0;
                    while i < q.len() && q[i].0 <= event.time && cap_left > 0 {
                        let pax_idx = q[i].1;
                        let alight = &pax[pax_idx].itin.legs[pax[pax_idx].leg_cursor].alight;
                        let servable = stop_pos
                            .get(alight)
                            .map(|&ai| ai > event.stop_idx)
                            .unwrap_or(false);
                        if !servable {
                            i += 1;
                            continue;
                        }
                        q.remove(i);
                        riders.push(pax_idx);
                        cap_left -= 1;
                        boarded += 1;
                        let st = &mut pax[pax_idx];
                        st.phase = PaxPhase::Onboard;
                        st.legs.push(LegRecord {
                            leg: st.leg_cursor,
                            run: event.run.clone(),
                            board_station: event.station.clone(),
                            board_idx: event.stop_idx,
                            platform_arrival: st.platform_arrival,
                            board_time: event.time,
                            alight_station: None,
                            alight_idx: None,
                            alight_time: None,
                        });
                    }
                    // denied boardings: eligible, servable, but no capacity left
                    let mut left = 0u32;
                    for &(arr, pax_idx) in q.iter() {
                        if arr > event.time {
                            break;
                        }
                        let alight = &pax[pax_idx].itin.legs[pax[pax_idx].leg_cursor].alight;
                        if stop_pos
                            .get(alight)
                            .map(|&ai| ai > event.stop_idx)
                            .unwrap_or(false)
                        {
                            left += 1;
                        }
                    }
                    left_behind_events += left as u64;
                    let rec = &mut records.get_mut(&event.run).unwrap().stops[event.stop_idx];
                    rec.boarded = boarded;
                    rec.left_behind = left;
                }
                let headway = match last_departure.get(&(event.route.clone(), event.station.clone()))
                {
                    Some(prev) => event.time - prev,
                    None => *prepared
                        .route_median_headway
                        .get(&event.route)
                        .unwrap_or(&prepared.global_median_headway),
                };
                last_departure.insert((event.route.clone(), event.station.clone()), event.time);
                let rec = &mut records.get_mut(&event.run).unwrap().stops[event.stop_idx];
                rec.onboard_after_departure = riders.len() as u32;
                rec.full_after_departure = riders.len() as u32 == capacity;
                rec.headway = headway;
                rec.operated = true;
            }
        }
    }

    // classify and price everyone
    let mut counts = TerminalCounts::default();
    let mut z_total: u64 = 0;
    let mut out = Vec::with_capacity(pax.len());
    for st in pax.into_iter() {
        let (terminal, tap_out, waiting_at) = match st.phase {
            PaxPhase::Done => (TerminalState::TappedOut, st.tap_out, None),
            PaxPhase::Onboard => (TerminalState::OnboardAtHorizon, None, None),
            PaxPhase::Waiting => {
                // queued-at-horizon if the route still has an unprocessed run
                // that could serve this leg; otherwise service is exhausted
                // and the passenger is stranded
                let leg = &st.itin.legs[st.leg_cursor];
                let has_future_service = prepared.runs.values().any(|r| {
                    if r.route != leg.route {
                        return false;
                    }
                    let bpos = r.stops.iter().position(|s| s.station == leg.board);
                    let apos = r.stops.iter().position(|s| s.station == leg.alight);
                    match (bpos, apos) {
                        (Some(b), Some(a)) => {
                            b < a
                                && r.stops[b].departure > horizon_end
                                && r.stops[b].departure >= st.platform_arrival
                        }
                        _ => false,
                    }
                });
                let terminal = if has_future_service {
                    TerminalState::QueuedAtHorizon
                } else {
                    TerminalState::Stranded
                };
                (
                    terminal,
                    None,
                    Some((leg.board.clone(), leg.route.clone(), st.platform_arrival)),
                )
            }
        };
        let travel_seconds = match terminal {
            TerminalState::TappedOut => u64::from(tap_out.unwrap() - st.itin.tap_in),
            _ => {
                let route = &st.itin.legs[st.leg_cursor].route;
                let penalty = *prepared
                    .route_median_headway
                    .get(route)
                    .unwrap_or(&prepared.global_median_headway);
                u64::from(horizon_end.saturating_sub(st.itin.tap_in)) + u64::from(penalty)
            }
        };
        match terminal {
            TerminalState::TappedOut => counts.finished += 1,
            TerminalState::OnboardAtHorizon => counts.onboard_at_horizon += 1,
            TerminalState::QueuedAtHorizon => counts.queued_at_horizon += 1,
            TerminalState::Stranded => counts.stranded += 1,
        }
        z_total += travel_seconds;
        out.push(PassengerRecord {
            pid: st.itin.pid,
            triple: st.itin.triple,
            tap_in: st.itin.tap_in,
            tap_out,
            terminal,
            travel_seconds,
            legs: st.legs,
            waiting_at,
        });
    }

    Ok(SimulationRecord {
        passengers: out,
        runs: records,
        z_total,
        horizon_end,
        counts,
        left_behind_events,
        route_median_headway: prepared.route_median_headway.clone(),
        global_median_headway: prepared.global_median_headway,
    })
}

/// Where in-system passengers of blocked runs end up when the incident hits:
/// simulate the no-incident loading up to T_s with the background travelers,
/// then relocate everyone onboard an affected run to the nearest upstream
/// platform (the last stop their run served at or before T_s).
pub struct OffloadedPassenger {
    pub station: StationId,
    pub destination: StationId,
    pub background_index: usize,
}

pub fn offload_prepass(
    scenario: &Scenario,
    incident: &Incident,
    background: &[(Path, Seconds)],
) -> Result<Vec<OffloadedPassenger>> {
    let baseline = apply_incident(scenario, None)?;
    let with_incident = apply_incident(scenario, Some(incident))?;

    let itineraries: Vec<Itinerary> = background
        .iter()
        .enumerate()
        .map(|(i, (path, tap_in))| itinerary_from_path(i as u32, (0, i, 0), *tap_in, path))
        .collect();
    let record = run_itineraries(
        &baseline,
        scenario,
        &itineraries,
        &SimConfig {
            horizon_end: Some(incident.start),
        },
    )?;

    let mut offloaded = Vec::new();
    for rec in &record.passengers {
        if rec.terminal != TerminalState::OnboardAtHorizon {
            continue;
        }
        let leg = rec.legs.last().unwrap();
        let base_run = &baseline.runs[&leg.run];
        let affected = match with_incident.runs.get(&leg.run) {
            None => true,
            Some(after) => after.stops.len() < base_run.stops.len(),
        };
        if !affected {
            continue;
        }
        let station = base_run
            .stops
            .iter()
            .rfind(|st| st.arrival <= incident.start)
            .map(|st| st.station.clone())
            .unwrap_or_else(|| leg.board_station.clone());
        let bg_idx = rec.triple.1;
        offloaded.push(OffloadedPassenger {
            station,
            destination: background[bg_idx]
                .0
                .legs
                .last()
                .unwrap()
                .alight
                .clone(),
            background_index: bg_idx,
        });
    }
    Ok(offloaded)
}

/// Flat trajectory rows for CSV export: (pid, h, k, r, event, time, station, run).
pub fn trajectory_rows(record: &SimulationRecord, index: &RecommendationIndex) -> Vec<TrajRow> {
    let mut rows = Vec::new();
    for p in &record.passengers {
        let (h, k, r) = p.triple;
        let origin = index.ods.get(k).map(|od| od.0.clone());
        let mut push = |event: &'static str, time: Seconds, station: Option<StationId>, run: Option<RunId>| {
            rows.push(TrajRow {
                pid: p.pid,
                h,
                k,
                r,
                event,
                time,
                station,
                run,
            });
        };
        push("tap_in", p.tap_in, origin, None);
        for leg in &p.legs {
            push(
                "platform_arrival",
                leg.platform_arrival,
                Some(leg.board_station.clone()),
                None,
            );
            push(
                "board",
                leg.board_time,
                Some(leg.board_station.clone()),
                Some(leg.run.clone()),
            );
            if let (Some(t), Some(s)) = (leg.alight_time, leg.alight_station.clone()) {
                push("alight", t, Some(s), Some(leg.run.clone()));
            }
        }
        if let Some((station, _route, arr)) = &p.waiting_at {
            if p.legs.last().map(|l| l.alight_time.is_some()).unwrap_or(true) {
                push("platform_arrival", *arr, Some(station.clone()), None);
            }
        }
        if let Some(t) = p.tap_out {
            push("tap_out", t, None, None);
        }
    }
    rows
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajRow {
    pub pid: u32,
    pub h: usize,
    pub k: usize,
    pub r: usize,
    pub event: &'static str,
    pub time: Seconds,
    pub station: Option<StationId>,
    pub run: Option<RunId>,
}
