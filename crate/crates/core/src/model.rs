//! Domain types shared by all modules: network, timetable, paths, demand,
//! shares, and the recommendation index set F.
//!
//! All times are integer seconds. Everything here is immutable after
//! construction and safe to share across concurrent simulation runs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Seconds = u32;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

id_type!(StationId);
id_type!(RouteId);
id_type!(RunId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rail,
    Bus,
    Shuttle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Station {
    pub id: StationId,
    #[serde(default)]
    pub name: String,
    /// walking time to reachable platforms, seconds
    #[serde(default)]
    pub transfer_walk_seconds: BTreeMap<StationId, Seconds>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub id: RouteId,
    pub mode: Mode,
    /// single direction, ≥ 2 stops, no repeated consecutive stops
    pub stop_sequence: Vec<StationId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopTime {
    pub station: StationId,
    pub arrival: Seconds,
    pub departure: Seconds,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleRun {
    pub run_id: RunId,
    pub route: RouteId,
    /// passengers
    pub capacity: u32,
    pub stop_times: Vec<StopTime>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leg {
    pub board: StationId,
    pub route: RouteId,
    pub alight: StationId,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Path {
    pub legs: Vec<Leg>,
    #[serde(default)]
    pub access_seconds: Seconds,
    #[serde(default)]
    pub egress_seconds: Seconds,
}

#[derive(Clone, Debug)]
pub struct Network {
    pub stations: BTreeMap<StationId, Station>,
    pub routes: BTreeMap<RouteId, Route>,
}

impl Network {
    pub fn new(stations: Vec<Station>, routes: Vec<Route>) -> Result<Network> {
        let mut smap = BTreeMap::new();
        for st in stations {
            if st.transfer_walk_seconds.contains_key(&st.id) {
                return Err(Error::InvalidScenario(format!(
                    "station `{}` has a self-transfer entry",
                    st.id
                )));
            }
            if smap.insert(st.id.clone(), st).is_some() {
                return Err(Error::InvalidScenario("duplicate station id".into()));
            }
        }
        let mut rmap = BTreeMap::new();
        for rt in routes {
            if rt.stop_sequence.len() < 2 {
                return Err(Error::InvalidScenario(format!(
                    "route `{}` has fewer than 2 stops",
                    rt.id
                )));
            }
            for w in rt.stop_sequence.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::InvalidScenario(format!(
                        "route `{}` repeats stop `{}` consecutively",
                        rt.id, w[0]
                    )));
                }
            }
            for s in &rt.stop_sequence {
                if !smap.contains_key(s) {
                    return Err(Error::UnknownStation {
                        station: s.0.clone(),
                        context: format!("route `{}`", rt.id),
                    });
                }
            }
            if rmap.insert(rt.id.clone(), rt).is_some() {
                return Err(Error::InvalidScenario("duplicate route id".into()));
            }
        }
        Ok(Network {
            stations: smap,
            routes: rmap,
        })
    }

    /// Walk seconds between stations; 0 when they coincide, None if unreachable.
    pub fn walk_seconds(&self, from: &StationId, to: &StationId) -> Option<Seconds> {
        if from == to {
            return Some(0);
        }
        self.stations
            .get(from)
            .and_then(|s| s.transfer_walk_seconds.get(to))
            .copied()
    }

    /// Position of a station along a route's stop sequence.
    pub fn stop_position(&self, route: &RouteId, station: &StationId) -> Option<usize> {
        self.routes
            .get(route)
            .and_then(|r| r.stop_sequence.iter().position(|s| s == station))
    }
}

#[derive(Clone, Debug)]
pub struct Timetable {
    pub runs: Vec<VehicleRun>,
}

impl Timetable {
    pub fn new(runs: Vec<VehicleRun>, network: &Network) -> Result<Timetable> {
        let mut seen = BTreeMap::new();
        for run in &runs {
            validate_run(run, network)?;
            if seen.insert(run.run_id.clone(), ()).is_some() {
                return Err(Error::InvalidScenario(format!(
                    "duplicate run id `{}`",
                    run.run_id
                )));
            }
        }
        Ok(Timetable { runs })
    }
}

pub fn validate_run(run: &VehicleRun, network: &Network) -> Result<()> {
    let route = network.routes.get(&run.route).ok_or_else(|| Error::UnknownRoute {
        route: run.route.0.clone(),
        context: format!("run `{}`", run.run_id),
    })?;
    if run.capacity < 1 {
        return Err(Error::InvalidScenario(format!(
            "run `{}` has capacity 0",
            run.run_id
        )));
    }
    if run.stop_times.len() < 2 {
        return Err(Error::InvalidScenario(format!(
            "run `{}` serves fewer than 2 stops",
            run.run_id
        )));
    }
    // stops must appear in route order (contiguity is not required: runs may
    // skip stops, e.g. short-turned services)
    let mut cursor = 0usize;
    for st in &run.stop_times {
        if st.arrival > st.departure {
            return Err(Error::InvalidScenario(format!(
                "run `{}` departs `{}` before arriving",
                run.run_id, st.station
            )));
        }
        match route.stop_sequence[cursor..].iter().position(|s| s == &st.station) {
            Some(p) => cursor += p + 1,
            None => {
                return Err(Error::InvalidScenario(format!(
                    "run `{}` stops at `{}` out of route `{}` order",
                    run.run_id, st.station, run.route
                )))
            }
        }
    }
    for w in run.stop_times.windows(2) {
        if w[0].departure >= w[1].arrival {
            return Err(Error::InvalidScenario(format!(
                "run `{}` times not strictly increasing at `{}`",
                run.run_id, w[1].station
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
pub enum SupplyChange {
    SuspendRouteBetween {
        route: RouteId,
        from: StationId,
        to: StationId,
        start: Seconds,
        end: Seconds,
    },
    AddRuns {
        runs: Vec<VehicleRun>,
    },
    ReplaceRuns {
        route: RouteId,
        runs: Vec<VehicleRun>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Incident {
    /// T_s
    pub start: Seconds,
    /// T_e
    pub end: Seconds,
    #[serde(default)]
    pub supply_changes: Vec<SupplyChange>,
}

impl Incident {
    pub fn validate(&self, network: &Network, timetable: &Timetable) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::InvalidIncident("start must precede end".into()));
        }
        let window_overlaps = |a: Seconds, b: Seconds| a <= self.end && b >= self.start;
        for change in &self.supply_changes {
            match change {
                SupplyChange::SuspendRouteBetween {
                    route,
                    from,
                    to,
                    start,
                    end,
                } => {
                    let r = network.routes.get(route).ok_or_else(|| Error::UnknownRoute {
                        route: route.0.clone(),
                        context: "suspension".into(),
                    })?;
                    let fp = r.stop_sequence.iter().position(|s| s == from);
                    let tp = r.stop_sequence.iter().position(|s| s == to);
                    match (fp, tp) {
                        (Some(a), Some(b)) if a <= b => {}
                        (Some(_), Some(_)) => {
                            return Err(Error::InvalidIncident(format!(
                                "suspension span `{from}`..`{to}` reversed on route `{route}`"
                            )))
                        }
                        _ => {
                            return Err(Error::InvalidIncident(format!(
                                "suspension span `{from}`..`{to}` not on route `{route}`"
                            )))
                        }
                    }
                    if !window_overlaps(*start, *end) {
                        return Err(Error::InvalidIncident(
                            "suspension window outside the incident window".into(),
                        ));
                    }
                }
                SupplyChange::AddRuns { runs } => {
                    for run in runs {
                        validate_run(run, network)?;
                        let a = run.stop_times.first().unwrap().arrival;
                        let b = run.stop_times.last().unwrap().departure;
                        if !window_overlaps(a, b) {
                            return Err(Error::InvalidIncident(format!(
                                "added run `{}` does not intersect the incident window",
                                run.run_id
                            )));
                        }
                    }
                }
                SupplyChange::ReplaceRuns { route, runs } => {
                    if !network.routes.contains_key(route) {
                        return Err(Error::UnknownRoute {
                            route: route.0.clone(),
                            context: "replace_runs".into(),
                        });
                    }
                    let known: Vec<&RunId> = timetable.runs.iter().map(|r| &r.run_id).collect();
                    for run in runs {
                        validate_run(run, network)?;
                        if known.contains(&&run.run_id) {
                            return Err(Error::InvalidIncident(format!(
                                "replacement run `{}` collides with an existing run id",
                                run.run_id
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// The simulator's immutable world: network, timetable, path sets, and the
/// recommendation horizon parameters.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub network: Network,
    pub timetable: Timetable,
    pub od_paths: Vec<OdPaths>,
    pub tau: Seconds,
    pub h_count: usize,
}

#[derive(Clone, Debug)]
pub struct OdPaths {
    pub origin: StationId,
    pub destination: StationId,
    pub paths: Vec<Path>,
}

/// The index set F = {(h, k, r)} in fixed h-major, then k, then r order,
/// together with the interval geometry. h = 0 is the time point T_s; interval
/// h ≥ 1 covers (T_s + (h−1)τ, T_s + hτ].
#[derive(Clone, Debug, Serialize)]
pub struct RecommendationIndex {
    pub tau: Seconds,
    pub h_count: usize,
    pub t_start: Seconds,
    pub ods: Vec<(StationId, StationId)>,
    /// paths per od, same order as `ods`
    pub paths: Vec<Vec<Path>>,
    /// enumeration of (h, k, r)
    pub triples: Vec<(usize, usize, usize)>,
    /// start offset into `triples` for each (h, k) cell, plus a final sentinel
    pub row_offsets: Vec<usize>,
}

impl RecommendationIndex {
    /// number of recommendation times |H| = H + 1
    pub fn n_times(&self) -> usize {
        self.h_count + 1
    }

    pub fn n_ods(&self) -> usize {
        self.ods.len()
    }

    /// |H × K|
    pub fn n_cells(&self) -> usize {
        self.n_times() * self.n_ods()
    }

    pub fn f_len(&self) -> usize {
        self.triples.len()
    }

    #[inline]
    pub fn cell(&self, h: usize, k: usize) -> usize {
        h * self.n_ods() + k
    }

    /// contiguous range of F indices belonging to cell (h, k)
    pub fn row_range(&self, h: usize, k: usize) -> std::ops::Range<usize> {
        let c = self.cell(h, k);
        self.row_offsets[c]..self.row_offsets[c + 1]
    }

    pub fn f_index(&self, h: usize, k: usize, r: usize) -> usize {
        self.row_offsets[self.cell(h, k)] + r
    }

    /// (start, end] of interval h ≥ 1; h = 0 collapses to the point T_s.
    pub fn interval(&self, h: usize) -> (Seconds, Seconds) {
        if h == 0 {
            (self.t_start, self.t_start)
        } else {
            (
                self.t_start + (h as Seconds - 1) * self.tau,
                self.t_start + h as Seconds * self.tau,
            )
        }
    }

    pub fn midpoint(&self, h: usize) -> Seconds {
        let (a, b) = self.interval(h);
        a + (b - a) / 2
    }

    pub fn n_paths(&self, k: usize) -> usize {
        self.paths[k].len()
    }
}

/// Validate path sets against the network and enumerate F.
pub fn build_index(
    od_paths: &[OdPaths],
    network: &Network,
    tau: Seconds,
    h_count: usize,
    t_start: Seconds,
) -> Result<RecommendationIndex> {
    if tau == 0 {
        return Err(Error::InvalidScenario("tau must be positive".into()));
    }
    let mut ods = Vec::new();
    let mut paths = Vec::new();
    for od in od_paths {
        if od.paths.is_empty() {
            return Err(Error::InvalidScenario(format!(
                "od {}->{} has an empty path set",
                od.origin, od.destination
            )));
        }
        for (pi, path) in od.paths.iter().enumerate() {
            validate_path(path, &od.origin, &od.destination, pi, network)?;
        }
        ods.push((od.origin.clone(), od.destination.clone()));
        paths.push(od.paths.clone());
    }
    if ods.is_empty() {
        return Err(Error::InvalidScenario("no od pairs declared".into()));
    }

    let n_times = h_count + 1;
    let mut triples = Vec::new();
    let mut row_offsets = Vec::with_capacity(n_times * ods.len() + 1);
    for h in 0..n_times {
        for (k, od) in paths.iter().enumerate() {
            row_offsets.push(triples.len());
            for r in 0..od.len() {
                triples.push((h, k, r));
            }
        }
    }
    row_offsets.push(triples.len());

    Ok(RecommendationIndex {
        tau,
        h_count,
        t_start,
        ods,
        paths,
        triples,
        row_offsets,
    })
}

fn validate_path(
    path: &Path,
    origin: &StationId,
    destination: &StationId,
    path_index: usize,
    network: &Network,
) -> Result<()> {
    let fail = |reason: String| Error::InvalidPath {
        origin: origin.0.clone(),
        destination: destination.0.clone(),
        path_index,
        reason,
    };
    if path.legs.is_empty() {
        return Err(fail("no legs".into()));
    }
    for leg in &path.legs {
        if !network.routes.contains_key(&leg.route) {
            return Err(fail(format!("unknown route `{}`", leg.route)));
        }
        for st in [&leg.board, &leg.alight] {
            if !network.stations.contains_key(st) {
                return Err(fail(format!("unknown station `{st}`")));
            }
        }
        let b = network.stop_position(&leg.route, &leg.board);
        let a = network.stop_position(&leg.route, &leg.alight);
        match (b, a) {
            (Some(b), Some(a)) if b < a => {}
            _ => {
                return Err(fail(format!(
                    "leg `{}`->`{}` not in order on route `{}`",
                    leg.board, leg.alight, leg.route
                )))
            }
        }
    }
    for pair in path.legs.windows(2) {
        if network.walk_seconds(&pair[0].alight, &pair[1].board).is_none() {
            return Err(fail(format!(
                "no transfer walk from `{}` to `{}`",
                pair[0].alight, pair[1].board
            )));
        }
    }
    if network.walk_seconds(origin, &path.legs[0].board).is_none() {
        return Err(fail(format!(
            "first boarding station `{}` unreachable from origin",
            path.legs[0].board
        )));
    }
    if network
        .walk_seconds(&path.legs.last().unwrap().alight, destination)
        .is_none()
    {
        return Err(fail(format!(
            "last alighting station `{}` does not reach the destination",
            path.legs.last().unwrap().alight
        )));
    }
    Ok(())
}

/// d_{hk} over H × K, nonnegative reals, dense in index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    values: Vec<f64>,
}

impl DemandMatrix {
    pub fn new(values: Vec<f64>, index: &RecommendationIndex) -> Result<DemandMatrix> {
        if values.len() != index.n_cells() {
            return Err(Error::InvalidDemand(format!(
                "expected {} cells, got {}",
                index.n_cells(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDemand("negative or non-finite demand".into()));
        }
        Ok(DemandMatrix { values })
    }

    pub fn zeros(index: &RecommendationIndex) -> DemandMatrix {
        DemandMatrix {
            values: vec![0.0; index.n_cells()],
        }
    }

    #[inline]
    pub fn get(&self, index: &RecommendationIndex, h: usize, k: usize) -> f64 {
        self.values[index.cell(h, k)]
    }

    pub fn set(&mut self, index: &RecommendationIndex, h: usize, k: usize, v: f64) {
        self.values[index.cell(h, k)] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// p_{hkr} over F; every (h, k) row lies on the simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathShares {
    values: Vec<f64>,
}

pub const SIMPLEX_TOL: f64 = 1e-9;

impl PathShares {
    pub fn new(values: Vec<f64>, index: &RecommendationIndex) -> Result<PathShares> {
        if values.len() != index.f_len() {
            return Err(Error::InvalidShares(format!(
                "expected {} entries, got {}",
                index.f_len(),
                values.len()
            )));
        }
        let shares = PathShares { values };
        shares.validate(index)?;
        Ok(shares)
    }

    pub fn validate(&self, index: &RecommendationIndex) -> Result<()> {
        for h in 0..index.n_times() {
            for k in 0..index.n_ods() {
                let row = &self.values[index.row_range(h, k)];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidShares(format!(
                        "row (h={h}, k={k}) sums to {sum}, not 1"
                    )));
                }
                if row.iter().any(|p| *p < -SIMPLEX_TOL || *p > 1.0 + SIMPLEX_TOL) {
                    return Err(Error::InvalidShares(format!(
                        "row (h={h}, k={k}) has a share outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, index: &RecommendationIndex, h: usize, k: usize, r: usize) -> f64 {
        self.values[index.f_index(h, k, r)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// f_{hkr} over F, nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathFlows {
    values: Vec<f64>,
}

impl PathFlows {
    pub fn from_values(values: Vec<f64>, index: &RecommendationIndex) -> Result<PathFlows> {
        if values.len() != index.f_len() {
            return Err(Error::InvalidShares(format!(
                "expected {} entries, got {}",
                index.f_len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidShares("negative or non-finite flow".into()));
        }
        Ok(PathFlows { values })
    }

    #[inline]
    pub fn get(&self, index: &RecommendationIndex, h: usize, k: usize, r: usize) -> f64 {
        self.values[index.f_index(h, k, r)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// f_{hkr} = d_{hk} · p_{hkr}
pub fn flows_from_shares(
    demand: &DemandMatrix,
    shares: &PathShares,
    index: &RecommendationIndex,
) -> Result<PathFlows> {
    shares.validate(index)?;
    let mut values = vec![0.0; index.f_len()];
    for (f, &(h, k, _r)) in index.triples.iter().enumerate() {
        values[f] = demand.get(index, h, k) * shares.as_slice()[f];
    }
    PathFlows::from_values(values, index)
}

/// p_{hkr} = f_{hkr} / d_{hk} on rows with positive demand; rows with zero
/// total flow fall back to uniform.
pub fn shares_from_flows(flows: &PathFlows, index: &RecommendationIndex) -> PathShares {
    let mut values = vec![0.0; index.f_len()];
    for h in 0..index.n_times() {
        for k in 0..index.n_ods() {
            let range = index.row_range(h, k);
            let total: f64 = flows.as_slice()[range.clone()].iter().sum();
            let n = range.len() as f64;
            for f in range {
                values[f] = if total > 0.0 {
                    flows.as_slice()[f] / total
                } else {
                    1.0 / n
                };
            }
        }
    }
    PathShares { values }
}

impl PathShares {
    /// Construct without row validation; used where rows are convex
    /// combinations of already-valid rows.
    pub(crate) fn from_raw(values: Vec<f64>) -> PathShares {
        PathShares { values }
    }
}
