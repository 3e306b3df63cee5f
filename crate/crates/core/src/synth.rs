//! Bundled synthetic disruption scenario (a suspended rail line, a parallel
//! bus, and two transfer corridors feeding the same destination) plus a
//! randomized small-scenario generator for property tests.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::benchmarks::StatusQuoInputs;
use crate::error::Result;
use crate::model::{
    build_index, DemandMatrix, Incident, Leg, Mode, Network, OdPaths, Path, RecommendationIndex,
    Route, Scenario, Seconds, Station, SupplyChange, Timetable, VehicleRun,
};
use crate::scenario::{
    DemandFile, IncreaseRecord, NetworkFile, OdPathsFile, PathsFile, StatusQuoFile,
    TimetableFile, WaitingPathRecord,
};
use crate::simulator::offload_prepass;
use crate::uncertainty::generate_synthetic_samples;

pub const SYNTH_T_START: Seconds = 29_640; // 8:14:00
pub const SYNTH_T_END: Seconds = SYNTH_T_START + 1500; // 25-minute suspension
pub const SYNTH_TAU: Seconds = 600;
pub const SYNTH_H: usize = 3;

fn station(id: &str, walks: &[(&str, Seconds)]) -> Station {
    Station {
        id: id.into(),
        name: id.to_uppercase(),
        transfer_walk_seconds: walks.iter().map(|(s, w)| ((*s).into(), *w)).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn spaced_runs(
    route_id: &str,
    stops: &[&str],
    capacity: u32,
    first: Seconds,
    headway: Seconds,
    last: Seconds,
    hop: Seconds,
    dwell: Seconds,
) -> Vec<VehicleRun> {
    let mut runs = Vec::new();
    let mut base = first;
    let mut i = 0;
    while base <= last {
        runs.push(VehicleRun {
            run_id: format!("{route_id}-{i:03}").as_str().into(),
            route: route_id.into(),
            capacity,
            stop_times: stops
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let arr = base + (hop + dwell) * j as Seconds;
                    crate::model::StopTime {
                        station: (*s).into(),
                        arrival: arr,
                        departure: arr + dwell,
                    }
                })
                .collect(),
        });
        base += headway;
        i += 1;
    }
    runs
}

fn direct(board: &str, route: &str, alight: &str) -> Path {
    Path {
        legs: vec![Leg {
            board: board.into(),
            route: route.into(),
            alight: alight.into(),
        }],
        access_seconds: 60,
        egress_seconds: 60,
    }
}

fn two_leg(b1: &str, r1: &str, a1: &str, b2: &str, r2: &str, a2: &str) -> Path {
    Path {
        legs: vec![
            Leg {
                board: b1.into(),
                route: r1.into(),
                alight: a1.into(),
            },
            Leg {
                board: b2.into(),
                route: r2.into(),
                alight: a2.into(),
            },
        ],
        access_seconds: 60,
        egress_seconds: 60,
    }
}

pub struct SynthScenario {
    pub scenario: Scenario,
    pub incident: Incident,
    pub index: RecommendationIndex,
    /// jittered no-incident baseline days
    pub baseline_days: Vec<DemandMatrix>,
    /// leave-proportion samples derived from the baseline days
    pub samples: Vec<DemandMatrix>,
    /// mean of the samples; what the optimizer sees
    pub nominal_demand: DemandMatrix,
    /// held-out incident-day draw used only for evaluation
    pub actual_demand: DemandMatrix,
    pub background_ods: Vec<bool>,
    pub status_quo: StatusQuoInputs,
}

/// Deterministic synthetic disruption mirroring the case-study structure:
/// the rail line b1..b5→loop is fully suspended for 25 minutes; passengers
/// can wait for recovery, ride the parallel bus, or transfer north (nsbus +
/// green) or south (webus + brown). Background riders load green and brown.
pub fn synthetic_disruption(seed: u64) -> Result<SynthScenario> {
    let stations = vec![
        station("b1", &[]),
        station("b2", &[("b3", 300)]),
        station("b3", &[("b2", 300)]),
        station("b4", &[("b5", 300)]),
        station("b5", &[("b4", 300)]),
        station("g1", &[]),
        station("g2", &[]),
        station("g3", &[]),
        station("br1", &[]),
        station("br2", &[]),
        station("br3", &[]),
        station("loop", &[]),
    ];
    let blue_stops = ["b1", "b2", "b3", "b4", "b5", "loop"];
    let green_stops = ["g1", "g2", "g3", "loop"];
    let brown_stops = ["br1", "br2", "br3", "loop"];
    let routes = vec![
        Route {
            id: "blue".into(),
            mode: Mode::Rail,
            stop_sequence: blue_stops.iter().map(|s| (*s).into()).collect(),
        },
        Route {
            id: "pbus".into(),
            mode: Mode::Bus,
            stop_sequence: blue_stops.iter().map(|s| (*s).into()).collect(),
        },
        Route {
            id: "nsbus".into(),
            mode: Mode::Bus,
            stop_sequence: vec!["b3".into(), "g2".into()],
        },
        Route {
            id: "webus".into(),
            mode: Mode::Bus,
            stop_sequence: vec!["b5".into(), "br2".into()],
        },
        Route {
            id: "green".into(),
            mode: Mode::Rail,
            stop_sequence: green_stops.iter().map(|s| (*s).into()).collect(),
        },
        Route {
            id: "brown".into(),
            mode: Mode::Rail,
            stop_sequence: brown_stops.iter().map(|s| (*s).into()).collect(),
        },
    ];
    let network = Network::new(stations, routes)?;

    let service_end = SYNTH_T_START + 3600 * 2;
    let mut runs = Vec::new();
    runs.extend(spaced_runs("blue", &blue_stops, 220, 27_000, 300, service_end, 240, 30));
    runs.extend(spaced_runs("pbus", &blue_stops, 32, 27_060, 360, service_end, 420, 20));
    runs.extend(spaced_runs("nsbus", &["b3", "g2"], 36, 27_120, 300, service_end, 420, 20));
    runs.extend(spaced_runs("webus", &["b5", "br2"], 36, 27_180, 300, service_end, 420, 20));
    runs.extend(spaced_runs("green", &green_stops, 130, 27_030, 360, service_end, 200, 20));
    runs.extend(spaced_runs("brown", &brown_stops, 130, 27_090, 360, service_end, 200, 20));
    let timetable = Timetable::new(runs, &network)?;

    let incident = Incident {
        start: SYNTH_T_START,
        end: SYNTH_T_END,
        supply_changes: vec![SupplyChange::SuspendRouteBetween {
            route: "blue".into(),
            from: "b1".into(),
            to: "loop".into(),
            start: SYNTH_T_START,
            end: SYNTH_T_END,
        }],
    };

    let od_paths = vec![
        OdPaths {
            origin: "b2".into(),
            destination: "loop".into(),
            paths: vec![
                direct("b2", "blue", "loop"),
                direct("b2", "pbus", "loop"),
                two_leg("b3", "nsbus", "g2", "g2", "green", "loop"),
            ],
        },
        OdPaths {
            origin: "b3".into(),
            destination: "loop".into(),
            paths: vec![
                direct("b3", "blue", "loop"),
                direct("b3", "pbus", "loop"),
                two_leg("b3", "nsbus", "g2", "g2", "green", "loop"),
            ],
        },
        OdPaths {
            origin: "b4".into(),
            destination: "loop".into(),
            paths: vec![
                direct("b4", "blue", "loop"),
                direct("b4", "pbus", "loop"),
                two_leg("b5", "webus", "br2", "br2", "brown", "loop"),
            ],
        },
        OdPaths {
            origin: "b5".into(),
            destination: "loop".into(),
            paths: vec![
                direct("b5", "blue", "loop"),
                direct("b5", "pbus", "loop"),
                two_leg("b5", "webus", "br2", "br2", "brown", "loop"),
            ],
        },
        OdPaths {
            origin: "g1".into(),
            destination: "loop".into(),
            paths: vec![direct("g1", "green", "loop")],
        },
        OdPaths {
            origin: "br1".into(),
            destination: "loop".into(),
            paths: vec![direct("br1", "brown", "loop")],
        },
    ];
    let background_ods = vec![false, false, false, false, true, true];

    let scenario = Scenario {
        network,
        timetable,
        od_paths: od_paths.clone(),
        tau: SYNTH_TAU,
        h_count: SYNTH_H,
    };
    let index = build_index(
        &od_paths,
        &scenario.network,
        SYNTH_TAU,
        SYNTH_H,
        SYNTH_T_START,
    )?;

    // h0 demand from the offload pre-pass: riders already on blue when the
    // suspension starts, relocated to their nearest upstream platforms
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut background_trips = Vec::new();
    for origin in ["b2", "b3", "b4", "b5"] {
        for _ in 0..32 {
            let tap_in = SYNTH_T_START - rng.random_range(60..1400);
            background_trips.push((direct(origin, "blue", "loop"), tap_in));
        }
    }
    let offloaded = offload_prepass(&scenario, &incident, &background_trips)?;
    let mut h0_counts: BTreeMap<String, f64> = BTreeMap::new();
    for off in &offloaded {
        *h0_counts.entry(off.station.0.clone()).or_default() += 1.0;
    }

    // no-leaving base demand over H × K
    let mut base = DemandMatrix::zeros(&index);
    let od_pos = |name: &str| {
        index
            .ods
            .iter()
            .position(|(o, _)| o.0 == name)
            .expect("od present")
    };
    for (st, count) in &h0_counts {
        base.set(&index, 0, od_pos(st), *count);
    }
    base.set(&index, 0, od_pos("g1"), 40.0);
    base.set(&index, 0, od_pos("br1"), 40.0);
    let per_interval = [("b2", 120.0), ("b3", 150.0), ("b4", 110.0), ("b5", 130.0)];
    for h in 1..=SYNTH_H {
        for (st, v) in per_interval {
            base.set(&index, h, od_pos(st), v);
        }
        base.set(&index, h, od_pos("g1"), 90.0);
        base.set(&index, h, od_pos("br1"), 90.0);
    }

    // jittered baseline days, then leave-proportion samples, then their mean
    let mut baseline_days = Vec::new();
    for _ in 0..12 {
        let values: Vec<f64> = base
            .as_slice()
            .iter()
            .map(|v| v * (1.0 + rng.random_range(-0.12..0.12)))
            .collect();
        baseline_days.push(DemandMatrix::new(values, &index)?);
    }
    let samples = generate_synthetic_samples(&baseline_days, 0.1, 0.3, seed ^ 0x5151, &index)?;
    let n = samples.len() as f64;
    let mut mean = vec![0.0; index.n_cells()];
    for s in &samples {
        for (m, v) in mean.iter_mut().zip(s.as_slice()) {
            *m += v / n;
        }
    }
    let nominal_demand = DemandMatrix::new(mean, &index)?;

    // held-out incident-day draw: an unseen day with its own leave proportions
    let actual_values: Vec<f64> = base
        .as_slice()
        .iter()
        .map(|v| {
            let day_jitter = 1.0 + rng.random_range(-0.10..0.10);
            let keep = 1.0 - rng.random_range(0.1..0.3);
            v * day_jitter * keep
        })
        .collect();
    let actual_demand = DemandMatrix::new(actual_values, &index)?;

    let mut waiting_path = BTreeMap::new();
    let mut observed_increases = BTreeMap::new();
    for k in 0..4 {
        waiting_path.insert(k, 0usize);
        for h in 0..index.n_times() {
            observed_increases.insert((h, k, 1), 65.0);
            observed_increases.insert((h, k, 2), 25.0);
        }
    }
    let status_quo = StatusQuoInputs {
        wait_curve: vec![
            (0.0, 0.85),
            (600.0, 0.55),
            (1200.0, 0.40),
            (1800.0, 0.30),
            (3600.0, 0.20),
        ],
        waiting_path,
        observed_increases,
    };

    Ok(SynthScenario {
        scenario,
        incident,
        index,
        baseline_days,
        samples,
        nominal_demand,
        actual_demand,
        background_ods,
        status_quo,
    })
}

impl SynthScenario {
    /// File-shaped views for writing the scenario to disk.
    pub fn to_files(&self) -> (NetworkFile, TimetableFile, PathsFile, Incident, DemandFile) {
        let network = NetworkFile {
            stations: self.scenario.network.stations.values().cloned().collect(),
            routes: self.scenario.network.routes.values().cloned().collect(),
        };
        let timetable = TimetableFile {
            runs: self.scenario.timetable.runs.clone(),
        };
        let mut waiting = Vec::new();
        for (&k, &r) in &self.status_quo.waiting_path {
            let (o, d) = &self.index.ods[k];
            waiting.push(WaitingPathRecord {
                origin: o.clone(),
                destination: d.clone(),
                path: r,
            });
        }
        let mut increases = Vec::new();
        for (&(h, k, r), &count) in &self.status_quo.observed_increases {
            let (o, d) = &self.index.ods[k];
            increases.push(IncreaseRecord {
                h,
                origin: o.clone(),
                destination: d.clone(),
                path: r,
                count,
            });
        }
        let paths = PathsFile {
            tau_seconds: Some(self.scenario.tau),
            tau_minutes: None,
            horizon_intervals: self.scenario.h_count,
            ods: self
                .scenario
                .od_paths
                .iter()
                .zip(self.background_ods.iter())
                .map(|(od, bg)| OdPathsFile {
                    origin: od.origin.clone(),
                    destination: od.destination.clone(),
                    background: *bg,
                    paths: od.paths.clone(),
                })
                .collect(),
            status_quo: Some(StatusQuoFile {
                wait_curve: self.status_quo.wait_curve.clone(),
                waiting_path: waiting,
                observed_increases: increases,
            }),
        };
        let demand = DemandFile {
            nominal: crate::scenario::demand_to_records(&self.nominal_demand, &self.index),
            samples: self
                .samples
                .iter()
                .map(|s| crate::scenario::demand_to_records(s, &self.index))
                .collect(),
        };
        (network, timetable, paths, self.incident.clone(), demand)
    }

    pub fn actual_demand_file(&self) -> DemandFile {
        DemandFile {
            nominal: crate::scenario::demand_to_records(&self.actual_demand, &self.index),
            samples: Vec::new(),
        }
    }
}

/// The capacity-constrained line used to pin the gradient decomposition: one
/// rider travels the full line s1..sN, and a one-stop rider waits at each
/// intermediate station. With capacity 1 the full-line rider's bus departs
/// full everywhere, so adding a second full-line rider pushes every waiter
/// back exactly one headway: ΔZ = T^A + (N−1)·W.
pub struct ExampleLine {
    pub scenario: Scenario,
    pub index: RecommendationIndex,
    /// full-line rider plus the intermediate waiters
    pub base_passengers: Vec<crate::simulator::Passenger>,
    /// the extra unit on the full-line triple
    pub added: crate::simulator::Passenger,
    pub rider_triple: (usize, usize, usize),
}

pub fn example_line(n: usize, headway: Seconds, capacity: u32) -> Result<ExampleLine> {
    assert!(n >= 3);
    let names: Vec<String> = (1..=n).map(|i| format!("s{i}")).collect();
    let stops: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let stations: Vec<Station> = stops.iter().map(|s| station(s, &[])).collect();
    let routes = vec![Route {
        id: "line".into(),
        mode: Mode::Bus,
        stop_sequence: stops.iter().map(|s| (*s).into()).collect(),
    }];
    let network = Network::new(stations, routes)?;
    let t_start: Seconds = 2000;
    let runs = spaced_runs(
        "line",
        &stops,
        capacity,
        1000,
        headway,
        t_start + 6 * headway,
        120,
        10,
    );
    let timetable = Timetable::new(runs, &network)?;

    let bare = |board: &str, alight: &str| Path {
        legs: vec![Leg {
            board: board.into(),
            route: "line".into(),
            alight: alight.into(),
        }],
        access_seconds: 0,
        egress_seconds: 0,
    };
    let mut od_paths = vec![OdPaths {
        origin: stops[0].into(),
        destination: (*stops.last().unwrap()).into(),
        paths: vec![bare(stops[0], stops.last().unwrap())],
    }];
    for j in 1..(n - 1) {
        od_paths.push(OdPaths {
            origin: stops[j].into(),
            destination: stops[j + 1].into(),
            paths: vec![bare(stops[j], stops[j + 1])],
        });
    }
    let scenario = Scenario {
        network,
        timetable,
        od_paths: od_paths.clone(),
        tau: 600,
        h_count: 0,
    };
    let index = build_index(&od_paths, &scenario.network, 600, 0, t_start)?;

    // the full-line rider boards the first departure after T_s; waiters are
    // timed so that this same vehicle is also their first candidate
    let rider_bus_dep_s1 = scenario
        .timetable
        .runs
        .iter()
        .map(|r| r.stop_times[0].departure)
        .filter(|d| *d >= t_start)
        .min()
        .expect("service after T_s");
    let mut base_passengers = vec![crate::simulator::Passenger {
        pid: 0,
        triple: (0, 0, 0),
        origin_arrival_time: t_start,
    }];
    for k in 1..index.n_ods() {
        // od k waits at stop index k (station s_{k+1})
        let dep_here = rider_bus_dep_s1 + (120 + 10) * k as Seconds;
        base_passengers.push(crate::simulator::Passenger {
            pid: k as u32,
            triple: (0, k, 0),
            origin_arrival_time: dep_here - headway / 2,
        });
    }
    let added = crate::simulator::Passenger {
        pid: 1000,
        triple: (0, 0, 0),
        origin_arrival_time: t_start,
    };
    Ok(ExampleLine {
        scenario,
        index,
        base_passengers,
        added,
        rider_triple: (0, 0, 0),
    })
}

/// Small randomized two-route scenario for invariant fuzzing: parallel fast
/// and slow lines over a shared corridor, a suspension window on the fast
/// line, and modest random demand. Always valid; structure fixed, parameters
/// seeded.
pub fn random_small_scenario(
    seed: u64,
) -> Result<(Scenario, Incident, RecommendationIndex, DemandMatrix)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_stops = rng.random_range(4..=6);
    let names: Vec<String> = (1..=n_stops).map(|i| format!("s{i}")).collect();
    let stops: Vec<&str> = names.iter().map(|s| s.as_str()).collect();

    let stations: Vec<Station> = stops.iter().map(|s| station(s, &[])).collect();
    let routes = vec![
        Route {
            id: "fast".into(),
            mode: Mode::Rail,
            stop_sequence: stops.iter().map(|s| (*s).into()).collect(),
        },
        Route {
            id: "slow".into(),
            mode: Mode::Bus,
            stop_sequence: stops.iter().map(|s| (*s).into()).collect(),
        },
    ];
    let network = Network::new(stations, routes)?;

    let t_start: Seconds = 10_000;
    let service_end = t_start + 4000;
    let fast_cap = rng.random_range(8..40);
    let slow_cap = rng.random_range(8..40);
    let fast_headway = rng.random_range(180..420);
    let slow_headway = rng.random_range(180..420);
    let mut runs = spaced_runs(
        "fast",
        &stops,
        fast_cap,
        8000 + rng.random_range(0..200),
        fast_headway,
        service_end,
        rng.random_range(60..180),
        15,
    );
    runs.extend(spaced_runs(
        "slow",
        &stops,
        slow_cap,
        8050 + rng.random_range(0..200),
        slow_headway,
        service_end,
        rng.random_range(150..300),
        15,
    ));
    let timetable = Timetable::new(runs, &network)?;

    let last = stops[stops.len() - 1];
    let mid = stops[stops.len() / 2];
    let od_paths = vec![
        OdPaths {
            origin: stops[0].into(),
            destination: last.into(),
            paths: vec![
                direct(stops[0], "fast", last),
                direct(stops[0], "slow", last),
                two_leg(stops[0], "slow", mid, mid, "fast", last),
            ],
        },
        OdPaths {
            origin: stops[1].into(),
            destination: last.into(),
            paths: vec![direct(stops[1], "fast", last), direct(stops[1], "slow", last)],
        },
    ];

    let tau = 300;
    let h_count = 2;
    let scenario = Scenario {
        network,
        timetable,
        od_paths: od_paths.clone(),
        tau,
        h_count,
    };
    let index = build_index(&od_paths, &scenario.network, tau, h_count, t_start)?;

    let end = t_start + rng.random_range(400..1200);
    let suspend_to = if rng.random_range(0..2) == 0 { mid } else { last };
    let incident = Incident {
        start: t_start,
        end,
        supply_changes: vec![SupplyChange::SuspendRouteBetween {
            route: "fast".into(),
            from: stops[0].into(),
            to: suspend_to.into(),
            start: t_start,
            end,
        }],
    };

    let mut demand = DemandMatrix::zeros(&index);
    for h in 0..index.n_times() {
        for k in 0..index.n_ods() {
            demand.set(&index, h, k, rng.random_range(10.0..80.0));
        }
    }
    Ok((scenario, incident, index, demand))
}
