//! Shared fixtures for unit tests.

use crate::model::*;

pub fn station(id: &str, walks: &[(&str, Seconds)]) -> Station {
    Station {
        id: id.into(),
        name: id.to_uppercase(),
        transfer_walk_seconds: walks.iter().map(|(s, w)| ((*s).into(), *w)).collect(),
    }
}

pub fn route(id: &str, mode: Mode, stops: &[&str]) -> Route {
    Route {
        id: id.into(),
        mode,
        stop_sequence: stops.iter().map(|s| (*s).into()).collect(),
    }
}

/// Evenly spaced runs along a route: first departure at `first`, one run per
/// `headway`, `hop` seconds between stops, `dwell` seconds at each stop.
#[allow(clippy::too_many_arguments)]
pub fn runs_every(
    route_id: &str,
    stops: &[&str],
    capacity: u32,
    first: Seconds,
    headway: Seconds,
    count: usize,
    hop: Seconds,
    dwell: Seconds,
) -> Vec<VehicleRun> {
    (0..count)
        .map(|i| {
            let base = first + headway * i as Seconds;
            VehicleRun {
                run_id: format!("{route_id}-{i:02}").as_str().into(),
                route: route_id.into(),
                capacity,
                stop_times: stops
                    .iter()
                    .enumerate()
                    .map(|(j, s)| {
                        let arr = base + (hop + dwell) * j as Seconds;
                        StopTime {
                            station: (*s).into(),
                            arrival: arr,
                            departure: arr + dwell,
                        }
                    })
                    .collect(),
            }
        })
        .collect()
}

pub fn two_line_network() -> (Network, Timetable) {
    let stations = vec![
        station("a1", &[]),
        station("a2", &[("b1", 120)]),
        station("a3", &[]),
        station("b1", &[("a2", 120)]),
        station("b2", &[]),
    ];
    let routes = vec![
        route("line-a", Mode::Rail, &["a1", "a2", "a3"]),
        route("line-b", Mode::Bus, &["b1", "b2"]),
    ];
    let network = Network::new(stations, routes).unwrap();
    let mut runs = runs_every("line-a", &["a1", "a2", "a3"], 100, 600, 300, 10, 180, 20);
    runs.extend(runs_every("line-b", &["b1", "b2"], 40, 650, 300, 10, 240, 20));
    let timetable = Timetable::new(runs, &network).unwrap();
    (network, timetable)
}

/// A bare index for tests that only exercise demand/share/flow arithmetic.
pub fn toy_index(h_count: usize, path_counts: &[usize]) -> RecommendationIndex {
    let ods: Vec<(StationId, StationId)> = (0..path_counts.len())
        .map(|k| (format!("o{k}").as_str().into(), format!("d{k}").as_str().into()))
        .collect();
    let paths: Vec<Vec<Path>> = path_counts
        .iter()
        .map(|&n| {
            (0..n)
                .map(|_| Path {
                    legs: vec![Leg {
                        board: "x".into(),
                        route: "r".into(),
                        alight: "y".into(),
                    }],
                    access_seconds: 0,
                    egress_seconds: 0,
                })
                .collect()
        })
        .collect();
    let n_times = h_count + 1;
    let mut triples = Vec::new();
    let mut row_offsets = Vec::new();
    for h in 0..n_times {
        for (k, p) in paths.iter().enumerate() {
            row_offsets.push(triples.len());
            for r in 0..p.len() {
                triples.push((h, k, r));
            }
        }
    }
    row_offsets.push(triples.len());
    RecommendationIndex {
        tau: 600,
        h_count,
        t_start: 0,
        ods,
        paths,
        triples,
        row_offsets,
    }
}
