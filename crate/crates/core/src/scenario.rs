//! Scenario files on disk: network.json, timetable.json, paths.json,
//! demand.json, incident.json. Loaders reject unknown fields.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::benchmarks::StatusQuoInputs;
use crate::error::{Error, Result};
use crate::model::{
    build_index, DemandMatrix, Incident, Network, OdPaths, Path, RecommendationIndex, Route,
    Scenario, Seconds, Station, StationId, Timetable, VehicleRun,
};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub stations: Vec<Station>,
    pub routes: Vec<Route>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimetableFile {
    pub runs: Vec<VehicleRun>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_seconds: Option<Seconds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_minutes: Option<Seconds>,
    pub horizon_intervals: usize,
    pub ods: Vec<OdPathsFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status_quo: Option<StatusQuoFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdPathsFile {
    pub origin: StationId,
    pub destination: StationId,
    /// background rows carry fixed flows rather than recommendations
    #[serde(default)]
    pub background: bool,
    pub paths: Vec<Path>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusQuoFile {
    pub wait_curve: Vec<(f64, f64)>,
    pub waiting_path: Vec<WaitingPathRecord>,
    #[serde(default)]
    pub observed_increases: Vec<IncreaseRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaitingPathRecord {
    pub origin: StationId,
    pub destination: StationId,
    pub path: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncreaseRecord {
    pub h: usize,
    pub origin: StationId,
    pub destination: StationId,
    pub path: usize,
    pub count: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandFile {
    pub nominal: Vec<DemandRecord>,
    #[serde(default)]
    pub samples: Vec<Vec<DemandRecord>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandRecord {
    pub h: usize,
    pub origin: StationId,
    pub destination: StationId,
    pub value: f64,
}

/// Everything a pipeline stage needs, loaded and validated.
pub struct ScenarioBundle {
    pub scenario: Scenario,
    pub incident: Incident,
    pub index: RecommendationIndex,
    pub nominal_demand: DemandMatrix,
    pub demand_samples: Vec<DemandMatrix>,
    /// od indices flagged as background traffic
    pub background_ods: Vec<bool>,
    pub status_quo: Option<StatusQuoInputs>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &FsPath) -> Result<T> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::InvalidScenario(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| Error::InvalidScenario(format!("{}: {e}", path.display())))
}

pub fn load_bundle(dir: &FsPath) -> Result<ScenarioBundle> {
    let network_file: NetworkFile = read_json(&dir.join("network.json"))?;
    let timetable_file: TimetableFile = read_json(&dir.join("timetable.json"))?;
    let paths_file: PathsFile = read_json(&dir.join("paths.json"))?;
    let incident: Incident = read_json(&dir.join("incident.json"))?;
    let demand_file: DemandFile = read_json(&dir.join("demand.json"))?;
    assemble_bundle(network_file, timetable_file, paths_file, incident, demand_file)
}

pub fn assemble_bundle(
    network_file: NetworkFile,
    timetable_file: TimetableFile,
    paths_file: PathsFile,
    incident: Incident,
    demand_file: DemandFile,
) -> Result<ScenarioBundle> {
    let network = Network::new(network_file.stations, network_file.routes)?;
    let timetable = Timetable::new(timetable_file.runs, &network)?;
    incident.validate(&network, &timetable)?;

    let tau = match (paths_file.tau_seconds, paths_file.tau_minutes) {
        (Some(s), None) => s,
        (None, Some(m)) => m * 60,
        _ => {
            return Err(Error::InvalidScenario(
                "paths.json must give exactly one of tau_seconds or tau_minutes".into(),
            ))
        }
    };
    let od_paths: Vec<OdPaths> = paths_file
        .ods
        .iter()
        .map(|od| OdPaths {
            origin: od.origin.clone(),
            destination: od.destination.clone(),
            paths: od.paths.clone(),
        })
        .collect();
    let background_ods: Vec<bool> = paths_file.ods.iter().map(|od| od.background).collect();

    let scenario = Scenario {
        network,
        timetable,
        od_paths: od_paths.clone(),
        tau,
        h_count: paths_file.horizon_intervals,
    };
    let index = build_index(
        &od_paths,
        &scenario.network,
        tau,
        paths_file.horizon_intervals,
        incident.start,
    )?;

    let nominal_demand = demand_from_records(&demand_file.nominal, &index)?;
    let demand_samples = demand_file
        .samples
        .iter()
        .map(|s| demand_from_records(s, &index))
        .collect::<Result<Vec<_>>>()?;

    let status_quo = paths_file
        .status_quo
        .as_ref()
        .map(|sq| status_quo_inputs(sq, &index))
        .transpose()?;

    Ok(ScenarioBundle {
        scenario,
        incident,
        index,
        nominal_demand,
        demand_samples,
        background_ods,
        status_quo,
    })
}

fn od_index(index: &RecommendationIndex, origin: &StationId, destination: &StationId) -> Option<usize> {
    index
        .ods
        .iter()
        .position(|(o, d)| o == origin && d == destination)
}

/// Records may omit zero cells; duplicates and unknown (h, od) keys are errors.
pub fn demand_from_records(
    records: &[DemandRecord],
    index: &RecommendationIndex,
) -> Result<DemandMatrix> {
    let mut values = vec![0.0; index.n_cells()];
    let mut seen: BTreeMap<usize, ()> = BTreeMap::new();
    for rec in records {
        let k = od_index(index, &rec.origin, &rec.destination).ok_or_else(|| {
            Error::InvalidDemand(format!(
                "demand references undeclared od {}->{}",
                rec.origin, rec.destination
            ))
        })?;
        if rec.h >= index.n_times() {
            return Err(Error::InvalidDemand(format!(
                "demand interval h={} outside horizon",
                rec.h
            )));
        }
        let cell = index.cell(rec.h, k);
        if seen.insert(cell, ()).is_some() {
            return Err(Error::InvalidDemand(format!(
                "duplicate demand record for h={} {}->{}",
                rec.h, rec.origin, rec.destination
            )));
        }
        values[cell] = rec.value;
    }
    DemandMatrix::new(values, index)
}

pub fn demand_to_records(demand: &DemandMatrix, index: &RecommendationIndex) -> Vec<DemandRecord> {
    let mut out = Vec::with_capacity(index.n_cells());
    for h in 0..index.n_times() {
        for (k, (origin, destination)) in index.ods.iter().enumerate() {
            out.push(DemandRecord {
                h,
                origin: origin.clone(),
                destination: destination.clone(),
                value: demand.get(index, h, k),
            });
        }
    }
    out
}

fn status_quo_inputs(file: &StatusQuoFile, index: &RecommendationIndex) -> Result<StatusQuoInputs> {
    let mut waiting_path = BTreeMap::new();
    for rec in &file.waiting_path {
        let k = od_index(index, &rec.origin, &rec.destination).ok_or_else(|| {
            Error::InvalidScenario(format!(
                "status quo waiting path references undeclared od {}->{}",
                rec.origin, rec.destination
            ))
        })?;
        waiting_path.insert(k, rec.path);
    }
    let mut observed_increases = BTreeMap::new();
    for rec in &file.observed_increases {
        let k = od_index(index, &rec.origin, &rec.destination).ok_or_else(|| {
            Error::InvalidScenario(format!(
                "status quo increase references undeclared od {}->{}",
                rec.origin, rec.destination
            ))
        })?;
        observed_increases.insert((rec.h, k, rec.path), rec.count);
    }
    Ok(StatusQuoInputs {
        wait_curve: file.wait_curve.clone(),
        waiting_path,
        observed_increases,
    })
}

/// Load a standalone demand file (e.g. the held-out evaluation demand).
pub fn load_demand(path: &FsPath, index: &RecommendationIndex) -> Result<(DemandMatrix, Vec<DemandMatrix>)> {
    let file: DemandFile = read_json(path)?;
    let nominal = demand_from_records(&file.nominal, index)?;
    let samples = file
        .samples
        .iter()
        .map(|s| demand_from_records(s, index))
        .collect::<Result<Vec<_>>>()?;
    Ok((nominal, samples))
}

/// Write the five scenario files for a bundle-shaped input.
pub fn write_scenario_files(
    dir: &FsPath,
    network: &NetworkFile,
    timetable: &TimetableFile,
    paths: &PathsFile,
    incident: &Incident,
    demand: &DemandFile,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let write = |name: &str, value: String| -> Result<()> {
        fs::write(dir.join(name), value)?;
        Ok(())
    };
    write("network.json", serde_json::to_string_pretty(network)?)?;
    write("timetable.json", serde_json::to_string_pretty(timetable)?)?;
    write("paths.json", serde_json::to_string_pretty(paths)?)?;
    write("incident.json", serde_json::to_string_pretty(incident)?)?;
    write("demand.json", serde_json::to_string_pretty(demand)?)?;
    Ok(())
}
