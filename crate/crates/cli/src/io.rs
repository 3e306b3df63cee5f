//! Share-file schema, config hashing, and small CSV/JSON writers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use detour_core::model::{PathShares, RecommendationIndex, StationId};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharesFile {
    pub entries: Vec<ShareRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareRecord {
    pub h: usize,
    pub origin: StationId,
    pub destination: StationId,
    pub path: usize,
    pub share: f64,
}

pub fn shares_to_file(shares: &PathShares, index: &RecommendationIndex) -> SharesFile {
    let mut entries = Vec::with_capacity(index.f_len());
    for &(h, k, r) in &index.triples {
        let (origin, destination) = &index.ods[k];
        entries.push(ShareRecord {
            h,
            origin: origin.clone(),
            destination: destination.clone(),
            path: r,
            share: shares.get(index, h, k, r),
        });
    }
    SharesFile { entries }
}

pub fn shares_from_file(file: &SharesFile, index: &RecommendationIndex) -> Result<PathShares> {
    let mut values = vec![0.0; index.f_len()];
    let mut seen = vec![false; index.f_len()];
    for rec in &file.entries {
        let k = index
            .ods
            .iter()
            .position(|(o, d)| o == &rec.origin && d == &rec.destination)
            .with_context(|| format!("shares reference undeclared od {}->{}", rec.origin, rec.destination))?;
        anyhow::ensure!(rec.h < index.n_times(), "share interval h={} outside horizon", rec.h);
        anyhow::ensure!(
            rec.path < index.n_paths(k),
            "share path {} out of range for od {}->{}",
            rec.path,
            rec.origin,
            rec.destination
        );
        let f = index.f_index(rec.h, k, rec.path);
        anyhow::ensure!(!seen[f], "duplicate share record");
        seen[f] = true;
        values[f] = rec.share;
    }
    anyhow::ensure!(seen.iter().all(|s| *s), "shares file does not cover all of F");
    Ok(PathShares::new(values, index)?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_text(path: &Path, value: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, value).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Provenance hash over the input files and the flag string, in order.
pub fn config_hash(files: &[PathBuf], args: &[String]) -> Result<String> {
    let mut hasher = Sha256::new();
    for f in files {
        hasher.update(f.to_string_lossy().as_bytes());
        let bytes = fs::read(f).with_context(|| format!("hashing {}", f.display()))?;
        hasher.update(&bytes);
    }
    for a in args {
        hasher.update(a.as_bytes());
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
