//! Artifact files: atomic writes, configuration hashes, grid functions,
//! measures, potential profiles and convergence logs.
//!
//! Every artifact records the hash of the configuration that produced it;
//! readers refuse artifacts whose hash differs from the expected one.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, GridFunction};
use crate::measure::{Atom, Measure};
use crate::potentials::PotentialProfile;
use crate::solver::LogEntry;

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// SHA-256 of the compact JSON serialization, as 16 hex digits.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(&Sha256::digest(&json)[..8]))
}

fn check_hash(found: &str, expected: Option<&str>, what: &Path) -> Result<()> {
    match expected {
        Some(e) if e != found => Err(Error::Integrity(format!(
            "{} was produced by configuration {found}, expected {e}; refusing to mix artifacts",
            what.display()
        ))),
        _ => Ok(()),
    }
}

#[derive(Serialize, Deserialize)]
struct GridFunctionFile {
    format: String,
    config_hash: String,
    grid: String,
    dim: usize,
    shape: [usize; 2],
    h: f64,
    far_field: Option<f64>,
    values: Vec<f64>,
}

const GRID_FUNCTION_FORMAT: &str = "mixpot-grid-function/1";

pub fn write_grid_function(path: &Path, grid: &GridDomain, f: &GridFunction, hash: &str) -> Result<()> {
    f.check_grid(grid)?;
    let file = GridFunctionFile {
        format: GRID_FUNCTION_FORMAT.into(),
        config_hash: hash.into(),
        grid: grid.fingerprint(),
        dim: grid.dim(),
        shape: grid.shape(),
        h: grid.h(),
        far_field: f.far_field,
        values: f.values.clone(),
    };
    atomic_write(path, &serde_json::to_vec(&file)?)
}

/// Reads a grid function written for `grid`; `expected_hash` guards against mixing runs.
pub fn read_grid_function(path: &Path, grid: &GridDomain, expected_hash: Option<&str>) -> Result<GridFunction> {
    let file: GridFunctionFile = serde_json::from_slice(&std::fs::read(path)?)?;
    if file.format != GRID_FUNCTION_FORMAT {
        return Err(Error::Format(format!("{} is not a grid function file", path.display())));
    }
    check_hash(&file.config_hash, expected_hash, path)?;
    if file.grid != grid.fingerprint() {
        return Err(Error::GridMismatch(format!("{} was written on a different grid", path.display())));
    }
    GridFunction::new(file.values, file.far_field)
}

/// Measure file: point masses plus an optional nodal density tied to a grid fingerprint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub density: Option<DensityFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityFile {
    pub grid: String,
    pub values: Vec<f64>,
}

impl MeasureFile {
    pub fn from_measure(mu: &Measure) -> Self {
        MeasureFile {
            atoms: mu.atoms.clone(),
            density: mu.density.as_ref().map(|d| DensityFile {
                grid: d.grid.fingerprint(),
                values: d.values.values.clone(),
            }),
        }
    }

    /// Builds the measure; a density part must match `grid`.
    pub fn into_measure(self, grid: &GridDomain) -> Result<Measure> {
        let mut mu = Measure::from_atoms(self.atoms)?;
        if let Some(d) = self.density {
            if d.grid != grid.fingerprint() {
                return Err(Error::GridMismatch("measure density was sampled on a different grid".into()));
            }
            let density = Measure::from_density(grid, GridFunction::new(d.values, None)?)?;
            mu.density = density.density;
        }
        Ok(mu)
    }
}

pub fn write_measure(path: &Path, mu: &Measure) -> Result<()> {
    atomic_write(path, &serde_json::to_vec_pretty(&MeasureFile::from_measure(mu))?)
}

pub fn read_measure(path: &Path, grid: &GridDomain) -> Result<Measure> {
    let file: MeasureFile = serde_json::from_slice(&std::fs::read(path)?)?;
    file.into_measure(grid)
}

/// `radius,value` rows preceded by a hash comment line.
pub fn profile_csv(profile: &PotentialProfile, hash: &str) -> String {
    let mut out = format!("# config_hash={hash}\nradius,value\n");
    for (r, v) in profile.radii.iter().zip(&profile.values) {
        out.push_str(&format!("{r:e},{v:e}\n"));
    }
    out
}

/// Parses a profile CSV, checking the hash comment.
pub fn parse_profile_csv(text: &str, expected_hash: Option<&str>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    let found = first
        .strip_prefix("# config_hash=")
        .ok_or_else(|| Error::Format("profile CSV lacks its hash line".into()))?;
    check_hash(found, expected_hash, Path::new("profile CSV"))?;
    if lines.next() != Some("radius,value") {
        return Err(Error::Format("profile CSV header must be `radius,value`".into()));
    }
    let mut radii = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut it = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|t| t.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad profile row {}: {line}", i + 1)))
        };
        radii.push(parse(it.next())?);
        values.push(parse(it.next())?);
    }
    Ok((radii, values))
}

#[derive(Serialize, Deserialize)]
struct LogFile {
    config_hash: String,
    entries: Vec<LogEntry>,
}

/// Convergence log as `{"config_hash": …, "entries": [{iter, residual, step, eps}, …]}`.
pub fn write_log(path: &Path, log: &[LogEntry], hash: &str) -> Result<()> {
    let file = LogFile {
        config_hash: hash.into(),
        entries: log.to_vec(),
    };
    atomic_write(path, &serde_json::to_vec_pretty(&file)?)
}

pub fn read_log(path: &Path, expected_hash: Option<&str>) -> Result<Vec<LogEntry>> {
    let file: LogFile = serde_json::from_slice(&std::fs::read(path)?)?;
    check_hash(&file.config_hash, expected_hash, path)?;
    Ok(file.entries)
}
