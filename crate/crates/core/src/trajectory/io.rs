//! On-disk dataset layout: `manifest.json` plus `records.csv`.
//!
//! Floats are written with `Display`, which is the shortest decimal that
//! parses back to the same `f64`. `records.csv` starts with one comment line
//! carrying the format version and config hash, then the column header.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Scheme, TrajectoryDataset, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::hilbert::{Model, Qubit, SystemParams};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.csv";
pub const RECORDS_HEADER: &str = "traj,label,seed,t,x_mean,n_mean,sz_mean,current";

/// Everything that determines the dataset bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub params: SystemParams,
    pub model: Model,
    pub dt: f64,
    pub t_max: f64,
    pub n_per_class: usize,
    pub master_seed: u64,
    pub scheme: Scheme,
}

impl DatasetConfig {
    pub fn of(ds: &TrajectoryDataset) -> Self {
        DatasetConfig {
            params: ds.params.clone(),
            model: ds.model,
            dt: ds.dt,
            t_max: ds.t_max,
            n_per_class: ds.n_per_class,
            master_seed: ds.master_seed,
            scheme: ds.scheme,
        }
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub config: DatasetConfig,
    pub format_version: u32,
    pub config_hash: String,
}

impl Manifest {
    pub fn new(config: DatasetConfig) -> Self {
        let config_hash = config.hash();
        Manifest {
            config,
            format_version: FORMAT_VERSION,
            config_hash,
        }
    }
}

/// Writes `dir/manifest.json` and `dir/records.csv`, creating `dir`.
pub fn write_dataset(ds: &TrajectoryDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest::new(DatasetConfig::of(ds));

    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format("manifest", e))?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(RECORDS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    write_records(&mut w, &manifest, &ds.records)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))
}

fn write_records(w: &mut impl Write, manifest: &Manifest, records: &[TrajectoryRecord]) -> std::io::Result<()> {
    writeln!(
        w,
        "# format_version={},config_hash={}",
        manifest.format_version, manifest.config_hash
    )?;
    writeln!(w, "{RECORDS_HEADER}")?;
    for (traj, rec) in records.iter().enumerate() {
        let label = rec.label.label();
        for i in 0..rec.len() {
            write!(
                w,
                "{traj},{label},{},{},{},{},",
                rec.seed,
                rec.time(i),
                rec.x_mean[i],
                rec.n_mean[i]
            )?;
            if let Some(sz) = &rec.sz_mean {
                write!(w, "{}", sz[i])?;
            }
            writeln!(w, ",{}", rec.current[i])?;
        }
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(path_str(&path), e))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            path_str(&path),
            format!("unsupported format_version {}", manifest.format_version),
        ));
    }
    if manifest.config_hash != manifest.config.hash() {
        return Err(Error::format(path_str(&path), "config_hash does not match contents"));
    }
    Ok(manifest)
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<TrajectoryDataset> {
    let manifest = read_manifest(dir)?;
    let cfg = &manifest.config;
    let path = dir.join(RECORDS_FILE);
    let bad = |detail: String| Error::format(path_str(&path), detail);

    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    let stamp = lines.next().unwrap_or_default();
    let expected = format!(
        "# format_version={},config_hash={}",
        manifest.format_version, manifest.config_hash
    );
    if stamp != expected {
        return Err(bad("first line does not match the manifest".into()));
    }
    if lines.next() != Some(RECORDS_HEADER) {
        return Err(bad("unexpected header".into()));
    }

    let steps = (cfg.t_max / cfg.dt).round() as usize;
    let len = steps + 1;
    let n_traj = 2 * cfg.n_per_class;
    let with_sz = cfg.model == Model::Full;
    let mut records: Vec<TrajectoryRecord> = Vec::with_capacity(n_traj);

    for (row, line) in lines.enumerate() {
        let line_no = row + 3;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(bad(format!("line {line_no}: expected 8 columns, got {}", cols.len())));
        }
        let num = |k: usize| -> Result<f64> {
            cols[k]
                .parse::<f64>()
                .map_err(|e| bad(format!("line {line_no}, column {k}: {e}")))
        };
        let int = |k: usize| -> Result<u64> {
            cols[k]
                .parse::<u64>()
                .map_err(|e| bad(format!("line {line_no}, column {k}: {e}")))
        };
        let traj = int(0)? as usize;
        let label = Qubit::from_label(int(1)? as u8).map_err(|_| bad(format!("line {line_no}: bad label")))?;
        let seed = int(2)?;
        if traj == records.len() {
            records.push(TrajectoryRecord {
                label,
                seed,
                dt: cfg.dt,
                x_mean: Vec::with_capacity(len),
                n_mean: Vec::with_capacity(len),
                sz_mean: with_sz.then(|| Vec::with_capacity(len)),
                current: Vec::with_capacity(len),
            });
        } else if traj + 1 != records.len() {
            return Err(bad(format!("line {line_no}: rows not sorted by traj")));
        }
        let rec = records.last_mut().expect("pushed above");
        if rec.label != label || rec.seed != seed {
            return Err(bad(format!("line {line_no}: label or seed changes within traj {traj}")));
        }
        let i = rec.x_mean.len();
        if (num(3)? - rec.time(i)).abs() > 1e-9 * cfg.dt.max(1.0) {
            return Err(bad(format!("line {line_no}: time out of sequence")));
        }
        rec.x_mean.push(num(4)?);
        rec.n_mean.push(num(5)?);
        match (&mut rec.sz_mean, cols[6].is_empty()) {
            (Some(sz), false) => sz.push(num(6)?),
            (None, true) => {}
            _ => return Err(bad(format!("line {line_no}: sz_mean presence does not match model"))),
        }
        rec.current.push(num(7)?);
    }

    if records.len() != n_traj {
        return Err(bad(format!("expected {n_traj} trajectories, found {}", records.len())));
    }
    for (k, rec) in records.iter().enumerate() {
        if rec.len() != len {
            return Err(bad(format!("traj {k} has {} points, expected {len}", rec.len())));
        }
        let expected_label = if k < cfg.n_per_class { Qubit::Down } else { Qubit::Up };
        if rec.label != expected_label {
            return Err(bad(format!("traj {k} is out of (class, index) order")));
        }
    }

    Ok(TrajectoryDataset {
        params: cfg.params.clone(),
        model: cfg.model,
        dt: cfg.dt,
        t_max: cfg.t_max,
        n_per_class: cfg.n_per_class,
        master_seed: cfg.master_seed,
        scheme: cfg.scheme,
        records,
    })
}

fn path_str(p: &Path) -> String {
    PathBuf::from(p).display().to_string()
}
