//! On-disk layout of a run: `<out>/<hash>/config.json`, one
//! `cells/<n>_<m>_<rep>.json` per cell, and the report files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use compromise_core::cutplane::PiecewiseLinearModel;
use compromise_core::qp::Cut;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Model audit of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// Smallest `f_n − model` (cut models) or `mean recourse − minorant` (SD)
    /// over the audit points.
    pub slack: f64,
    /// Termination certificate (cut models) or augmented-model certificate (SD).
    pub certificate: bool,
}

/// Stored SD model: the rescaled cuts and the iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdModelRecord {
    pub cuts: Vec<Cut>,
    pub k: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    /// Sample stream index `i`.
    pub index: u64,
    pub x: Vec<f64>,
    /// `f_n(x)` for SAA and cut models, `f̂(x̂)` for SD.
    pub value: f64,
    /// Certified lower bound on `θ_n` (SAA and cut models).
    pub theta: f64,
    pub eps_used: f64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PiecewiseLinearModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<SdModelRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditRecord>,
}

/// Compromise summary and the statistics derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub rho: f64,
    pub x_c: Vec<f64>,
    pub anchor: Vec<f64>,
    /// Compromise master value `θ_c`.
    pub value: f64,
    pub aggregate_value: f64,
    pub stopping_gap: f64,
    pub kkt_residual: f64,
    /// `Δ({x_c}, X*_ε)`.
    pub delta: f64,
    /// `|θ_c − θ*|`.
    pub cost_error: f64,
    /// `‖x_c − x*‖`.
    pub compromise_error: f64,
    /// `‖x_i − x*‖` per replication.
    pub replication_errors: Vec<f64>,
    /// `s²_n(x_c)` per replication.
    pub sample_variances: Vec<f64>,
    /// Margin of error at `x_c` (needs n ≥ 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub replication_seconds: f64,
    pub aggregation_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub config_hash: String,
    pub n: usize,
    pub m: usize,
    pub rep: usize,
    /// Master seed of the sample streams of this macro-replication.
    pub cell_seed: u64,
    pub replications: Vec<ReplicationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<CellOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timing: Timing,
}

pub fn cell_file(dir: &Path, n: usize, m: usize, rep: usize) -> PathBuf {
    dir.join("cells").join(format!("{n}_{m}_{rep}.json"))
}

/// Write through a temporary file and rename, so a cell file is either absent
/// or complete.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_cell(dir: &Path, cell: &CellRecord) -> Result<()> {
    let path = cell_file(dir, cell.n, cell.m, cell.rep);
    write_atomic(&path, serde_json::to_string(cell)?.as_bytes())
}

pub fn read_cell(path: &Path) -> Result<CellRecord> {
    let text = fs::read_to_string(path).with_context(|| format!("record incomplete: {} missing", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("record incomplete: {} unreadable", path.display()))
}

pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_atomic(&dir.join("config.json"), serde_json::to_string_pretty(cfg)?.as_bytes())
}

/// Loads the stored config and checks that it still hashes to the directory's
/// recorded hash.
pub fn read_config(dir: &Path) -> Result<ExperimentConfig> {
    let path = dir.join("config.json");
    let text = fs::read_to_string(&path).with_context(|| format!("record incomplete: {} missing", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)?;
    if let Some(name) = dir.file_name().and_then(|s| s.to_str()) {
        if name != cfg.hash() {
            bail!("config hash {} does not match record directory {name}", cfg.hash());
        }
    }
    Ok(cfg)
}
