//! Run artifacts: CSV logs, report, manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use convoy_core::metrics::ConvoyReport;
use convoy_core::sim::SimLog;

pub const TRAJECTORIES: &str = "trajectories.csv";
pub const METRICS: &str = "metrics.csv";
pub const REPORT: &str = "report.json";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const PLOT_DIR: &str = "plots";

/// Formats with 9 significant digits, shortest form.
pub fn fmt9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("valid float");
    if rounded == 0.0 {
        return "0".into();
    }
    rounded.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub robot_id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub ux: f64,
    pub uy: f64,
    pub uz: f64,
    pub delta: f64,
    pub n_active_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: f64,
    pub ex: f64,
    pub ey: f64,
    pub ez: f64,
    pub min_pair_dist: f64,
    pub min_target_dist: f64,
    pub lyapunov: f64,
    pub max_residual: f64,
    /// Dash-joined robot ids; empty when no ordering exists.
    pub ordering: String,
}

impl MetricsRow {
    pub fn ordering_ids(&self) -> Vec<u32> {
        self.ordering
            .split('-')
            .filter_map(|s| s.parse().ok())
            .collect()
    }
}

pub fn write_trajectories(log: &SimLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["t", "robot_id", "x", "y", "z", "ux", "uy", "uz", "delta", "n_active_rows"])?;
    for rec in &log.records {
        for b in &rec.robots {
            let p = b.position.xyz();
            let u = b.u.xyz();
            w.write_record([
                fmt9(rec.t),
                b.id.to_string(),
                fmt9(p[0]),
                fmt9(p[1]),
                fmt9(p[2]),
                fmt9(u[0]),
                fmt9(u[1]),
                fmt9(u[2]),
                fmt9(b.delta),
                b.n_active_rows.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics(log: &SimLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "t",
        "ex",
        "ey",
        "ez",
        "min_pair_dist",
        "min_target_dist",
        "lyapunov",
        "max_residual",
        "ordering",
    ])?;
    for rec in &log.records {
        let e = rec.convoy_error.xyz();
        let ordering = rec
            .ordering
            .as_ref()
            .map(|o| o.iter().map(u32::to_string).collect::<Vec<_>>().join("-"))
            .unwrap_or_default();
        w.write_record([
            fmt9(rec.t),
            fmt9(e[0]),
            fmt9(e[1]),
            fmt9(e[2]),
            fmt9(rec.min_pair_dist),
            fmt9(rec.min_target_dist),
            fmt9(rec.lyapunov),
            fmt9(rec.max_residual),
            ordering,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    /// SHA-256 of `config.json` as stored.
    pub config_sha256: String,
    pub artifacts: Vec<PathBuf>,
    pub runtime_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_report(report: &ConvoyReport, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}
