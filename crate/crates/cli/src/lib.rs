//! Library side of the `convoy` binary: presets, run artifacts and plots.

pub mod output;
pub mod plot;
pub mod presets;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use convoy_core::metrics::{check_objectives, ConvoyReport};
use convoy_core::ScenarioConfig;

use output::{RunManifest, CONFIG, MANIFEST, METRICS, REPORT, TRAJECTORIES};
use plot::PlotKind;

pub struct RunOutcome {
    pub report: ConvoyReport,
    pub manifest: RunManifest,
}

/// Simulates `cfg` and writes every artifact under `out_dir`.
///
/// Simulation failures come back as a [`convoy_core::ConvoyError`] inside the
/// `anyhow` chain so callers can tell them apart from I/O errors.
pub fn execute(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let config_json = cfg.to_json_pretty() + "\n";
    fs::write(out_dir.join(CONFIG), &config_json)?;

    let started = Instant::now();
    let log = convoy_core::sim::run(cfg)?;
    let runtime_seconds = started.elapsed().as_secs_f64();

    output::write_trajectories(&log, &out_dir.join(TRAJECTORIES))?;
    output::write_metrics(&log, &out_dir.join(METRICS))?;
    let report = check_objectives(&log, cfg);
    output::write_report(&report, &out_dir.join(REPORT))?;
    let plots = plot::write_plots(out_dir, &PlotKind::ALL)?;

    let mut artifacts: Vec<PathBuf> = [CONFIG, TRAJECTORIES, METRICS, REPORT]
        .iter()
        .map(PathBuf::from)
        .collect();
    artifacts.extend(
        plots
            .iter()
            .filter_map(|p| p.strip_prefix(out_dir).ok().map(Path::to_path_buf)),
    );
    let manifest = RunManifest {
        scenario: cfg.name.clone(),
        config_sha256: output::sha256_hex(config_json.as_bytes()),
        artifacts,
        runtime_seconds,
    };
    output::write_manifest(&manifest, &out_dir.join(MANIFEST))?;
    Ok(RunOutcome { report, manifest })
}
