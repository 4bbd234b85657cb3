use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use convoy_cli::plot::{parse_kinds, write_plots};
use convoy_cli::presets::{load_source, PRESETS};
use convoy_cli::execute;
use convoy_core::{validate_scenario, ConvoyError, ScenarioConfig};

const EXIT_ERROR: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_SIM_FAILED: u8 = 3;
const EXIT_OBJECTIVES_FAILED: u8 = 4;

/// Ordering-flexible multi-robot convoy simulator.
#[derive(Parser)]
#[command(name = "convoy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario against the standing assumptions.
    Validate {
        /// Scenario JSON file or built-in preset name.
        scenario: String,
    },
    /// Simulate a scenario and write logs, report and plots.
    Run {
        /// Scenario JSON file or built-in preset name.
        scenario: String,
        /// Output directory [default: runs/<scenario name>].
        #[arg(long, env = "CONVOY_OUT_DIR")]
        out_dir: Option<PathBuf>,
        /// Override the integration step.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the simulated duration.
        #[arg(long)]
        duration: Option<f64>,
        /// Feed robots the true target velocity instead of the estimate.
        #[arg(long)]
        oracle_velocity: bool,
    },
    /// Render SVG plots for an existing run directory.
    Plot {
        run_dir: PathBuf,
        /// trajectories, error, distances, ordering, inputs, obstacles or all.
        #[arg(long, default_value = "all")]
        kind: String,
    },
    /// List the built-in scenarios.
    Presets,
}

fn load(scenario: &str) -> Result<ScenarioConfig> {
    let src = load_source(scenario)?;
    ScenarioConfig::from_json(&src).with_context(|| format!("parsing {scenario}"))
}

fn validate(scenario: &str) -> Result<u8> {
    let cfg = load(scenario)?;
    let report = validate_scenario(&cfg);
    print!("{report}");
    Ok(if report.passed() { 0 } else { EXIT_INVALID })
}

fn run(
    scenario: &str,
    out_dir: Option<PathBuf>,
    dt: Option<f64>,
    duration: Option<f64>,
    oracle_velocity: bool,
) -> Result<u8> {
    let mut cfg = load(scenario)?;
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    if let Some(duration) = duration {
        cfg.duration = duration;
    }
    cfg.oracle_velocity |= oracle_velocity;
    let validation = validate_scenario(&cfg);
    if !validation.passed() {
        eprint!("{validation}");
        return Ok(EXIT_INVALID);
    }
    let out_dir = out_dir.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    let outcome = match execute(&cfg, &out_dir) {
        Ok(outcome) => outcome,
        Err(err) if err.downcast_ref::<ConvoyError>().is_some() => {
            eprintln!("simulation failed: {err:#}");
            return Ok(EXIT_SIM_FAILED);
        }
        Err(err) => return Err(err),
    };
    let r = &outcome.report;
    println!("scenario      {}", cfg.name);
    println!("output        {}", out_dir.display());
    println!("runtime       {:.3} s", outcome.manifest.runtime_seconds);
    println!(
        "objective 1   {}  mean |e| {:.4} (tol {})",
        verdict(r.objective1.passed),
        r.objective1.mean_error,
        r.objective1.tolerance
    );
    println!(
        "objective 2a  {}  max relative speed {:.4} (tol {:.4})",
        verdict(r.objective2a.passed),
        r.objective2a.max_relative_speed,
        r.objective2a.tolerance
    );
    println!(
        "objective 2b  {}  adjacent in [{:.4}, {:.4}], bounds [{}, {}], ordering constant {}",
        verdict(r.objective2b.passed),
        r.objective2b.min_adjacent,
        r.objective2b.max_adjacent,
        r.objective2b.lower,
        r.objective2b.upper,
        r.objective2b.ordering_constant
    );
    println!(
        "objective 3   {}  min pair {:.4}, min target {:.4}",
        verdict(r.objective3.passed),
        r.objective3.min_pairwise,
        r.objective3.min_target
    );
    if !r.final_ordering.is_empty() {
        println!("ordering      {:?} ({})", r.final_ordering, r.ordering_rule);
    }
    Ok(if r.all_passed() { 0 } else { EXIT_OBJECTIVES_FAILED })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn plot(run_dir: &Path, kind: &str) -> Result<u8> {
    let kinds = parse_kinds(kind)?;
    for path in write_plots(run_dir, &kinds)? {
        println!("{}", path.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    // clap's own usage-error code (2) is reserved for validation failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Validate { scenario } => validate(scenario),
        Command::Run {
            scenario,
            out_dir,
            dt,
            duration,
            oracle_velocity,
        } => run(scenario, out_dir.clone(), *dt, *duration, *oracle_velocity),
        Command::Plot { run_dir, kind } => plot(run_dir, kind),
        Command::Presets => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
