//! `see-opt` command implementations.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use see_opt_core::io::{sweep_csv, write_atomic, write_run_artifacts, IoError, Summary, SweepAxis, SweepRow, SweepSpec};
use see_opt_core::orchestrator::{initialize_feasible, OrchestratorError};
use see_opt_core::{
    audit_constraints, load_scenario, place_users, run_scheme, ObjectiveMode, Problem, RunOptions, ScenarioConfig,
    ScenarioError, Scheme,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FLAGGED: i32 = 2;
pub const EXIT_TREND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "see-opt", version, about = "Secrecy energy efficiency optimizer for an untrusted UAV relay")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one scenario with one scheme.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Let masr_seq ignore the flight power budget entirely.
        #[arg(long)]
        drop_power_limit: bool,
    },
    /// Run every (value, scheme) cell of a parameter sweep.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Exit with code 3 when an expected trend is violated.
        #[arg(long)]
        strict: bool,
    },
    /// Validate a scenario and audit its initial feasible point.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).ok_or_else(|| {
        let names: Vec<_> = Scheme::ALL.iter().map(|s| s.name()).collect();
        format!("unknown scheme {s:?}; expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Run(#[from] OrchestratorError),
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Machine-readable error report, written as `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl CliError {
    pub fn report(&self) -> ErrorReport {
        let (error, field) = match self {
            CliError::Scenario(e) => ("invalid_scenario", e.field()),
            CliError::Io(IoError::Spec(_)) | CliError::Io(IoError::Json(_)) => ("invalid_spec", None),
            CliError::Io(_) | CliError::Read { .. } => ("io", None),
            CliError::Run(OrchestratorError::MissionTooShort { .. }) => ("infeasible_mission", None),
            CliError::Run(OrchestratorError::Block { .. }) => ("solver", None),
        };
        ErrorReport { error, message: self.to_string(), field }
    }
}

fn emit_error(err: &CliError, out: Option<&Path>) -> i32 {
    let json = serde_json::to_string_pretty(&err.report()).expect("error report serializes");
    eprintln!("{json}");
    if let Some(dir) = out {
        if let Err(e) = write_atomic(&dir.join("error.json"), json.as_bytes()) {
            log::error!("could not write error.json: {e}");
        }
    }
    EXIT_ERROR
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let mut config = load_scenario(path)?;
    if let Some(seed) = seed {
        config.rng_seed = seed;
    }
    Ok(config)
}

fn run_cmd(scenario: &Path, scheme: Scheme, out: &Path, seed: Option<u64>, drop_power_limit: bool) -> Result<i32, CliError> {
    let config = load(scenario, seed)?;
    let layout = place_users(&config);
    let opts = RunOptions { masr_keep_power_limit: !drop_power_limit, ..RunOptions::default() };
    let report = match run_scheme(&config, &layout, scheme, &opts) {
        Ok(r) => r,
        Err(OrchestratorError::Block { block, source, partial }) => {
            write_run_artifacts(out, &partial)?;
            return Err(OrchestratorError::Block { block, source, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_run_artifacts(out, &report)?;
    let initial = run_scheme(&config, &layout, Scheme::Initial, &opts)?;
    let initial_summary = serde_json::to_string_pretty(&Summary::from_report(&initial)).map_err(IoError::from)?;
    write_atomic(&out.join("summary_initial.json"), initial_summary.as_bytes())?;
    log::info!(
        "{}: MSEE {:.4} Mbits/J, MASR {:.4e} bps, AFPC {:.2} W after {} iterations",
        scheme.name(),
        report.metrics.msee / 1e6,
        report.metrics.masr,
        report.metrics.afpc,
        report.outer_iterations
    );
    if !report.audit.pass {
        log::warn!("solution fails the audit: {}", report.audit.failures().join("; "));
    }
    Ok(if report.converged && report.audit.pass { EXIT_OK } else { EXIT_FLAGGED })
}

fn run_cell(spec: &SweepSpec, base: &ScenarioConfig, value: f64, scheme: Scheme, out: &Path) -> SweepRow {
    let config = spec.apply(base, value);
    let mut row = SweepRow {
        axis: spec.axis.name().into(),
        value,
        scheme: scheme.name().into(),
        seed: config.rng_seed,
        status: "ok".into(),
        msee: None,
        masr: None,
        afpc_w: None,
        afpcr: None,
        iters: None,
        runtime_s: None,
        error: None,
    };
    if let Err(e) = config.validate() {
        row.status = "error".into();
        row.error = Some(e.to_string());
        return row;
    }
    let layout = place_users(&config);
    let dir = out.join("cells").join(format!("{}={}", spec.axis.name(), value)).join(scheme.name());
    match run_scheme(&config, &layout, scheme, &RunOptions::default()) {
        Ok(r) => {
            if let Err(e) = write_run_artifacts(&dir, &r) {
                row.status = "error".into();
                row.error = Some(e.to_string());
            } else if !r.converged || !r.audit.pass {
                row.status = "flagged".into();
            }
            row.msee = Some(r.metrics.msee);
            row.masr = Some(r.metrics.masr);
            row.afpc_w = Some(r.metrics.afpc);
            row.afpcr = Some(r.metrics.afpcr);
            row.iters = Some(r.outer_iterations);
            row.runtime_s = Some(r.runtime_s);
        }
        Err(e) => {
            row.status = "error".into();
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Trend checks on the finished sweep; returns human-readable violations.
pub fn trend_violations(spec: &SweepSpec, rows: &[SweepRow]) -> Vec<String> {
    let mut out = Vec::new();
    for scheme in &spec.schemes {
        if !matches!(scheme, Scheme::MseeSeq | Scheme::MseeMi | Scheme::Ftrj | Scheme::Fpow) {
            continue;
        }
        let mut series: Vec<(f64, &SweepRow)> =
            rows.iter().filter(|r| r.scheme == scheme.name() && r.status != "error").map(|r| (r.value, r)).collect();
        series.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (label, pick): (&str, fn(&SweepRow) -> Option<f64>) = match spec.axis {
            SweepAxis::AbsorptionAf => ("MSEE", |r| r.msee),
            SweepAxis::FlightPowerLimit => ("AFPCR", |r| r.afpcr),
            _ => continue,
        };
        for w in series.windows(2) {
            if let (Some(a), Some(b)) = (pick(w[0].1), pick(w[1].1)) {
                if b > a * (1.0 + 1e-6) {
                    out.push(format!(
                        "{}: {label} rises from {a:.6e} at {}={} to {b:.6e} at {}",
                        scheme.name(),
                        spec.axis.name(),
                        w[0].0,
                        w[1].0
                    ));
                }
            }
        }
    }
    out
}

fn sweep_cmd(scenario: &Path, spec_path: &Path, out: &Path, jobs: usize, strict: bool) -> Result<i32, CliError> {
    let base = load(scenario, None)?;
    let text = std::fs::read_to_string(spec_path)
        .map_err(|source| CliError::Read { path: spec_path.display().to_string(), source })?;
    let spec = SweepSpec::from_json_str(&text)?;
    let cells: Vec<(f64, Scheme)> = spec.values.iter().flat_map(|&v| spec.schemes.iter().map(move |&s| (v, s))).collect();

    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(value, scheme)) = cells.get(i) else { break };
                let row = run_cell(&spec, &base, value, scheme, out);
                log::info!("cell {}={} {}: {}", spec.axis.name(), value, scheme.name(), row.status);
                results.lock().expect("results lock")[i] = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = results.into_inner().expect("results lock").into_iter().map(|r| r.expect("every cell ran")).collect();
    write_atomic(&out.join("sweep.csv"), sweep_csv(&rows)?.as_bytes())?;

    let violations = trend_violations(&spec, &rows);
    for v in &violations {
        log::warn!("trend: {v}");
    }
    if rows.iter().any(|r| r.status == "error") {
        return Ok(EXIT_FLAGGED);
    }
    Ok(if strict && !violations.is_empty() { EXIT_TREND } else { EXIT_OK })
}

fn check_cmd(scenario: &Path) -> Result<i32, CliError> {
    let config = load(scenario, None)?;
    let layout = place_users(&config);
    let init = initialize_feasible(&config, &layout)?;
    let problem = Problem::new(&config, &layout, ObjectiveMode::Msee);
    let audit = audit_constraints(&problem, &init);
    println!("{}", serde_json::to_string_pretty(&audit).expect("audit serializes"));
    Ok(if audit.pass { EXIT_OK } else { EXIT_FLAGGED })
}

/// Runs a parsed command and maps the outcome to an exit code.
pub fn execute(cli: Cli) -> i32 {
    let (result, out) = match &cli.command {
        Command::Run { scenario, scheme, out, seed, drop_power_limit } => {
            (run_cmd(scenario, *scheme, out, *seed, *drop_power_limit), Some(out.as_path()))
        }
        Command::Sweep { scenario, spec, out, jobs, strict } => (sweep_cmd(scenario, spec, out, *jobs, *strict), Some(out.as_path())),
        Command::Check { scenario } => (check_cmd(scenario), None),
    };
    match result {
        Ok(code) => code,
        Err(e) => emit_error(&e, out),
    }
}
