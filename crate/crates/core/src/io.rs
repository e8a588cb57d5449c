//! Run artifacts (trace CSV, solution and summary JSON) and sweep specs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::orchestrator::{RunReport, Scheme};
use crate::physics::FlightPlan;
use crate::scenario::ScenarioConfig;
use crate::subproblems::{AuditReport, ObjectiveMode};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid sweep spec: {0}")]
    Spec(String),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.display().to_string(), source }
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(file_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(file_err(dir))?;
    tmp.write_all(bytes).map_err(file_err(path))?;
    tmp.persist(path).map_err(|e| IoError::File { path: path.display().to_string(), source: e.error })?;
    Ok(())
}

/// Everything needed to reproduce and audit a solution; no timing fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub scheme: Scheme,
    pub mode: ObjectiveMode,
    pub plan: FlightPlan,
    pub p_k: Vec<Vec<f64>>,
    pub p_u: Vec<f64>,
    pub p_b: Vec<f64>,
    pub zeta: Vec<Vec<f64>>,
    pub objective: f64,
    pub audit: AuditReport,
}

impl SolutionFile {
    pub fn from_report(r: &RunReport) -> Self {
        let a = &r.solution.alloc;
        Self {
            scheme: r.scheme,
            mode: r.mode,
            plan: r.solution.plan.clone(),
            p_k: a.p_k.clone(),
            p_u: a.p_u.clone(),
            p_b: a.p_b.clone(),
            zeta: a.zeta.clone(),
            objective: r.objective,
            audit: r.audit.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scheme: Scheme,
    /// bits/Joule
    pub msee: f64,
    /// bps
    pub masr: f64,
    pub afpc_w: f64,
    pub afpcr: f64,
    pub iters: usize,
    pub runtime_s: f64,
    pub converged: bool,
    pub audit_pass: bool,
    pub flags: Vec<String>,
}

impl Summary {
    pub fn from_report(r: &RunReport) -> Self {
        Self {
            scheme: r.scheme,
            msee: r.metrics.msee,
            masr: r.metrics.masr,
            afpc_w: r.metrics.afpc,
            afpcr: r.metrics.afpcr,
            iters: r.outer_iterations,
            runtime_s: r.runtime_s,
            converged: r.converged,
            audit_pass: r.audit.pass,
            flags: r.flags(),
        }
    }
}

pub fn trace_csv(r: &RunReport) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "block_committed", "msee", "masr", "afpc", "afpcr", "wall_ms", "objective"])?;
    for row in &r.trace {
        w.write_record([
            row.iter.to_string(),
            row.block_committed.clone(),
            row.msee.to_string(),
            row.masr.to_string(),
            row.afpc.to_string(),
            row.afpcr.to_string(),
            format!("{:.3}", row.wall_ms),
            row.objective.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Writes `trace.csv`, `solution.json` and `summary.json` into `dir`.
pub fn write_run_artifacts(dir: &Path, r: &RunReport) -> Result<(), IoError> {
    write_atomic(&dir.join("trace.csv"), trace_csv(r)?.as_bytes())?;
    write_atomic(&dir.join("solution.json"), SolutionFile::from_report(r).to_json().as_bytes())?;
    let summary = serde_json::to_string_pretty(&Summary::from_report(r))?;
    write_atomic(&dir.join("summary.json"), summary.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    AbsorptionAf,
    MissionTime,
    /// Total average transmit power, split 0.1 / 0.4 / 0.5 between user,
    /// relay and jammer.
    AvgPowerScale,
    FlightPowerLimit,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::AbsorptionAf => "absorption_af",
            SweepAxis::MissionTime => "mission_time",
            SweepAxis::AvgPowerScale => "avg_power_scale",
            SweepAxis::FlightPowerLimit => "flight_power_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
}

/// Peak powers scale with the averages at the 4:1 ratio of the defaults.
const PEAK_TO_AVG: f64 = 4.0;

impl SweepSpec {
    pub fn from_json_str(text: &str) -> Result<Self, IoError> {
        let spec: SweepSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.values.is_empty() {
            return Err(IoError::Spec("values must not be empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(IoError::Spec("schemes must not be empty".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite() || (**v < 0.0)) {
            return Err(IoError::Spec(format!("value {v} is not a finite non-negative number")));
        }
        Ok(())
    }

    /// Layout seed shared by every cell of the sweep, so that schemes and
    /// axis values are compared on the same user positions.
    pub fn cell_seed(&self, base: u64) -> u64 {
        let digest = Sha256::digest(self.axis.name().as_bytes());
        base ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    /// The scenario of one cell.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut c = base.clone();
        c.rng_seed = self.cell_seed(base.rng_seed);
        match self.axis {
            SweepAxis::AbsorptionAf => c.absorption = value,
            SweepAxis::MissionTime => c.mission_time = value,
            SweepAxis::FlightPowerLimit => c.flight_power_limit = value,
            SweepAxis::AvgPowerScale => {
                c.ue_avg_power = 0.1 * value;
                c.relay_avg_power = 0.4 * value;
                c.jam_avg_power = 0.5 * value;
                c.ue_peak_power = PEAK_TO_AVG * c.ue_avg_power;
                c.relay_peak_power = PEAK_TO_AVG * c.relay_avg_power;
                c.jam_peak_power = PEAK_TO_AVG * c.jam_avg_power;
            }
        }
        c
    }
}

/// One row of the combined sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub scheme: String,
    pub seed: u64,
    pub status: String,
    pub msee: Option<f64>,
    pub masr: Option<f64>,
    pub afpc_w: Option<f64>,
    pub afpcr: Option<f64>,
    pub iters: Option<usize>,
    pub runtime_s: Option<f64>,
    pub error: Option<String>,
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
