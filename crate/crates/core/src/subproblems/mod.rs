//! The four block solvers and the shared state they operate on.
//!
//! All optimizers work in normalized units: rates are divided by the
//! bandwidth (bits/s/Hz) and powers by the flight-power budget, so the MSEE
//! objective is `min_k (ASR_k / B) / (P̄_f / P̄_lim)`.

mod audit;
mod p1;
mod p2;
mod p3;
mod p4;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::BoundsError;
use crate::conic::{ConeProgram, ConicError, SolveReport};
use crate::physics::{self, FlightPlan, LinkGains, ResourceAllocation};
use crate::scenario::{NodeLayout, ScenarioConfig};

pub use audit::{audit_constraints, AuditEntry, AuditReport};
pub use p1::{relaxed_objective, round_scheduling, solve_p1, solve_p1_with, P1Options, P1Relaxed};
pub use p2::solve_p2;
pub use p3::solve_p31;
pub use p4::{solve_p4, solve_p4_dinkelbach, P4Trace};

/// Residual accepted from the conic backend inside block solvers.
pub const SOLVE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SubproblemError {
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("{block}: solver returned {status} (residual {residual:.2e}); violated rows: {rows:?}")]
    SolveFailed {
        block: &'static str,
        status: String,
        residual: f64,
        rows: Vec<String>,
    },
    #[error("Dinkelbach ratio decreased from {from} to {to}")]
    LambdaDecrease { from: f64, to: f64 },
}

/// What the outer loop maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    /// Minimum secrecy energy efficiency.
    Msee,
    /// Minimum average secrecy rate. With `keep_power_limit` the flight
    /// power budget stays a feasibility constraint.
    Masr { keep_power_limit: bool },
}

/// Immutable problem data shared by all blocks.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub config: &'a ScenarioConfig,
    pub layout: &'a NodeLayout,
    pub mode: ObjectiveMode,
}

/// One complete candidate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub plan: FlightPlan,
    pub alloc: ResourceAllocation,
}

impl<'a> Problem<'a> {
    pub fn new(config: &'a ScenarioConfig, layout: &'a NodeLayout, mode: ObjectiveMode) -> Self {
        Self { config, layout, mode }
    }

    pub fn gains(&self, plan: &FlightPlan) -> LinkGains {
        LinkGains::compute(self.config, self.layout, plan)
    }

    /// P̄_f / P̄_lim, or 1 when power is not part of the objective.
    pub fn power_ratio(&self, plan: &FlightPlan) -> f64 {
        match self.mode {
            ObjectiveMode::Msee => plan.average_flight_power(&self.config.rotor) / self.config.flight_power_limit,
            ObjectiveMode::Masr { .. } => 1.0,
        }
    }

    /// Per-user ASR / B, optionally with the per-slot positive part.
    pub fn normalized_asr(&self, gains: &LinkGains, alloc: &ResourceAllocation, clip: bool) -> Vec<f64> {
        let b = self.config.bandwidth;
        (0..alloc.num_users())
            .map(|k| {
                let r = if clip {
                    physics::average_secrecy_rate(gains, alloc, b, k)
                } else {
                    physics::average_secrecy_rate_unclipped(gains, alloc, b, k)
                };
                r / b
            })
            .collect()
    }

    /// The exact objective of the outer problem (clipped rates).
    pub fn objective(&self, it: &Iterate) -> f64 {
        self.objective_with(it, true)
    }

    pub fn objective_with(&self, it: &Iterate, clip: bool) -> f64 {
        let gains = self.gains(&it.plan);
        let asr = self.normalized_asr(&gains, &it.alloc, clip);
        min(&asr) / self.power_ratio(&it.plan)
    }

    /// The scheduled user of slot `n`, if any.
    pub(crate) fn scheduled_user(alloc: &ResourceAllocation, n: usize) -> Option<usize> {
        (0..alloc.num_users()).find(|&k| alloc.zeta[k][n] > 0.5)
    }
}

pub(crate) fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Result of one block solve, before the caller decides whether to commit.
#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub iterate: Iterate,
    /// Exact objective at the incoming and returned iterates.
    pub objective_before: f64,
    pub objective_after: f64,
    /// Inner iterations (SCA, PSCA or Dinkelbach).
    pub inner_iterations: usize,
    /// Set when the block stopped early and returned its best point.
    pub flag: Option<String>,
    /// Inner objective trace (surrogate values, or λ for Dinkelbach).
    pub trace: Vec<f64>,
    /// Σ ζ̃(1 − ζ̃) of the relaxed schedule before rounding (P1 only).
    pub binary_residual: Option<f64>,
}

impl BlockOutcome {
    /// Keeps the incoming iterate unless the candidate does not lower the
    /// exact objective and passes the audit.
    pub(crate) fn guarded(problem: &Problem, incoming: &Iterate, candidate: Iterate, inner_iterations: usize, flag: Option<String>, trace: Vec<f64>) -> Self {
        let before = problem.objective(incoming);
        let after = problem.objective(&candidate);
        let audit = audit_constraints(problem, &candidate);
        if after >= before && audit.pass {
            Self { iterate: candidate, objective_before: before, objective_after: after, inner_iterations, flag, trace, binary_residual: None }
        } else {
            let why = if audit.pass {
                format!("candidate lowered the objective ({after:.12e} < {before:.12e}); kept incoming")
            } else {
                format!("candidate failed audit ({}); kept incoming", audit.failures().join(", "))
            };
            log::debug!("{why}");
            Self {
                iterate: incoming.clone(),
                objective_before: before,
                objective_after: before,
                inner_iterations,
                flag: Some(flag.map_or(why.clone(), |f| format!("{f}; {why}"))),
                trace,
                binary_residual: None,
            }
        }
    }
}

pub(crate) fn check_solve(block: &'static str, program: &ConeProgram, report: &SolveReport) -> Result<(), SubproblemError> {
    if report.usable(SOLVE_TOL) {
        return Ok(());
    }
    let rows = if report.x.iter().all(|v| v.is_finite()) {
        program.violations(&report.x, SOLVE_TOL).into_iter().map(|(t, r)| format!("{t} ({r:.1e})")).take(8).collect()
    } else {
        Vec::new()
    };
    Err(SubproblemError::SolveFailed {
        block,
        status: format!("{:?}/{}", report.status, report.backend_status),
        residual: report.max_residual,
        rows,
    })
}

/// Scales a power profile down so its mean meets `avg` and clips it to
/// `[0, peak]`; undoes the solver's last-digit slack.
pub(crate) fn enforce_power_budget(p: &mut [f64], avg: f64, peak: f64) {
    for x in p.iter_mut() {
        *x = x.clamp(0.0, peak);
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    if mean > avg {
        let s = avg / mean;
        p.iter_mut().for_each(|x| *x *= s);
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::orchestrator::initialize_feasible;

    pub fn desk() -> (ScenarioConfig, NodeLayout) {
        let config = ScenarioConfig::desk();
        let layout = crate::scenario::place_users(&config);
        (config, layout)
    }

    pub fn initial(config: &ScenarioConfig, layout: &NodeLayout) -> Iterate {
        initialize_feasible(config, layout).expect("feasible init")
    }
}
