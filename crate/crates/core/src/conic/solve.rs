//! Clarabel backend.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{ConeKind, ConeProgram, ConicError, Constraint, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Converged with every cone residual within the requested tolerance.
    Optimal,
    /// Converged, but residuals are above the requested tolerance.
    Inaccurate,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Residual threshold for reporting [`SolveStatus::Optimal`].
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Value of the maximized objective.
    pub objective: f64,
    pub max_residual: f64,
    pub iterations: u32,
    pub wall_time: f64,
    /// Backend status string, for diagnostics.
    pub backend_status: String,
}

impl SolveReport {
    pub fn value(&self, v: Var) -> f64 {
        self.x[v.0]
    }

    /// True for optimal solves and for inaccurate ones within `tol`.
    pub fn usable(&self, tol: f64) -> bool {
        match self.status {
            SolveStatus::Optimal => true,
            SolveStatus::Inaccurate => self.max_residual <= tol,
            _ => false,
        }
    }
}

pub fn solve(program: &ConeProgram) -> Result<SolveReport, ConicError> {
    solve_with(program, &SolverOptions::default())
}

/// Clarabel's convention is `A x + s = b` with `s` in the cone product, so a
/// row `expr = aᵀx + c ∈ K` becomes `A = −a`, `b = c`.
fn assemble(n: usize, rows: &[Constraint]) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0;
    for c in rows {
        for e in &c.exprs {
            for &(v, coef) in &e.compact().terms {
                ii.push(row);
                jj.push(v.0);
                vv.push(-coef);
            }
            b.push(e.constant);
            row += 1;
        }
        let dim = c.exprs.len();
        match (c.kind, cones.last_mut()) {
            (ConeKind::Zero, Some(SupportedConeT::ZeroConeT(k))) => *k += dim,
            (ConeKind::Nonneg, Some(SupportedConeT::NonnegativeConeT(k))) => *k += dim,
            (ConeKind::Zero, _) => cones.push(SupportedConeT::ZeroConeT(dim)),
            (ConeKind::Nonneg, _) => cones.push(SupportedConeT::NonnegativeConeT(dim)),
            (ConeKind::Soc, _) => cones.push(SupportedConeT::SecondOrderConeT(dim)),
            (ConeKind::Exp, _) => cones.push(SupportedConeT::ExponentialConeT()),
        }
    }
    (CscMatrix::new_from_triplets(row, n, ii, jj, vv), b, cones)
}

pub fn solve_with(program: &ConeProgram, options: &SolverOptions) -> Result<SolveReport, ConicError> {
    let start = Instant::now();
    let n = program.num_vars();
    let rows = program.lowered();
    let (a, b, cones) = assemble(n, &rows);
    let p = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    for &(v, c) in &program.objective().compact().terms {
        q[v.0] = -c;
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(options.max_iter)
        // tighter than the reporting tolerance, since the backend scales
        // residuals differently from `Constraint::residual`
        .tol_feas(options.tolerance * 0.01)
        .tol_gap_abs(options.tolerance * 0.1)
        .tol_gap_rel(options.tolerance * 0.1)
        .build()
        .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| ConicError::Backend(e.to_string()))?;
    solver.solve();
    let sol = &solver.solution;
    let x = sol.x.clone();
    let max_residual = if x.iter().all(|v| v.is_finite()) {
        program.max_residual(&x)
    } else {
        f64::INFINITY
    };
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if max_residual <= options.tolerance {
                SolveStatus::Optimal
            } else {
                SolveStatus::Inaccurate
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        // stalled runs often stop at a perfectly good point
        SolverStatus::MaxIterations | SolverStatus::InsufficientProgress | SolverStatus::NumericalError
            if max_residual.is_finite() =>
        {
            SolveStatus::Inaccurate
        }
        _ => SolveStatus::NumericalFailure,
    };
    let objective = program.objective().eval(&x);
    log::trace!(
        "conic solve: {} vars, {} rows, status {:?} ({:?}), residual {:.2e}, {} iters",
        n,
        b.len(),
        status,
        sol.status,
        max_residual,
        sol.iterations
    );
    Ok(SolveReport {
        status,
        objective,
        max_residual,
        iterations: sol.iterations,
        wall_time: start.elapsed().as_secs_f64(),
        backend_status: format!("{:?}", sol.status),
        x,
    })
}
