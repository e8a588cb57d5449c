//! A small conic-program builder (linear, second-order and exponential
//! cones) with an interior-point backend.

mod atoms;
mod cbf;
mod solve;

use std::collections::HashMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

pub use atoms::{PathAtom, PathDirection, Pow32Atom};
pub use solve::{solve, solve_with, SolveReport, SolveStatus, SolverOptions};

#[derive(Debug, Error, PartialEq)]
pub enum ConicError {
    #[error("variable index {0} is not registered in this program")]
    UnknownVariable(usize),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("log-sum-exp needs at least one term")]
    EmptyTerms,
    #[error("the path-loss atom only encodes the convex upper side")]
    UnsupportedDirection,
    #[error("invalid parameter `{name}`: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("backend rejected the program: {0}")]
    Backend(String),
}

/// Handle to a registered decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Affine expression `Σ cᵢ xᵢ + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(v: Var, c: f64) -> Self {
        Self { terms: vec![(v, c)], constant: 0.0 }
    }

    pub fn push(&mut self, v: Var, c: f64) -> &mut Self {
        self.terms.push((v, c));
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// Σ |cᵢ xᵢ| + |constant|, the scale against which `eval` is compared.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        self.constant.abs() + self.terms.iter().map(|&(v, c)| (c * x[v.0]).abs()).sum::<f64>()
    }

    /// Merges repeated variables and drops exact zeros.
    pub fn compact(&self) -> Self {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|t| t.0);
        let mut out: Vec<(Var, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        Self { terms: out, constant: self.constant }
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl<T: Into<LinExpr>> AddAssign<T> for LinExpr {
    fn add_assign(&mut self, rhs: T) {
        let rhs = rhs.into();
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl<T: Into<LinExpr>> SubAssign<T> for LinExpr {
    fn sub_assign(&mut self, rhs: T) {
        *self += -rhs.into();
    }
}

impl<T: Into<LinExpr>> Add<T> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: T) -> LinExpr {
        self += rhs;
        self
    }
}

impl<T: Into<LinExpr>> Sub<T> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: T) -> LinExpr {
        self -= rhs;
        self
    }
}

impl<T: Into<LinExpr>> Add<T> for Var {
    type Output = LinExpr;
    fn add(self, rhs: T) -> LinExpr {
        LinExpr::from(self) + rhs
    }
}

impl<T: Into<LinExpr>> Sub<T> for Var {
    type Output = LinExpr;
    fn sub(self, rhs: T) -> LinExpr {
        LinExpr::from(self) - rhs
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl Neg for Var {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        LinExpr::term(self, -1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, k: f64) -> LinExpr {
        self.terms.iter_mut().for_each(|t| t.1 *= k);
        self.constant *= k;
        self
    }
}

impl Mul<f64> for Var {
    type Output = LinExpr;
    fn mul(self, k: f64) -> LinExpr {
        LinExpr::term(self, k)
    }
}

impl Mul<Var> for f64 {
    type Output = LinExpr;
    fn mul(self, v: Var) -> LinExpr {
        LinExpr::term(v, self)
    }
}

impl Mul<LinExpr> for f64 {
    type Output = LinExpr;
    fn mul(self, e: LinExpr) -> LinExpr {
        e * self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarInfo {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConeKind {
    /// expr = 0
    Zero,
    /// expr ≥ 0
    Nonneg,
    /// e₀ ≥ ‖(e₁, …)‖
    Soc,
    /// (x, y, z) with y·exp(x/y) ≤ z, y > 0
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub kind: ConeKind,
    pub exprs: Vec<LinExpr>,
    pub tag: String,
}

impl Constraint {
    /// Violation of the cone membership at `x`, divided by one plus the
    /// largest term magnitude `Σ |cᵢ xᵢ| + |constant|` over the components.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let vals: Vec<f64> = self.exprs.iter().map(|e| e.eval(x)).collect();
        let scale = 1.0 + self.exprs.iter().map(|e| e.magnitude(x)).fold(0.0, f64::max);
        let raw = match self.kind {
            ConeKind::Zero => vals[0].abs(),
            ConeKind::Nonneg => (-vals[0]).max(0.0),
            ConeKind::Soc => {
                let tail = vals[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (tail - vals[0]).max(0.0)
            }
            ConeKind::Exp => exp_cone_violation(vals[0], vals[1], vals[2]),
        };
        raw / scale
    }
}

fn exp_cone_violation(x: f64, y: f64, z: f64) -> f64 {
    if y > 0.0 {
        // log domain avoids overflow of exp(x/y)
        if z > 0.0 {
            (x - y * (z / y).ln()).max(0.0)
        } else {
            y * (x / y).min(700.0).exp() - z
        }
    } else {
        // closure of the cone: y = 0, x ≤ 0, z ≥ 0
        (-y).max(0.0) + x.max(0.0) + (-z).max(0.0)
    }
}

/// A maximization problem with affine objective over products of cones.
#[derive(Debug, Clone, Default)]
pub struct ConeProgram {
    vars: Vec<VarInfo>,
    names: HashMap<String, Var>,
    objective: LinExpr,
    constraints: Vec<Constraint>,
}

/// Index of a constraint inside its program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintHandle(pub usize);

impl ConeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a variable. Names must be unique within the program.
    pub fn add_var_bounded(
        &mut self,
        name: impl Into<String>,
        lower: Option<f64>,
        upper: Option<f64>,
    ) -> Result<Var, ConicError> {
        let name = name.into();
        if self.names.contains_key(&name) {
            return Err(ConicError::DuplicateName(name));
        }
        let v = Var(self.vars.len());
        self.names.insert(name.clone(), v);
        self.vars.push(VarInfo { name, lower, upper });
        Ok(v)
    }

    /// Free variable; panics on duplicate names, which are builder bugs.
    pub fn var(&mut self, name: impl Into<String>) -> Var {
        self.add_var_bounded(name, None, None).expect("unique variable name")
    }

    pub fn var_bounded(&mut self, name: impl Into<String>, lower: Option<f64>, upper: Option<f64>) -> Var {
        self.add_var_bounded(name, lower, upper).expect("unique variable name")
    }

    pub fn nonneg_var(&mut self, name: impl Into<String>) -> Var {
        self.var_bounded(name, Some(0.0), None)
    }

    pub fn var_by_name(&self, name: &str) -> Option<Var> {
        self.names.get(name).copied()
    }

    pub fn vars(&self) -> &[VarInfo] {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    /// Sets the affine objective to maximize.
    pub fn maximize(&mut self, objective: impl Into<LinExpr>) {
        self.objective = objective.into();
    }

    fn push(&mut self, kind: ConeKind, exprs: Vec<LinExpr>, tag: impl Into<String>) -> Result<ConstraintHandle, ConicError> {
        for e in &exprs {
            if let Some(&(v, _)) = e.terms.iter().find(|t| t.0 .0 >= self.vars.len()) {
                return Err(ConicError::UnknownVariable(v.0));
            }
        }
        self.constraints.push(Constraint { kind, exprs, tag: tag.into() });
        Ok(ConstraintHandle(self.constraints.len() - 1))
    }

    pub fn add_eq(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>, tag: impl Into<String>) -> Result<ConstraintHandle, ConicError> {
        self.push(ConeKind::Zero, vec![lhs.into() - rhs.into()], tag)
    }

    /// lhs ≤ rhs
    pub fn add_le(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>, tag: impl Into<String>) -> Result<ConstraintHandle, ConicError> {
        self.push(ConeKind::Nonneg, vec![rhs.into() - lhs.into()], tag)
    }

    /// lhs ≥ rhs
    pub fn add_ge(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>, tag: impl Into<String>) -> Result<ConstraintHandle, ConicError> {
        self.push(ConeKind::Nonneg, vec![lhs.into() - rhs.into()], tag)
    }

    /// head ≥ ‖tail‖₂
    pub fn add_soc(&mut self, head: impl Into<LinExpr>, tail: Vec<LinExpr>, tag: impl Into<String>) -> Result<ConstraintHandle, ConicError> {
        let mut exprs = vec![head.into()];
        exprs.extend(tail);
        self.push(ConeKind::Soc, exprs, tag)
    }

    /// y·exp(x/y) ≤ z with y > 0.
    pub fn add_exp(
        &mut self,
        x: impl Into<LinExpr>,
        y: impl Into<LinExpr>,
        z: impl Into<LinExpr>,
        tag: impl Into<String>,
    ) -> Result<ConstraintHandle, ConicError> {
        self.push(ConeKind::Exp, vec![x.into(), y.into(), z.into()], tag)
    }

    /// Variable bounds as explicit constraints, tagged `bound:<name>`.
    pub(crate) fn bound_constraints(&self) -> Vec<Constraint> {
        let mut out = Vec::new();
        for (i, info) in self.vars.iter().enumerate() {
            if let Some(lo) = info.lower {
                out.push(Constraint {
                    kind: ConeKind::Nonneg,
                    exprs: vec![Var(i) - lo],
                    tag: format!("bound:{}", info.name),
                });
            }
            if let Some(hi) = info.upper {
                out.push(Constraint {
                    kind: ConeKind::Nonneg,
                    exprs: vec![LinExpr::constant(hi) - Var(i)],
                    tag: format!("bound:{}", info.name),
                });
            }
        }
        out
    }

    /// All constraints including bounds, sorted zero → nonneg → SOC → exp.
    pub(crate) fn lowered(&self) -> Vec<Constraint> {
        let mut all: Vec<Constraint> = self.constraints.iter().cloned().chain(self.bound_constraints()).collect();
        all.sort_by_key(|c| c.kind);
        all
    }

    /// Largest scaled violation over every constraint and bound at `x`.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .chain(self.bound_constraints().iter())
            .map(|c| c.residual(x))
            .fold(0.0, f64::max)
    }

    /// (tag, scaled violation) for every constraint violated by more than `tol`.
    pub fn violations(&self, x: &[f64], tol: f64) -> Vec<(String, f64)> {
        self.constraints
            .iter()
            .chain(self.bound_constraints().iter())
            .map(|c| (c.tag.clone(), c.residual(x)))
            .filter(|(_, r)| *r > tol)
            .collect()
    }

    /// Serializes the program in the Conic Benchmark Format.
    pub fn to_cbf(&self) -> String {
        cbf::write(self)
    }
}
