//! Higher-level convex atoms lowered onto the basic cones.

use super::{ConeProgram, ConicError, ConstraintHandle, LinExpr, Var};
use crate::scenario::Vec2;

/// Which side of the path-loss inequality to encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathDirection {
    /// y ≥ K d² e^{a d}, which is convex in the UAV position.
    Upper,
    /// y ≤ K d² e^{a d}; not representable, linearize instead.
    Lower,
}

/// Auxiliary variables introduced by [`ConeProgram::add_pow32`].
#[derive(Debug, Clone, Copy)]
pub struct Pow32Atom {
    pub root: Var,
}

/// Auxiliary variables introduced by [`ConeProgram::add_exp_path_atom`].
/// Both are normalized by H² to keep the cone data well scaled.
#[derive(Debug, Clone, Copy)]
pub struct PathAtom {
    /// u ≥ (‖q − c‖² + H²) / H²
    pub dist_sq_ratio: Var,
    /// s ≥ a H u^{3/2}, which equals a d³ / H²
    pub absorption_exponent: Var,
}

impl ConeProgram {
    /// a·b ≥ Σ zᵢ² with a, b ≥ 0.
    pub fn add_rsoc(
        &mut self,
        a: impl Into<LinExpr>,
        b: impl Into<LinExpr>,
        z: Vec<LinExpr>,
        tag: impl Into<String>,
    ) -> Result<ConstraintHandle, ConicError> {
        let (a, b) = (a.into(), b.into());
        let mut tail = vec![a.clone() - b.clone()];
        tail.extend(z.into_iter().map(|e| e * 2.0));
        self.add_soc(a + b, tail, tag)
    }

    /// x ln(x / y) ≤ t.
    pub fn add_relative_entropy(
        &mut self,
        t: impl Into<LinExpr>,
        x: impl Into<LinExpr>,
        y: impl Into<LinExpr>,
        tag: impl Into<String>,
    ) -> Result<ConstraintHandle, ConicError> {
        self.add_exp(-t.into(), x, y, tag)
    }

    /// t ≥ ln Σ exp(termᵢ), via Σ zᵢ ≤ 1 and exp(termᵢ − t) ≤ zᵢ.
    pub fn add_lse(&mut self, t: impl Into<LinExpr>, terms: Vec<LinExpr>, tag: &str) -> Result<Vec<Var>, ConicError> {
        if terms.is_empty() {
            return Err(ConicError::EmptyTerms);
        }
        let t = t.into();
        let base = self.num_vars();
        let mut sum = LinExpr::default();
        let mut aux = Vec::with_capacity(terms.len());
        for (i, term) in terms.into_iter().enumerate() {
            let z = self.var(format!("{tag}#lse{base}.{i}"));
            self.add_exp(term - t.clone(), 1.0, z, tag)?;
            sum += z;
            aux.push(z);
        }
        self.add_le(sum, 1.0, tag)?;
        Ok(aux)
    }

    /// t ≥ scale · a^{3/2} with a ≥ 0, through two rotated cones:
    /// r² ≤ a and a² ≤ r · t / scale.
    pub fn add_pow32(&mut self, t: impl Into<LinExpr>, a: impl Into<LinExpr>, scale: f64, tag: &str) -> Result<Pow32Atom, ConicError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ConicError::InvalidParameter { name: "scale", value: scale });
        }
        let a = a.into();
        let root = self.var(format!("{tag}#root{}", self.num_vars()));
        self.add_rsoc(a.clone(), 1.0, vec![root.into()], tag)?;
        self.add_rsoc(root, t.into() * (1.0 / scale), vec![a], tag)?;
        Ok(Pow32Atom { root })
    }

    /// y_out ≥ K (‖q − c‖² + H²) exp(a_f √(‖q − c‖² + H²)).
    ///
    /// With u = d²/H² this is lowered as u − 1 ≥ ‖(q − c)/H‖²,
    /// s ≥ a_f H u^{3/2} and u exp(s / u) ≤ y_out / (K H²).
    #[allow(clippy::too_many_arguments)]
    pub fn add_exp_path_atom(
        &mut self,
        y_out: impl Into<LinExpr>,
        q: [LinExpr; 2],
        center: Vec2,
        altitude: f64,
        absorption: f64,
        scale: f64,
        direction: PathDirection,
        tag: &str,
    ) -> Result<PathAtom, ConicError> {
        if direction == PathDirection::Lower {
            return Err(ConicError::UnsupportedDirection);
        }
        for (name, value) in [("scale", scale), ("altitude", altitude)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConicError::InvalidParameter { name, value });
            }
        }
        if !(absorption >= 0.0 && absorption.is_finite()) {
            return Err(ConicError::InvalidParameter { name: "absorption", value: absorption });
        }
        let id = self.num_vars();
        let u = self.var_bounded(format!("{tag}#u.{id}"), Some(1.0), None);
        let s = self.nonneg_var(format!("{tag}#s.{id}"));
        let [qx, qy] = q;
        let inv_h = 1.0 / altitude;
        self.add_rsoc(
            u - 1.0,
            1.0,
            vec![(qx - center[0]) * inv_h, (qy - center[1]) * inv_h],
            tag,
        )?;
        let y_scaled = y_out.into() * (1.0 / (scale * altitude * altitude));
        if absorption == 0.0 {
            self.add_eq(s, 0.0, tag)?;
            self.add_ge(y_scaled, u, tag)?;
        } else {
            self.add_pow32(s, u, absorption * altitude, tag)?;
            self.add_exp(s, u, y_scaled, tag)?;
        }
        Ok(PathAtom { dist_sq_ratio: u, absorption_exponent: s })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::solve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn min_of(p: &mut ConeProgram, t: Var) -> f64 {
        p.maximize(-t);
        let r = solve(p).unwrap();
        assert!(r.usable(1e-6), "{r:?}");
        r.value(t)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn entropy_min(x: f64, y: f64) -> f64 {
        let mut p = ConeProgram::new();
        let t = p.var("t");
        let xv = p.var("x");
        let yv = p.var("y");
        p.add_eq(xv, x, "x").unwrap();
        p.add_eq(yv, y, "y").unwrap();
        p.add_relative_entropy(t, xv, yv, "erel").unwrap();
        min_of(&mut p, t)
    }

    #[test]
    fn relative_entropy_examples() {
        assert!((entropy_min(2.0, 1.0) - 2.0 * 2f64.ln()).abs() < 1e-6);
        assert!((entropy_min(1.0, 2.0) + 2f64.ln()).abs() < 1e-6);
        assert!(entropy_min(3.0, 3.0).abs() < 1e-6);

        // maximize t with x = y = 1 and the atom bounding −t gives t = 0
        let mut p = ConeProgram::new();
        let t = p.var("t");
        p.add_relative_entropy(-t, 1.0, 1.0, "erel").unwrap();
        p.maximize(t);
        let r = solve(&p).unwrap();
        assert!(r.value(t).abs() < 1e-6);
    }

    fn lse_min(terms: &[f64]) -> f64 {
        let mut p = ConeProgram::new();
        let t = p.var("t");
        p.add_lse(t, terms.iter().map(|&c| LinExpr::constant(c)).collect(), "lse").unwrap();
        min_of(&mut p, t)
    }

    #[test]
    fn lse_examples() {
        assert!((lse_min(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-6);
        assert!(lse_min(&[0.0]).abs() < 1e-6);
        assert!(lse_min(&[0.0, -50.0, -50.0]).abs() < 1e-10 + 1e-8);
        let mut p = ConeProgram::new();
        let t = p.var("t");
        assert_eq!(p.add_lse(t, vec![], "lse"), Err(ConicError::EmptyTerms));
    }

    fn path_min(offset: Vec2, h: f64, af: f64, scale: f64) -> f64 {
        let mut p = ConeProgram::new();
        let y = p.var("y");
        let qx = p.var("qx");
        let qy = p.var("qy");
        p.add_eq(qx, offset[0], "qx").unwrap();
        p.add_eq(qy, offset[1], "qy").unwrap();
        p.add_exp_path_atom(y, [qx.into(), qy.into()], [0.0, 0.0], h, af, scale, PathDirection::Upper, "path")
            .unwrap();
        min_of(&mut p, y)
    }

    #[test]
    fn path_atom_examples() {
        let y = path_min([0.0, 0.0], 10.0, 0.005, 1.0);
        assert!(rel_close(y, 100.0 * 0.05f64.exp(), 1e-6), "{y}");
        assert!((y - 105.127).abs() < 1e-3);
        let y = path_min([3.0, 4.0], 10.0, 0.0, 1.0);
        assert!(rel_close(y, 125.0, 1e-6), "{y}");
    }

    #[test]
    fn path_atom_monotone_along_ray() {
        let mut prev = 0.0;
        for i in 0..8 {
            let r = 15.0 * i as f64;
            let y = path_min([r * 0.6, r * 0.8], 10.0, 0.005, 1.0);
            assert!(y > prev);
            prev = y;
        }
    }

    #[test]
    fn path_atom_rejects_lower_side() {
        let mut p = ConeProgram::new();
        let y = p.var("y");
        let e = p.add_exp_path_atom(y, [0.0.into(), 0.0.into()], [0.0, 0.0], 10.0, 0.005, 1.0, PathDirection::Lower, "x");
        assert!(matches!(e, Err(ConicError::UnsupportedDirection)));
    }

    #[test]
    fn rsoc_and_pow32_examples() {
        // minimize t ≥ 2 a^{3/2} at a = 4 gives 16
        let mut p = ConeProgram::new();
        let t = p.var("t");
        let a = p.var("a");
        p.add_eq(a, 4.0, "a").unwrap();
        p.add_pow32(t, a, 2.0, "pow").unwrap();
        assert!(rel_close(min_of(&mut p, t), 16.0, 1e-6));

        // maximize x + y inside the unit disc
        let mut p = ConeProgram::new();
        let x = p.var("x");
        let y = p.var("y");
        p.add_soc(1.0, vec![x.into(), y.into()], "disc").unwrap();
        p.maximize(x + y);
        let r = solve(&p).unwrap();
        let h = 0.5f64.sqrt();
        assert!((r.value(x) - h).abs() < 1e-6 && (r.value(y) - h).abs() < 1e-6);
        assert!((r.objective - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn atoms_match_scalar_evaluation_on_random_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x: f64 = rng.gen_range(0.05..20.0);
            let y = rng.gen_range(0.05..20.0);
            let exact = x * (x / y).ln();
            let got = entropy_min(x, y);
            assert!(rel_close(got, exact, 1e-6), "erel({x},{y}): {got} vs {exact}");

            let terms = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let exact = terms.iter().map(|t: &f64| t.exp()).sum::<f64>().ln();
            assert!(rel_close(lse_min(&terms), exact, 1e-6));

            let off: [f64; 2] = [rng.gen_range(-200.0..200.0), rng.gen_range(-200.0..200.0)];
            let h: f64 = rng.gen_range(5.0..50.0);
            let af: f64 = rng.gen_range(0.0..0.02);
            let d = (off[0] * off[0] + off[1] * off[1] + h * h).sqrt();
            let exact = d * d * (af * d).exp();
            let got = path_min(off, h, af, 1.0);
            assert!(rel_close(got, exact, 1e-6), "path({off:?},{h},{af}): {got} vs {exact}");
        }
    }
}
