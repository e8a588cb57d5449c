//! Exact bound functions and the first-order surrogates used by each SCA step.
//!
//! Every surrogate is returned both as a value and as an affine model
//! ([`Line`], [`Plane`]) so the subproblem builders can put its coefficients
//! directly into conic rows.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("`{arg}` must be {requirement}, got {value}")]
    Domain {
        arg: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("f2 is not concave: a*d = {ad} < b*c = {bc}")]
    NotConcave { ad: f64, bc: f64 },
}

type Result<T> = std::result::Result<T, BoundsError>;

fn positive(arg: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(BoundsError::Domain { arg, requirement: "positive and finite", value })
    }
}

fn nonneg(arg: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(BoundsError::Domain { arg, requirement: "nonnegative and finite", value })
    }
}

/// Affine model `value + slope (x − x0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub x0: f64,
    pub value: f64,
    pub slope: f64,
}

impl Line {
    pub fn eval(&self, x: f64) -> f64 {
        self.value + self.slope * (x - self.x0)
    }

    /// Constant term when written as `intercept + slope x`.
    pub fn intercept(&self) -> f64 {
        self.value - self.slope * self.x0
    }
}

/// Affine model `value + dx (x − x0) + dy (y − y0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub x0: f64,
    pub y0: f64,
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Plane {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.value + self.dx * (x - self.x0) + self.dy * (y - self.y0)
    }

    pub fn intercept(&self) -> f64 {
        self.value - self.dx * self.x0 - self.dy * self.y0
    }
}

/// x ln(1 + a y / (y + b x)); jointly concave for x, y > 0.
pub fn z1(x: f64, y: f64, a: f64, b: f64) -> Result<f64> {
    let (x, y) = (positive("x", x)?, positive("y", y)?);
    let (a, b) = (positive("a", a)?, positive("b", b)?);
    Ok(x * (a * y / (y + b * x)).ln_1p())
}

/// x ln(1 + c y / x); jointly concave for x, y > 0.
pub fn z2(x: f64, y: f64, c: f64) -> Result<f64> {
    let (x, y, c) = (positive("x", x)?, positive("y", y)?, positive("c", c)?);
    Ok(x * (c * y / x).ln_1p())
}

/// Tangent plane of `z2` at (x0, y0), a global over-estimator.
pub fn f1_ub_plane(x0: f64, y0: f64, c: f64) -> Result<Plane> {
    let ratio = c * positive("y0", y0)? / positive("x0", x0)?;
    positive("c", c)?;
    Ok(Plane {
        x0,
        y0,
        value: x0 * ratio.ln_1p(),
        dx: ratio.ln_1p() - ratio / (1.0 + ratio),
        dy: c / (1.0 + ratio),
    })
}

pub fn f1_ub(x: f64, y: f64, x0: f64, y0: f64, c: f64) -> Result<f64> {
    Ok(f1_ub_plane(x0, y0, c)?.eval(positive("x", x)?, positive("y", y)?))
}

/// ln(1 + (a x + b) / (c x + d)).
pub fn f2(x: f64, a: f64, b: f64, c: f64, d: f64) -> Result<f64> {
    let x = nonneg("x", x)?;
    let (a, b, c, d) = (positive("a", a)?, positive("b", b)?, positive("c", c)?, positive("d", d)?);
    Ok(((a * x + b) / (c * x + d)).ln_1p())
}

/// Errors unless `f2` is concave, i.e. a d ≥ b c.
pub fn check_f2_concave(a: f64, b: f64, c: f64, d: f64) -> Result<()> {
    let (ad, bc) = (a * d, b * c);
    if ad >= bc {
        Ok(())
    } else {
        Err(BoundsError::NotConcave { ad, bc })
    }
}

/// Tangent line of `f2` at x0. Since `f2` is concave when a d ≥ b c, this
/// line over-estimates it in that regime and under-estimates it otherwise.
pub fn f2_line(x0: f64, a: f64, b: f64, c: f64, d: f64) -> Result<Line> {
    let value = f2(x0, a, b, c, d)?;
    let slope = (a * d - b * c) / ((c * x0 + d) * (b + d + (a + c) * x0));
    Ok(Line { x0, value, slope })
}

pub fn f2_lb(x: f64, x0: f64, a: f64, b: f64, c: f64, d: f64) -> Result<f64> {
    Ok(f2_line(x0, a, b, c, d)?.eval(nonneg("x", x)?))
}

/// Tangent line of the convex term ln(1 + h / (p_b + i)) at pb0.
pub fn f3_line(pb0: f64, h: f64, i: f64) -> Result<Line> {
    let pb0 = nonneg("pb0", pb0)?;
    let (h, i) = (positive("H", h)?, positive("I", i)?);
    Ok(Line {
        x0: pb0,
        value: (h / (pb0 + i)).ln_1p(),
        slope: -h / ((pb0 + i) * (pb0 + h + i)),
    })
}

pub fn f3(pb: f64, pb0: f64, h: f64, i: f64) -> Result<f64> {
    Ok(f3_line(pb0, h, i)?.eval(nonneg("pb", pb)?))
}

/// ln(1 + 1 / (a x + b y)).
pub fn f41(x: f64, y: f64, a: f64, b: f64) -> Result<f64> {
    let s = positive("a", a)? * positive("x", x)? + positive("b", b)? * positive("y", y)?;
    Ok(s.recip().ln_1p())
}

pub fn f41_plane(x0: f64, y0: f64, a: f64, b: f64) -> Result<Plane> {
    let value = f41(x0, y0, a, b)?;
    let s = a * x0 + b * y0;
    let k = -1.0 / (s * (s + 1.0));
    Ok(Plane { x0, y0, value, dx: a * k, dy: b * k })
}

pub fn f41_lb(x: f64, y: f64, x0: f64, y0: f64, a: f64, b: f64) -> Result<f64> {
    Ok(f41_plane(x0, y0, a, b)?.eval(positive("x", x)?, positive("y", y)?))
}

/// ln(1 + c / x + d / y).
pub fn f42(x: f64, y: f64, c: f64, d: f64) -> Result<f64> {
    let (x, y) = (positive("x", x)?, positive("y", y)?);
    let (c, d) = (positive("c", c)?, positive("d", d)?);
    Ok((c / x + d / y).ln_1p())
}

pub fn f42_plane(x0: f64, y0: f64, c: f64, d: f64) -> Result<Plane> {
    let value = f42(x0, y0, c, d)?;
    let den = c * y0 + d * x0 + x0 * y0;
    Ok(Plane {
        x0,
        y0,
        value,
        dx: -c * y0 / (x0 * den),
        dy: -d * x0 / (y0 * den),
    })
}

pub fn f42_lb(x: f64, y: f64, x0: f64, y0: f64, c: f64, d: f64) -> Result<f64> {
    Ok(f42_plane(x0, y0, c, d)?.eval(positive("x", x)?, positive("y", y)?))
}

/// x² exp(p x); `p = 0` is allowed and reduces to x².
pub fn f43(x: f64, p: f64) -> Result<f64> {
    let (x, p) = (positive("x", x)?, nonneg("p", p)?);
    Ok(x * x * (p * x).exp())
}

pub fn f43_line(x0: f64, p: f64) -> Result<Line> {
    let value = f43(x0, p)?;
    Ok(Line { x0, value, slope: x0 * (p * x0).exp() * (p * x0 + 2.0) })
}

pub fn f43_lb(x: f64, x0: f64, p: f64) -> Result<f64> {
    Ok(f43_line(x0, p)?.eval(positive("x", x)?))
}

/// ln(1 + r / x).
pub fn f44(x: f64, r: f64) -> Result<f64> {
    Ok((positive("r", r)? / positive("x", x)?).ln_1p())
}

pub fn f44_line(x0: f64, r: f64) -> Result<Line> {
    let value = f44(x0, r)?;
    Ok(Line { x0, value, slope: -r / (x0 * (x0 + r)) })
}

pub fn f44_lb(x: f64, x0: f64, r: f64) -> Result<f64> {
    Ok(f44_line(x0, r)?.eval(positive("x", x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SAMPLES: usize = 10_000;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0xb0_0d5)
    }

    fn step(x: f64) -> f64 {
        1e-5 * x.abs().max(1.0)
    }

    fn fd_grad(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64) -> [f64; 2] {
        let (hx, hy) = (step(x), step(y));
        [
            (f(x + hx, y) - f(x - hx, y)) / (2.0 * hx),
            (f(x, y + hy) - f(x, y - hy)) / (2.0 * hy),
        ]
    }

    /// Eigenvalues of the central-difference Hessian, ascending.
    fn fd_hessian_eigs(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64) -> [f64; 2] {
        let (hx, hy) = (1e-4 * x.abs().max(1.0), 1e-4 * y.abs().max(1.0));
        let fxx = (f(x + hx, y) - 2.0 * f(x, y) + f(x - hx, y)) / (hx * hx);
        let fyy = (f(x, y + hy) - 2.0 * f(x, y) + f(x, y - hy)) / (hy * hy);
        let fxy = (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy) + f(x - hx, y - hy)) / (4.0 * hx * hy);
        let mean = 0.5 * (fxx + fyy);
        let rad = (0.25 * (fxx - fyy).powi(2) + fxy * fxy).sqrt();
        [mean - rad, mean + rad]
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn z2_direct_value() {
        assert!((z2(1.0, 1.0, 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn f1_ub_tight_and_dominating() {
        let mut r = rng();
        for _ in 0..SAMPLES {
            let c = r.gen_range(1e-3..10.0);
            let (x0, y0) = (r.gen_range(1e-3..10.0), r.gen_range(1e-3..10.0));
            let (x, y) = (r.gen_range(1e-3..10.0), r.gen_range(1e-3..10.0));
            let exact0 = z2(x0, y0, c).unwrap();
            assert!((f1_ub(x0, y0, x0, y0, c).unwrap() - exact0).abs() <= 1e-12 * exact0.abs().max(1.0));
            assert!(f1_ub(x, y, x0, y0, c).unwrap() >= z2(x, y, c).unwrap() - 1e-12);
        }
    }

    #[test]
    fn z_functions_concave() {
        let mut r = rng();
        for _ in 0..100 {
            let (x, y) = (r.gen_range(0.1..10.0), r.gen_range(0.1..10.0));
            let (a, b, c) = (r.gen_range(0.1..10.0), r.gen_range(0.1..10.0), r.gen_range(0.1..10.0));
            let e1 = fd_hessian_eigs(&|x, y| z1(x, y, a, b).unwrap(), x, y);
            let e2 = fd_hessian_eigs(&|x, y| z2(x, y, c).unwrap(), x, y);
            assert!(e1[1] <= 1e-6 && e2[1] <= 1e-6, "{e1:?} {e2:?}");
        }
    }

    #[test]
    fn z1_relative_entropy_identity() {
        // the conic lowering rewrites z1 with two relative entropies
        let erel = |x: f64, y: f64| x * (x / y).ln();
        let mut r = rng();
        for _ in 0..1000 {
            let (x, y) = (r.gen_range(0.01..10.0), r.gen_range(0.01..10.0));
            let (a, b) = (r.gen_range(0.01..10.0), r.gen_range(0.01..10.0));
            let u = y + b * x;
            let v = (a + 1.0) * y + b * x;
            let lowered = -(1.0 + a) / (a * b) * erel(u, v) - erel(v, u) / (a * b);
            let exact = z1(x, y, a, b).unwrap();
            assert!((lowered - exact).abs() <= 1e-9 * exact.abs().max(1.0), "{lowered} {exact}");
        }
    }

    #[test]
    fn f2_tight_at_expansion_and_zero() {
        let (a, b, c, d) = (3.0, 1.0, 2.0, 4.0);
        let x0 = 1.7;
        assert!((f2_lb(x0, x0, a, b, c, d).unwrap() - f2(x0, a, b, c, d).unwrap()).abs() < 1e-12);
        assert!((f2(0.0, a, b, c, d).unwrap() - (1.0f64 + b / d).ln()).abs() < 1e-15);
    }

    /// The tangent of a concave function lies above it, so with a d ≥ b c the
    /// affine model over-estimates `f2`; it under-estimates only when f2 is
    /// convex (a d ≤ b c).
    #[test]
    fn f2_tangent_direction_follows_curvature() {
        let mut r = rng();
        let (mut concave, mut convex) = (0, 0);
        while concave < SAMPLES || convex < SAMPLES {
            let (a, b, c, d) = (r.gen_range(0.01..10.0), r.gen_range(0.01..10.0), r.gen_range(0.01..10.0), r.gen_range(0.01..10.0));
            let (x, x0) = (r.gen_range(0.0..20.0), r.gen_range(0.0..20.0));
            let exact = f2(x, a, b, c, d).unwrap();
            let tangent = f2_lb(x, x0, a, b, c, d).unwrap();
            if check_f2_concave(a, b, c, d).is_ok() {
                assert!(tangent >= exact - 1e-12);
                concave += 1;
            } else {
                assert!(exact >= tangent - 1e-12);
                convex += 1;
            }
        }
        assert!(matches!(check_f2_concave(1.0, 2.0, 3.0, 1.0), Err(BoundsError::NotConcave { .. })));
    }

    #[test]
    fn f3_under_estimates_and_has_expected_slope() {
        let mut r = rng();
        for _ in 0..SAMPLES {
            let (h, i) = (r.gen_range(0.01..100.0), r.gen_range(0.01..100.0));
            let (pb, pb0) = (r.gen_range(0.0..10.0), r.gen_range(0.0..10.0));
            let exact = |p: f64| (1.0 + h / (p + i)).ln();
            assert!((f3(pb0, pb0, h, i).unwrap() - exact(pb0)).abs() < 1e-12);
            assert!(f3(pb, pb0, h, i).unwrap() <= exact(pb) + 1e-12);
        }
        for _ in 0..100 {
            let (h, i, pb0) = (r.gen_range(0.1..10.0), r.gen_range(0.1..10.0), r.gen_range(0.0..5.0));
            let exact = |p: f64| (1.0 + h / (p + i)).ln();
            let hs = step(pb0);
            let fd = (exact(pb0 + hs) - exact(pb0 - hs)) / (2.0 * hs);
            let slope = f3_line(pb0, h, i).unwrap().slope;
            assert!(rel_close(slope, fd, 1e-6), "{slope} vs {fd}");
            assert!(rel_close(slope, -h / ((pb0 + i) * (pb0 + h + i)), 1e-14));
        }
    }

    #[test]
    fn lemma3_family_tight_and_under_estimating() {
        let mut r = rng();
        for _ in 0..SAMPLES {
            let g = |r: &mut ChaCha8Rng| r.gen_range(0.01..10.0);
            let (x, y, x0, y0) = (g(&mut r), g(&mut r), g(&mut r), g(&mut r));
            let (a, b) = (g(&mut r), g(&mut r));
            let p = r.gen_range(0.0..1.0);

            let e = f41(x0, y0, a, b).unwrap();
            assert!((f41_lb(x0, y0, x0, y0, a, b).unwrap() - e).abs() < 1e-12);
            assert!(f41(x, y, a, b).unwrap() >= f41_lb(x, y, x0, y0, a, b).unwrap() - 1e-12);

            let e = f42(x0, y0, a, b).unwrap();
            assert!((f42_lb(x0, y0, x0, y0, a, b).unwrap() - e).abs() < 1e-12);
            assert!(f42(x, y, a, b).unwrap() >= f42_lb(x, y, x0, y0, a, b).unwrap() - 1e-12);

            let e = f43(x0, p).unwrap();
            assert!((f43_lb(x0, x0, p).unwrap() - e).abs() <= 1e-12 * e.max(1.0));
            assert!(f43(x, p).unwrap() >= f43_lb(x, x0, p).unwrap() - 1e-9);

            let e = f44(x0, a).unwrap();
            assert!((f44_lb(x0, x0, a).unwrap() - e).abs() < 1e-12);
            assert!(f44(x, a).unwrap() >= f44_lb(x, x0, a).unwrap() - 1e-12);
        }
    }

    #[test]
    fn f43_quadratic_limit() {
        assert_eq!(f43(1.0, 0.0).unwrap(), 1.0);
        for x in [0.5, 1.0, 2.0, 3.5] {
            assert!((f43_lb(x, 1.0, 0.0).unwrap() - (1.0 + 2.0 * (x - 1.0))).abs() < 1e-15);
        }
    }

    #[test]
    fn lemma3_family_convex() {
        let mut r = rng();
        for _ in 0..100 {
            let (x, y) = (r.gen_range(0.1..10.0), r.gen_range(0.1..10.0));
            let (a, b) = (r.gen_range(0.1..10.0), r.gen_range(0.1..10.0));
            let p = r.gen_range(0.0..1.0);
            let e41 = fd_hessian_eigs(&|x, y| f41(x, y, a, b).unwrap(), x, y);
            let e42 = fd_hessian_eigs(&|x, y| f42(x, y, a, b).unwrap(), x, y);
            assert!(e41[0] >= -1e-6 && e42[0] >= -1e-6, "{e41:?} {e42:?}");
            let h = 1e-4 * x.max(1.0);
            let d2 = |f: &dyn Fn(f64) -> f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            assert!(d2(&|x| f43(x, p).unwrap()) >= -1e-6 * f43(x, p).unwrap().max(1.0));
            assert!(d2(&|x| f44(x, a).unwrap()) >= -1e-6);
        }
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let mut r = rng();
        for _ in 0..100 {
            let (x, y) = (r.gen_range(0.1..10.0), r.gen_range(0.1..10.0));
            let (a, b) = (r.gen_range(0.1..10.0), r.gen_range(0.1..10.0));
            let p = r.gen_range(0.0..1.0);
            let check = |plane: Plane, fd: [f64; 2]| {
                assert!(rel_close(plane.dx, fd[0], 1e-6), "{} vs {}", plane.dx, fd[0]);
                assert!(rel_close(plane.dy, fd[1], 1e-6), "{} vs {}", plane.dy, fd[1]);
            };
            check(f41_plane(x, y, a, b).unwrap(), fd_grad(&|x, y| f41(x, y, a, b).unwrap(), x, y));
            check(f42_plane(x, y, a, b).unwrap(), fd_grad(&|x, y| f42(x, y, a, b).unwrap(), x, y));
            check(f1_ub_plane(x, y, a).unwrap(), fd_grad(&|x, y| z2(x, y, a).unwrap(), x, y));
            let fd1 = |f: &dyn Fn(f64) -> f64| (f(x + step(x)) - f(x - step(x))) / (2.0 * step(x));
            assert!(rel_close(f43_line(x, p).unwrap().slope, fd1(&|x| f43(x, p).unwrap()), 1e-6));
            assert!(rel_close(f44_line(x, a).unwrap().slope, fd1(&|x| f44(x, a).unwrap()), 1e-6));
            assert!(rel_close(f2_line(x, a, b, 1.0, 2.0).unwrap().slope, fd1(&|x| f2(x, a, b, 1.0, 2.0).unwrap()), 1e-6));
        }
    }

    #[test]
    fn surrogates_are_affine() {
        let plane = f42_plane(1.3, 0.7, 2.0, 5.0).unwrap();
        let line = f44_line(2.0, 3.0).unwrap();
        for (x, y) in [(0.5, 0.5), (2.0, 9.0), (7.0, 1.0)] {
            let h = 0.37;
            let d2x = plane.eval(x + h, y) - 2.0 * plane.eval(x, y) + plane.eval(x - h, y);
            let d2y = plane.eval(x, y + h) - 2.0 * plane.eval(x, y) + plane.eval(x, y - h);
            let d2 = line.eval(x + h) - 2.0 * line.eval(x) + line.eval(x - h);
            assert!(d2x.abs() < 1e-9 && d2y.abs() < 1e-9 && d2.abs() < 1e-9);
        }
        assert!((plane.intercept() + plane.dx * 2.0 + plane.dy * 3.0 - plane.eval(2.0, 3.0)).abs() < 1e-12);
    }

    #[test]
    fn domain_guards_reject_nonpositive_inputs() {
        assert!(matches!(z2(0.0, 1.0, 1.0), Err(BoundsError::Domain { arg: "x", .. })));
        assert!(matches!(f41(1.0, -1.0, 1.0, 1.0), Err(BoundsError::Domain { arg: "y", .. })));
        assert!(f2(-1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(f3(-0.1, 0.0, 1.0, 1.0).is_err());
        assert!(f44(f64::NAN, 1.0).is_err());
        assert!(f43(1.0, -0.5).is_err());
    }
}
