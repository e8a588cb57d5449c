//! Scheduling and user power block, solved by penalty SCA on the relaxed
//! schedule ζ̃ ∈ [0, 1] with p̃ = ζ̃ p_k, followed by rounding.

use std::f64::consts::LN_2;

use super::{check_solve, min, BlockOutcome, Iterate, Problem, SubproblemError};
use crate::bounds::f1_ub_plane;
use crate::conic::{solve, ConeProgram, LinExpr, Var};
use crate::physics::{LinkGains, ResourceAllocation};

const INTERIOR: f64 = 1e-6;
const POWER_FLOOR: f64 = 1e-9;
/// Relay gains below this contribute less than ~1e-9 nats and are dropped,
/// which keeps the relative-entropy weights bounded.
const MIN_RELAY_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1Options {
    pub max_iters: usize,
    /// Required Σ ζ̃(1 − ζ̃) before rounding.
    pub binary_tol: f64,
    /// Below this share the recovered power is set to zero.
    pub zeta_floor: f64,
    /// Without the penalty the loop solves the plain relaxation.
    pub penalize: bool,
}

impl Default for P1Options {
    fn default() -> Self {
        Self { max_iters: 20, binary_tol: 1e-3, zeta_floor: 1e-4, penalize: true }
    }
}

/// The relaxed iterate reached by the SCA loop.
#[derive(Debug, Clone)]
pub struct P1Relaxed {
    pub zeta: Vec<Vec<f64>>,
    pub p_tilde: Vec<Vec<f64>>,
    /// Exact relaxed objective at (ζ̃, p̃).
    pub objective: f64,
    pub binary_residual: f64,
    /// (penalty weight, surrogate value ψ − μ η) per iteration.
    pub trace: Vec<(f64, f64)>,
}

/// Per-slot constants of the user-k rates in slot n: the wiretap SNR is
/// B p, and the relay SNR is C p / (p + D).
struct SlotConstants {
    b: f64,
    c: f64,
    d: f64,
}

fn slot_constants(gains: &LinkGains, alloc: &ResourceAllocation, k: usize, n: usize) -> SlotConstants {
    let (gk, gb) = (gains.g_ku[k][n], gains.g_bu[n]);
    SlotConstants {
        b: gk / (alloc.p_b[n] * gb + 1.0),
        c: gb * alloc.p_u[n],
        d: (gb * (alloc.p_u[n] + alloc.p_b[n]) + 1.0) / gk,
    }
}

/// min_k of the normalized relaxed rate Σ_n ζ̃ [ln(1 + C p/(p + D)) − ln(1 + B p)]
/// with p = p̃ / ζ̃. For a binary ζ̃ this is the unclipped block objective.
pub fn relaxed_objective(problem: &Problem, it: &Iterate, zeta: &[Vec<f64>], p_tilde: &[Vec<f64>]) -> f64 {
    let gains = problem.gains(&it.plan);
    let alloc = &it.alloc;
    let n_slots = alloc.n_slots();
    let weight = 1.0 / (2.0 * LN_2 * n_slots as f64 * problem.power_ratio(&it.plan));
    let per_user: Vec<f64> = (0..alloc.num_users())
        .map(|k| {
            (0..n_slots)
                .map(|n| {
                    let (z, pt) = (zeta[k][n], p_tilde[k][n]);
                    if z <= 0.0 {
                        return 0.0;
                    }
                    let sc = slot_constants(&gains, alloc, k, n);
                    let p = pt / z;
                    z * ((sc.c * p / (p + sc.d)).ln_1p() - (sc.b * p).ln_1p())
                })
                .sum::<f64>()
                * weight
        })
        .collect();
    min(&per_user)
}

struct Model {
    prog: ConeProgram,
    zeta: Vec<Vec<Var>>,
    p_tilde: Vec<Vec<Var>>,
}

fn build(problem: &Problem, gains: &LinkGains, alloc: &ResourceAllocation, weight: f64, z0: &[Vec<f64>], pt0: &[Vec<f64>], penalty: Option<f64>) -> Result<Model, SubproblemError> {
    let c = problem.config;
    let (k_users, n_slots) = (alloc.num_users(), alloc.n_slots());
    let mut prog = ConeProgram::new();
    let psi = prog.var("psi");
    let zeta: Vec<Vec<Var>> = (0..k_users)
        .map(|k| (0..n_slots).map(|n| prog.var_bounded(format!("zeta[{k}][{n}]"), Some(0.0), Some(1.0))).collect())
        .collect();
    let p_tilde: Vec<Vec<Var>> = (0..k_users)
        .map(|k| (0..n_slots).map(|n| prog.nonneg_var(format!("p_tilde[{k}][{n}]"))).collect())
        .collect();

    for n in 0..n_slots {
        let share = (0..k_users).fold(LinExpr::default(), |acc, k| acc + zeta[k][n]);
        prog.add_le(share, 1.0, format!("C2[{n}]"))?;
    }
    let total = p_tilde.iter().flatten().fold(LinExpr::default(), |acc, &v| acc + v);
    prog.add_le(total * (1.0 / n_slots as f64), c.ue_avg_power, "C3")?;

    for k in 0..k_users {
        let mut rate = LinExpr::default();
        for n in 0..n_slots {
            let (z, pt) = (zeta[k][n], p_tilde[k][n]);
            prog.add_le(pt, z * c.ue_peak_power, format!("C4[{k}][{n}]"))?;
            let sc = slot_constants(gains, alloc, k, n);
            let tag = format!("rate[{k}][{n}]");
            if sc.c > MIN_RELAY_GAIN {
                // ζ̃ ln(V/U) = −((1+C)/(C D)) U ln(U/V) − (1/(C D)) V ln(V/U)
                let u = pt + z * sc.d;
                let v = pt * (sc.c + 1.0) + z * sc.d;
                let e1 = prog.var(format!("e1[{k}][{n}]"));
                let e2 = prog.var(format!("e2[{k}][{n}]"));
                prog.add_relative_entropy(e1, u.clone(), v.clone(), tag.clone())?;
                prog.add_relative_entropy(e2, v, u, tag.clone())?;
                let cd = sc.c * sc.d;
                rate -= e1 * ((1.0 + sc.c) / cd) + e2 * (1.0 / cd);
            }
            let plane = f1_ub_plane(z0[k][n], pt0[k][n], sc.b)?;
            rate -= z * plane.dx + pt * plane.dy + plane.intercept();
        }
        prog.add_le(psi, rate * weight, format!("min_rate[{k}]"))?;
    }

    match penalty {
        Some(mu) => {
            let eta = prog.nonneg_var("eta");
            let mut lin = LinExpr::default();
            for (k, row) in zeta.iter().enumerate() {
                for (n, &z) in row.iter().enumerate() {
                    let z0 = z0[k][n];
                    lin += z * (1.0 - 2.0 * z0) + z0 * z0;
                }
            }
            prog.add_le(lin, eta, "binary_penalty")?;
            prog.maximize(psi - eta * mu);
        }
        None => prog.maximize(psi),
    }
    Ok(Model { prog, zeta, p_tilde })
}

fn interior_point(zeta: &[Vec<f64>], p_tilde: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let z0: Vec<Vec<f64>> = zeta.iter().map(|r| r.iter().map(|z| z.clamp(INTERIOR, 1.0 - INTERIOR)).collect()).collect();
    let pt0 = p_tilde.iter().map(|r| r.iter().map(|p| p.max(POWER_FLOOR)).collect()).collect();
    (z0, pt0)
}

fn binary_residual(zeta: &[Vec<f64>]) -> f64 {
    zeta.iter().flatten().map(|z| z * (1.0 - z)).sum::<f64>().max(0.0)
}

/// ⌊ζ̃ + 0.5⌋ per entry; a slot with two entries at exactly 0.5 keeps the
/// larger pre-rounding value, then the lower user index.
pub fn round_scheduling(zeta: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k_users = zeta.len();
    let n_slots = zeta.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; n_slots]; k_users];
    for n in 0..n_slots {
        let mut best: Option<usize> = None;
        for k in 0..k_users {
            if (zeta[k][n] + 0.5).floor() >= 1.0 && best.map_or(true, |b| zeta[k][n] > zeta[b][n]) {
                best = Some(k);
            }
        }
        if let Some(k) = best {
            out[k][n] = 1.0;
        }
    }
    out
}

pub fn solve_p1(problem: &Problem, incoming: &Iterate) -> Result<BlockOutcome, SubproblemError> {
    solve_p1_with(problem, incoming, &P1Options::default()).map(|(out, _)| out)
}

pub fn solve_p1_with(problem: &Problem, incoming: &Iterate, opts: &P1Options) -> Result<(BlockOutcome, P1Relaxed), SubproblemError> {
    let c = problem.config;
    let alloc = &incoming.alloc;
    let gains = problem.gains(&incoming.plan);
    let (k_users, n_slots) = (alloc.num_users(), alloc.n_slots());
    let weight = 1.0 / (2.0 * LN_2 * n_slots as f64 * problem.power_ratio(&incoming.plan));

    // start from the incoming powers; unscheduled slots get the average so
    // the first surrogate sees a sensible share-to-power ratio
    let mut zeta = alloc.zeta.clone();
    let mut p_tilde: Vec<Vec<f64>> = (0..k_users)
        .map(|k| {
            (0..n_slots)
                .map(|n| {
                    let p = if alloc.p_k[k][n] > 0.0 { alloc.p_k[k][n] } else { c.ue_avg_power };
                    zeta[k][n].clamp(INTERIOR, 1.0 - INTERIOR) * p
                })
                .collect()
        })
        .collect();

    let mut penalty = opts.penalize.then_some(c.penalty_init);
    let mut trace = Vec::new();
    let mut flag = None;
    let mut prev: Option<f64> = None;
    let mut iters = 0;
    while iters < opts.max_iters {
        iters += 1;
        let (z0, pt0) = interior_point(&zeta, &p_tilde);
        let model = build(problem, &gains, alloc, weight, &z0, &pt0, penalty)?;
        let report = solve(&model.prog)?;
        if let Err(e) = check_solve("P1", &model.prog, &report) {
            flag = Some(e.to_string());
            break;
        }
        zeta = model.zeta.iter().map(|r| r.iter().map(|&v| report.value(v).clamp(0.0, 1.0)).collect()).collect();
        p_tilde = model.p_tilde.iter().map(|r| r.iter().map(|&v| report.value(v).max(0.0)).collect()).collect();
        let value = report.objective;
        trace.push((penalty.unwrap_or(0.0), value));
        let stalled = prev.is_some_and(|p| (value - p).abs() <= c.tol_sca_p1 * p.abs().max(1e-12));
        prev = Some(value);
        let residual = binary_residual(&zeta);
        match penalty {
            Some(mu) if residual > opts.binary_tol => {
                if stalled {
                    penalty = Some((mu * c.penalty_growth).min(c.penalty_cap));
                    prev = None;
                }
            }
            _ if stalled => break,
            _ => {}
        }
    }
    let residual = binary_residual(&zeta);
    if opts.penalize && residual > opts.binary_tol {
        let note = format!("P1 binary residual {residual:.3e} above {:.1e} after {iters} iterations", opts.binary_tol);
        flag = Some(flag.map_or(note.clone(), |f| format!("{f}; {note}")));
    }

    let relaxed = P1Relaxed {
        objective: relaxed_objective(problem, incoming, &zeta, &p_tilde),
        binary_residual: residual,
        zeta: zeta.clone(),
        p_tilde: p_tilde.clone(),
        trace: trace.clone(),
    };

    let schedule = round_scheduling(&zeta);
    let mut p_k = vec![vec![0.0; n_slots]; k_users];
    for k in 0..k_users {
        for n in 0..n_slots {
            if schedule[k][n] > 0.5 && zeta[k][n] >= opts.zeta_floor {
                p_k[k][n] = (p_tilde[k][n] / zeta[k][n]).min(c.ue_peak_power);
            }
        }
    }
    // rounding up shares raises ζ p above p̃; scale back into the budget
    let used = p_k.iter().flatten().sum::<f64>() / n_slots as f64;
    if used > c.ue_avg_power {
        let s = c.ue_avg_power / used;
        p_k.iter_mut().flatten().for_each(|p| *p *= s);
    }
    let mut candidate = incoming.clone();
    candidate.alloc.zeta = schedule;
    candidate.alloc.p_k = p_k;
    let mut out = BlockOutcome::guarded(problem, incoming, candidate, iters, flag, trace.iter().map(|t| t.1).collect());
    out.binary_residual = Some(residual);
    Ok((out, relaxed))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{desk, initial};
    use super::super::{audit_constraints, ObjectiveMode};
    use super::*;

    #[test]
    fn rounding_examples() {
        assert_eq!(round_scheduling(&[vec![0.95], vec![0.04]]), vec![vec![1.0], vec![0.0]]);
        assert_eq!(round_scheduling(&[vec![0.5], vec![0.5]]), vec![vec![1.0], vec![0.0]]);
        assert_eq!(round_scheduling(&[vec![0.49], vec![0.51]]), vec![vec![0.0], vec![1.0]]);
        assert_eq!(round_scheduling(&[vec![0.3], vec![0.3]]), vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn relaxed_objective_matches_exact_for_binary_schedules() {
        let (config, layout) = desk();
        let problem = Problem::new(&config, &layout, ObjectiveMode::Msee);
        let it = initial(&config, &layout);
        let pt = it.alloc.p_tilde();
        let relaxed = relaxed_objective(&problem, &it, &it.alloc.zeta, &pt);
        let exact = problem.objective_with(&it, false);
        assert!((relaxed - exact).abs() <= 1e-12 * exact.abs().max(1.0), "{relaxed} vs {exact}");
    }

    #[test]
    fn psca_reaches_a_binary_feasible_point() {
        let (config, layout) = desk();
        let problem = Problem::new(&config, &layout, ObjectiveMode::Msee);
        let it = initial(&config, &layout);
        let (out, relaxed) = solve_p1_with(&problem, &it, &P1Options::default()).unwrap();
        assert!(relaxed.binary_residual <= 1e-3, "{}", relaxed.binary_residual);
        // monotone within each penalty level
        for w in relaxed.trace.windows(2) {
            if w[0].0 == w[1].0 {
                assert!(w[1].1 >= w[0].1 - 1e-6 * w[0].1.abs().max(1.0), "{:?}", relaxed.trace);
            }
        }
        let nf = config.n_slots() as f64;
        assert!(relaxed.p_tilde.iter().flatten().sum::<f64>() / nf <= config.ue_avg_power + 1e-6);
        assert!(out.objective_after >= out.objective_before);
        assert!(audit_constraints(&problem, &out.iterate).pass);
    }

    #[test]
    fn single_user_takes_every_used_slot() {
        let mut config = crate::scenario::ScenarioConfig::desk();
        config.num_users = 1;
        let layout = crate::scenario::place_users(&config);
        let problem = Problem::new(&config, &layout, ObjectiveMode::Msee);
        let it = initial(&config, &layout);
        let (_, relaxed) = solve_p1_with(&problem, &it, &P1Options::default()).unwrap();
        let schedule = round_scheduling(&relaxed.zeta);
        for n in 0..config.n_slots() {
            if relaxed.p_tilde[0][n] > 1e-3 {
                assert_eq!(schedule[0][n], 1.0, "slot {n}: {:?}", relaxed.zeta[0][n]);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn rounding_gives_one_hot_columns(
            raw in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 6), 1..5)
        ) {
            // normalize columns so each slot's shares sum to at most one
            let k_users = raw.len();
            let mut zeta = raw.clone();
            for n in 0..6 {
                let total: f64 = (0..k_users).map(|k| raw[k][n]).sum();
                if total > 1.0 {
                    for row in zeta.iter_mut() {
                        row[n] /= total;
                    }
                }
            }
            let rounded = round_scheduling(&zeta);
            for n in 0..6 {
                let ones: Vec<usize> = (0..k_users).filter(|&k| rounded[k][n] == 1.0).collect();
                proptest::prop_assert!(ones.len() <= 1);
                proptest::prop_assert!((0..k_users).all(|k| rounded[k][n] == 0.0 || rounded[k][n] == 1.0));
                let above: Vec<usize> = (0..k_users).filter(|&k| zeta[k][n] > 0.5).collect();
                if let [k] = above[..] {
                    proptest::prop_assert_eq!(&ones, &vec![k]);
                }
                if (0..k_users).all(|k| zeta[k][n] < 0.5) {
                    proptest::prop_assert!(ones.is_empty());
                }
            }
        }
    }
}
