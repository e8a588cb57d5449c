//! Trajectory block: Dinkelbach iterations on the ratio of the min secrecy
//! rate to the flight power, each solving one convex restriction built at
//! the current plan.
//!
//! Path-loss slacks are kept in units of (N₀/β₀) H², so that the slack for
//! a node at horizontal distance r is (r² + H²) e^{a_f d} / H², which is
//! O(1..100) for the scenarios of interest.

use std::f64::consts::LN_2;

use super::{check_solve, BlockOutcome, Iterate, ObjectiveMode, Problem, SubproblemError};
use crate::bounds::{f43_line, f44_line};
use crate::conic::{solve, ConeProgram, LinExpr, PathDirection, Var};
use crate::physics::{link_distance, norm_sq, path_loss_m2, FlightPlan};
use crate::scenario::Vec2;

const MAX_DINKELBACH_ITERS: usize = 30;
const LAMBDA_SLACK: f64 = 1e-8;
/// Powers below this are treated as switched off inside the model.
const POWER_EPS: f64 = 1e-12;

/// Per-iteration record of the Dinkelbach loop.
#[derive(Debug, Clone, Default)]
pub struct P4Trace {
    /// λ at the incoming plan, then after each iteration.
    pub lambdas: Vec<f64>,
    /// Optimal value F = ψ − λ ω of each convex restriction.
    pub f_values: Vec<f64>,
    /// Surrogate ratio ψ / ω of the last solve.
    pub surrogate_ratio: Option<f64>,
    pub converged: bool,
}

struct Solved {
    q: Vec<Vec2>,
    v: Vec<Vec2>,
    psi: f64,
    omega: f64,
    value: f64,
}

fn lin2(x: Var, y: Var) -> [LinExpr; 2] {
    [x.into(), y.into()]
}

/// Builds and solves the convex restriction at `expansion` with ratio λ.
/// In MASR mode λ is zero and ω only carries the power-limit row.
fn solve_restriction(problem: &Problem, it: &Iterate, lambda: f64) -> Result<Solved, SubproblemError> {
    let c = problem.config;
    let rotor = &c.rotor;
    let plan = &it.plan;
    let alloc = &it.alloc;
    let n_slots = plan.n_slots();
    let h = c.altitude;
    let ah = c.absorption * h;
    let unit = c.path_loss_scale() * h * h;
    let dt = c.slot_duration;
    let weight = 1.0 / (2.0 * LN_2 * n_slots as f64);

    let mut prog = ConeProgram::new();
    let psi = prog.var("psi");
    let q: Vec<[Var; 2]> = (0..n_slots).map(|n| [prog.var(format!("q[{n}].x")), prog.var(format!("q[{n}].y"))]).collect();
    let v: Vec<[Var; 2]> = (0..n_slots).map(|n| [prog.var(format!("v[{n}].x")), prog.var(format!("v[{n}].y"))]).collect();

    // C10, C11
    for d in 0..2 {
        prog.add_eq(q[0][d], c.uav_start[d], "C10")?;
        for n in 0..n_slots - 1 {
            prog.add_eq(q[n + 1][d], q[n][d] + v[n][d] * dt, format!("C11[{n}]"))?;
        }
        prog.add_eq(q[n_slots - 1][d] + v[n_slots - 1][d] * dt, c.uav_start[d], "C10")?;
    }
    for n in 0..n_slots {
        prog.add_soc(c.vmax, vec![v[n][0].into(), v[n][1].into()], format!("C12[{n}]"))?;
        prog.add_soc(
            c.outer_radius,
            vec![q[n][0] - c.bs_pos[0], q[n][1] - c.bs_pos[1]],
            format!("C14[{n}]"),
        )?;
        if n + 1 < n_slots {
            prog.add_soc(c.amax, vec![v[n + 1][0] - v[n][0], v[n + 1][1] - v[n][1]], format!("C13[{n}]"))?;
        }
    }

    // flight power epigraph in units of P̄_lim, with speeds in units of vmax
    let omega = prog.var("omega");
    let nu0_sq = rotor.hover_induced_velocity.powi(2);
    let mut power = LinExpr::default();
    for n in 0..n_slots {
        let tag = format!("flight_power[{n}]");
        let [vx, vy] = v[n];
        let speed_sq = prog.nonneg_var(format!("speed_sq[{n}]"));
        let speed_cube = prog.nonneg_var(format!("speed_cube[{n}]"));
        let mu = prog.nonneg_var(format!("mu[{n}]"));
        let inv_mu = prog.nonneg_var(format!("inv_mu[{n}]"));
        let inv_v = 1.0 / c.vmax;
        prog.add_rsoc(speed_sq, 1.0, vec![vx * inv_v, vy * inv_v], tag.clone())?;
        prog.add_pow32(speed_cube, speed_sq, 1.0, &tag)?;
        // 1/μ ≤ inv_mu and inv_mu² ≤ tangent of μ² + ‖v‖²/ν₀²
        let (mu0, v0) = (plan.mu[n], plan.v[n]);
        let lower = (mu * (2.0 * mu0) - mu0 * mu0) + (vx * (2.0 * v0[0]) + vy * (2.0 * v0[1]) - norm_sq(v0)) * (1.0 / nu0_sq);
        prog.add_rsoc(inv_mu, mu, vec![LinExpr::constant(1.0)], tag.clone())?;
        prog.add_rsoc(lower, 1.0, vec![inv_mu.into()], tag)?;
        power += speed_sq * (3.0 * rotor.blade_coefficient() * c.vmax * c.vmax)
            + speed_cube * (rotor.parasite_coefficient() * c.vmax.powi(3))
            + mu * rotor.induced_power
            + rotor.blade_profile_power;
    }
    prog.add_ge(omega, power * (1.0 / (n_slots as f64 * c.flight_power_limit)), "flight_power")?;
    if !matches!(problem.mode, ObjectiveMode::Masr { keep_power_limit: false }) {
        prog.add_le(omega, 1.0, "C9")?;
    }

    // secrecy rates
    let mut per_user = vec![LinExpr::default(); alloc.num_users()];
    for n in 0..n_slots {
        let Some(k) = Problem::scheduled_user(alloc, n) else { continue };
        let (pk, pu, pb) = (alloc.p_k[k][n], alloc.p_u[n], alloc.p_b[n]);
        if pk <= POWER_EPS {
            continue;
        }
        let tag = format!("rate[{k}][{n}]");
        let qn = q[n];
        let qk = problem.layout.ue_positions[k];
        let qb = problem.layout.bs_pos;
        let q0 = plan.q[n];
        let user_slack0 = path_loss_m2(q0, qk, h, c.absorption) / (h * h);
        let bs_slack0 = path_loss_m2(q0, qb, h, c.absorption) / (h * h);

        // w ≥ BS-link slack, shared by the relay and wiretap terms
        let w = prog.nonneg_var(format!("w[{n}]"));
        prog.add_exp_path_atom(w, lin2(qn[0], qn[1]), qb, h, c.absorption, 1.0 / (h * h), PathDirection::Upper, &tag)?;

        let mut rate = LinExpr::default();
        if pu > POWER_EPS {
            // 1/SNR_relay = k0 r + k1 w + kr r w; bound r w by ½(α r² + w²/α)
            let r = prog.nonneg_var(format!("r[{n}]"));
            prog.add_exp_path_atom(r, lin2(qn[0], qn[1]), qk, h, c.absorption, 1.0 / (h * h), PathDirection::Upper, &tag)?;
            let k0 = (pu + pb) / (pk * pu) * unit;
            let k1 = unit / pu;
            let kr = unit * unit / (pk * pu);
            let alpha = bs_slack0 / user_slack0;
            let r_sq = prog.nonneg_var(format!("r_sq[{n}]"));
            let w_sq = prog.nonneg_var(format!("w_sq[{n}]"));
            prog.add_rsoc(r_sq, 1.0, vec![r.into()], tag.clone())?;
            prog.add_rsoc(w_sq, 1.0, vec![w.into()], tag.clone())?;
            let t0 = k0 * user_slack0 + k1 * bs_slack0 + kr * user_slack0 * bs_slack0;
            let slope = -1.0 / (t0 * (t0 + 1.0));
            let t_ub = r * k0 + w * k1 + (r_sq * alpha + w_sq * (1.0 / alpha)) * (0.5 * kr);
            rate += (t_ub - t0) * slope + t0.recip().ln_1p();
        }

        // wiretap ≤ ln(1 + k2/s + k3/w) − tangent of ln(1 + k3/w), with
        // s a lower slack on the user-link slack
        let k2 = pk / unit;
        let s = prog.nonneg_var(format!("s[{n}]"));
        let u = prog.nonneg_var(format!("u[{n}]"));
        let u0 = link_distance(q0, qk, h) / h;
        let f43 = f43_line(u0, ah)?;
        prog.add_le(s, u * f43.slope + f43.intercept(), tag.clone())?;
        let dist_lin = (qn[0] * (2.0 * (q0[0] - qk[0])) + qn[1] * (2.0 * (q0[1] - qk[1])))
            + (norm_sq(qk) - norm_sq(q0) + h * h);
        prog.add_rsoc(dist_lin * (1.0 / (h * h)), 1.0, vec![u.into()], tag.clone())?;
        let t3 = prog.var(format!("t3[{n}]"));
        prog.add_exp(-t3, 1.0, s * (1.0 / k2), tag.clone())?;
        let t5 = prog.var(format!("t5[{n}]"));
        let mut terms = vec![LinExpr::constant(0.0), t3.into()];
        if pb > POWER_EPS {
            let k3 = pb / unit;
            let t4 = prog.var(format!("t4[{n}]"));
            prog.add_exp(-t4, 1.0, w * (1.0 / k3), tag.clone())?;
            terms.push(t4.into());
            let f44 = f44_line(bs_slack0, k3)?;
            rate += w * f44.slope + f44.intercept();
        }
        prog.add_lse(t5, terms, &tag)?;
        rate -= t5;
        per_user[k] += rate * weight;
    }
    for (k, rate) in per_user.into_iter().enumerate() {
        prog.add_le(psi, rate, format!("min_rate[{k}]"))?;
    }
    match problem.mode {
        ObjectiveMode::Msee => prog.maximize(psi - omega * lambda),
        ObjectiveMode::Masr { .. } => prog.maximize(psi),
    }

    let report = solve(&prog)?;
    check_solve("P4", &prog, &report)?;
    Ok(Solved {
        q: q.iter().map(|p| [report.value(p[0]), report.value(p[1])]).collect(),
        v: v.iter().map(|p| [report.value(p[0]), report.value(p[1])]).collect(),
        psi: report.value(psi),
        omega: report.value(omega),
        value: report.objective,
    })
}

pub fn solve_p4(problem: &Problem, incoming: &Iterate) -> Result<BlockOutcome, SubproblemError> {
    solve_p4_dinkelbach(problem, incoming).map(|(out, _)| out)
}

/// λ is the exact unclipped ratio at the current plan. Each iteration
/// solves max ψ − λ ω and stops when |F| is below the Dinkelbach tolerance.
/// In MASR mode λ stays zero and the loop stops on relative change of ψ.
pub fn solve_p4_dinkelbach(problem: &Problem, incoming: &Iterate) -> Result<(BlockOutcome, P4Trace), SubproblemError> {
    let c = problem.config;
    let msee = problem.mode == ObjectiveMode::Msee;
    let mut current = incoming.clone();
    let mut lambda = problem.objective_with(&current, false);
    let mut trace = P4Trace { lambdas: vec![lambda], ..Default::default() };
    let mut flag = None;
    let mut iters = 0;
    let mut prev_psi: Option<f64> = None;
    while iters < MAX_DINKELBACH_ITERS {
        iters += 1;
        let solved = match solve_restriction(problem, &current, if msee { lambda } else { 0.0 }) {
            Ok(s) => s,
            Err(e @ SubproblemError::SolveFailed { .. }) => {
                flag = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        trace.f_values.push(solved.value);
        trace.surrogate_ratio = Some(solved.psi / solved.omega);
        let next = Iterate { plan: FlightPlan::new(solved.q, solved.v, &c.rotor), alloc: current.alloc.clone() };
        let next_lambda = problem.objective_with(&next, false);
        if msee && next_lambda < lambda - LAMBDA_SLACK * lambda.abs().max(1.0) {
            return Err(SubproblemError::LambdaDecrease { from: lambda, to: next_lambda });
        }
        current = next;
        lambda = next_lambda;
        trace.lambdas.push(lambda);
        let done = if msee {
            solved.value.abs() <= c.tol_dinkelbach
        } else {
            let done = prev_psi.is_some_and(|p| (solved.psi - p).abs() <= c.tol_sca_p4 * p.abs().max(1e-12));
            prev_psi = Some(solved.psi);
            done
        };
        if done {
            trace.converged = true;
            break;
        }
    }
    if flag.is_none() && !trace.converged {
        flag = Some(format!("P4 hit the {MAX_DINKELBACH_ITERS}-iteration cap"));
    }
    let out = BlockOutcome::guarded(problem, incoming, current, iters, flag, trace.lambdas.clone());
    Ok((out, trace))
}
