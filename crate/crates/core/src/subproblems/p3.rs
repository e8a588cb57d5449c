//! Jammer power block, solved by successive convex approximation.
//!
//! The relay rate ln(1 + H / (p_b + I)) is convex in p_b and is replaced by
//! its tangent. The wiretap rate ln(1 + J / (p_b + K)) enters negatively and
//! stays exact: τ ≥ ln(J / (p_b + K)) and t ≥ ln(1 + e^τ).

use std::f64::consts::LN_2;

use super::{check_solve, enforce_power_budget, BlockOutcome, Iterate, Problem, SubproblemError};
use crate::bounds::f3_line;
use crate::conic::{solve, ConeProgram, LinExpr};
use crate::physics::{LinkGains, ResourceAllocation};

const MAX_SCA_ITERS: usize = 30;

fn build_and_solve(problem: &Problem, gains: &LinkGains, alloc: &ResourceAllocation, weight: f64, pb0: &[f64]) -> Result<(Vec<f64>, f64), SubproblemError> {
    let c = problem.config;
    let n_slots = alloc.n_slots();
    let mut prog = ConeProgram::new();
    let psi = prog.var("psi");
    let p_b: Vec<_> = (0..n_slots)
        .map(|n| prog.var_bounded(format!("p_b[{n}]"), Some(0.0), Some(c.jam_peak_power)))
        .collect();
    let total = p_b.iter().fold(LinExpr::default(), |acc, &v| acc + v);
    prog.add_le(total, c.jam_avg_power * n_slots as f64, "C7")?;

    let mut per_user = vec![LinExpr::default(); alloc.num_users()];
    for n in 0..n_slots {
        let Some(k) = Problem::scheduled_user(alloc, n) else { continue };
        let x = alloc.p_k[k][n] * gains.g_ku[k][n];
        if x <= 0.0 {
            continue;
        }
        let g = gains.g_bu[n];
        let tag = format!("jam_rates[{n}]");
        let mut rate = LinExpr::default();
        if alloc.p_u[n] > 0.0 {
            let h = x * alloc.p_u[n];
            let i = (alloc.p_u[n] * g + x + 1.0) / g;
            let line = f3_line(pb0[n], h, i)?;
            rate += p_b[n] * line.slope + line.intercept();
        }
        let (j, kk) = (x / g, 1.0 / g);
        let tau = prog.var(format!("tau[{n}]"));
        let t = prog.var(format!("t[{n}]"));
        prog.add_exp(-tau, 1.0, (p_b[n] + kk) * (1.0 / j), tag.clone())?;
        prog.add_lse(t, vec![LinExpr::constant(0.0), tau.into()], &tag)?;
        rate -= t;
        per_user[k] += rate * weight;
    }
    for (k, rate) in per_user.into_iter().enumerate() {
        prog.add_le(psi, rate, format!("min_rate[{k}]"))?;
    }
    prog.maximize(psi);
    let report = solve(&prog)?;
    check_solve("P3.1", &prog, &report)?;
    Ok((p_b.iter().map(|&v| report.value(v)).collect(), report.objective))
}

pub fn solve_p31(problem: &Problem, incoming: &Iterate) -> Result<BlockOutcome, SubproblemError> {
    let c = problem.config;
    let gains = problem.gains(&incoming.plan);
    let alloc = &incoming.alloc;
    let weight = 1.0 / (2.0 * LN_2 * alloc.n_slots() as f64 * problem.power_ratio(&incoming.plan));

    let mut pb = alloc.p_b.clone();
    let mut trace = Vec::new();
    let mut flag = None;
    let mut iters = 0;
    while iters < MAX_SCA_ITERS {
        iters += 1;
        match build_and_solve(problem, &gains, alloc, weight, &pb) {
            Ok((mut next, value)) => {
                enforce_power_budget(&mut next, c.jam_avg_power, c.jam_peak_power);
                pb = next;
                let done = trace.last().is_some_and(|&prev: &f64| (value - prev).abs() <= c.tol_sca_p3 * prev.abs().max(1e-12));
                trace.push(value);
                if done {
                    break;
                }
            }
            Err(e @ SubproblemError::SolveFailed { .. }) => {
                flag = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if flag.is_none() && iters == MAX_SCA_ITERS {
        flag = Some(format!("P3.1 hit the {MAX_SCA_ITERS}-iteration cap"));
    }
    let mut candidate = incoming.clone();
    candidate.alloc.p_b = pb;
    Ok(BlockOutcome::guarded(problem, incoming, candidate, iters, flag, trace))
}
