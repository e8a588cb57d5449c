//! Relay power block. With everything else fixed the min-rate objective is
//! concave in the relay powers, so one conic solve gives the block optimum.

use std::f64::consts::LN_2;

use super::{check_solve, enforce_power_budget, BlockOutcome, Iterate, Problem, SubproblemError};
use crate::conic::{solve, ConeProgram, LinExpr};

/// Relay SNR in slot n is E p_u / (p_u + F), so the rate is
/// ln(1 + E − E F / (p_u + F)); an auxiliary z ≥ 1 / (p_u + F) makes the
/// row conic.
pub fn solve_p2(problem: &Problem, incoming: &Iterate) -> Result<BlockOutcome, SubproblemError> {
    let c = problem.config;
    let alloc = &incoming.alloc;
    let gains = problem.gains(&incoming.plan);
    let n_slots = alloc.n_slots();
    let weight = 1.0 / (2.0 * LN_2 * n_slots as f64 * problem.power_ratio(&incoming.plan));

    let mut prog = ConeProgram::new();
    let psi = prog.var("psi");
    let p_u: Vec<_> = (0..n_slots)
        .map(|n| prog.var_bounded(format!("p_u[{n}]"), Some(0.0), Some(c.relay_peak_power)))
        .collect();
    let total = p_u.iter().fold(LinExpr::default(), |acc, &v| acc + v);
    prog.add_le(total, c.relay_avg_power * n_slots as f64, "C5")?;

    let mut per_user = vec![LinExpr::default(); alloc.num_users()];
    for n in 0..n_slots {
        let Some(k) = Problem::scheduled_user(alloc, n) else { continue };
        let e = alloc.p_k[k][n] * gains.g_ku[k][n];
        if e <= 0.0 {
            continue;
        }
        let jam = alloc.p_b[n] * gains.g_bu[n];
        let f = (e + jam + 1.0) / gains.g_bu[n];
        let leak = (e / (jam + 1.0)).ln_1p();
        let tag = format!("relay_rate[{n}]");
        let z = prog.nonneg_var(format!("z[{n}]"));
        let t = prog.var(format!("t[{n}]"));
        prog.add_rsoc(z, p_u[n] + f, vec![LinExpr::constant(1.0)], tag.clone())?;
        prog.add_exp(t, 1.0, LinExpr::constant(1.0 + e) - z * (e * f), tag)?;
        per_user[k] += (t - leak) * weight;
    }
    for (k, rate) in per_user.into_iter().enumerate() {
        prog.add_le(psi, rate, format!("min_rate[{k}]"))?;
    }
    prog.maximize(psi);
    let report = solve(&prog)?;
    check_solve("P2", &prog, &report)?;

    let mut candidate = incoming.clone();
    candidate.alloc.p_u = p_u.iter().map(|&v| report.value(v)).collect();
    enforce_power_budget(&mut candidate.alloc.p_u, c.relay_avg_power, c.relay_peak_power);
    Ok(BlockOutcome::guarded(problem, incoming, candidate, 1, None, vec![report.objective]))
}
