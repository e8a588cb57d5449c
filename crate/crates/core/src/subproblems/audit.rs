//! Feasibility audit of a complete solution against every constraint family.

use serde::{Deserialize, Serialize};

use super::{Iterate, ObjectiveMode, Problem};
use crate::physics::norm_sq;
use crate::scenario::dist;

const POWER_TOL: f64 = 1e-6;
const GEOMETRY_TOL: f64 = 1e-4;
const FLIGHT_POWER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    /// Constraint family label, C1 to C14.
    pub family: String,
    pub description: String,
    /// Largest violation in the family's natural units.
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub pass: bool,
}

impl AuditReport {
    pub fn failures(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| format!("{} {} residual {:.3e}", e.family, e.description, e.residual))
            .collect()
    }

    pub fn entry(&self, family: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.family == family)
    }
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

fn power_family(p: &[f64], avg: f64, peak: f64) -> (f64, f64) {
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let peak_viol = max_of(p.iter().map(|&x| (x - peak).max(-x).max(0.0)));
    ((mean - avg).max(0.0), peak_viol)
}

/// Checks C1 to C14. Power and scheduling families use an absolute tolerance
/// of 1e-6, the flight-power budget 1e-6 P̄_lim and geometry 1e-4 m.
pub fn audit_constraints(problem: &Problem, it: &Iterate) -> AuditReport {
    let c = problem.config;
    let (plan, alloc) = (&it.plan, &it.alloc);
    let n_slots = alloc.n_slots();
    let k_users = alloc.num_users();
    let nf = n_slots as f64;

    let c1 = max_of(alloc.zeta.iter().flatten().map(|&z| z.abs().min((1.0 - z).abs())));
    let c2 = max_of((0..n_slots).map(|n| (0..k_users).map(|k| alloc.zeta[k][n]).sum::<f64>() - 1.0));
    let c3 = (alloc.p_tilde().iter().flatten().sum::<f64>() / nf - c.ue_avg_power).max(0.0);
    let c4 = max_of(alloc.p_k.iter().flatten().map(|&x| (x - c.ue_peak_power).max(-x)));
    let (c5, c6) = power_family(&alloc.p_u, c.relay_avg_power, c.relay_peak_power);
    let (c7, c8) = power_family(&alloc.p_b, c.jam_avg_power, c.jam_peak_power);

    let check_power_limit = !matches!(problem.mode, ObjectiveMode::Masr { keep_power_limit: false });
    let c9 = if check_power_limit {
        (plan.average_flight_power(&c.rotor) - c.flight_power_limit).max(0.0)
    } else {
        0.0
    };
    let end = plan.end_point(c.slot_duration);
    let c10 = dist(plan.q[0], c.uav_start).max(dist(end, c.uav_start));
    let c11 = max_of((0..n_slots.saturating_sub(1)).map(|n| {
        let pred = [plan.q[n][0] + plan.v[n][0] * c.slot_duration, plan.q[n][1] + plan.v[n][1] * c.slot_duration];
        dist(plan.q[n + 1], pred)
    }));
    let c12 = max_of(plan.v.iter().map(|&v| norm_sq(v).sqrt() - c.vmax));
    let c13 = max_of((0..n_slots.saturating_sub(1)).map(|n| dist(plan.v[n + 1], plan.v[n]) - c.amax));
    let c14 = max_of(plan.q.iter().map(|&q| dist(q, c.bs_pos) - c.outer_radius));

    let rows: [(&'static str, &'static str, f64, f64); 14] = [
        ("C1", "binary scheduling", c1, POWER_TOL),
        ("C2", "one user per slot", c2, POWER_TOL),
        ("C3", "user average power", c3, POWER_TOL),
        ("C4", "user peak power", c4, POWER_TOL),
        ("C5", "relay average power", c5, POWER_TOL),
        ("C6", "relay peak power", c6, POWER_TOL),
        ("C7", "jammer average power", c7, POWER_TOL),
        ("C8", "jammer peak power", c8, POWER_TOL),
        ("C9", "flight power budget", c9, FLIGHT_POWER_TOL * c.flight_power_limit),
        ("C10", "start and end at q_I", c10, GEOMETRY_TOL),
        ("C11", "kinematics", c11, GEOMETRY_TOL),
        ("C12", "speed limit", c12, GEOMETRY_TOL),
        ("C13", "acceleration limit", c13, GEOMETRY_TOL),
        ("C14", "service area", c14, GEOMETRY_TOL),
    ];
    let entries: Vec<AuditEntry> = rows
        .into_iter()
        .map(|(family, description, residual, tolerance)| {
            let residual = residual.max(0.0);
            AuditEntry { family: family.into(), description: description.into(), residual, tolerance, pass: residual <= tolerance }
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    AuditReport { entries, pass }
}
