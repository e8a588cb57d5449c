//! Feasible starting point: a circle or Piriform loop through q_I, flat
//! powers and round-robin scheduling.

use std::f64::consts::{FRAC_PI_2, PI};

use super::OrchestratorError;
use crate::physics::{norm_sq, FlightPlan, ResourceAllocation};
use crate::scenario::{dist, NodeLayout, ScenarioConfig, Vec2};
use crate::subproblems::Iterate;

const PIRIFORM_GRID: usize = 32;

/// Velocities from exact forward differences, closing back to q_I, so the
/// kinematic and return constraints hold exactly.
fn plan_from_points(points: Vec<Vec2>, config: &ScenarioConfig) -> FlightPlan {
    let n = points.len();
    let dt = config.slot_duration;
    let v = (0..n)
        .map(|i| {
            let next = if i + 1 < n { points[i + 1] } else { config.uav_start };
            [(next[0] - points[i][0]) / dt, (next[1] - points[i][1]) / dt]
        })
        .collect();
    FlightPlan::new(points, v, &config.rotor)
}

/// Uniform circle around q_b through q_I, one lap over the mission.
pub fn circular_plan(config: &ScenarioConfig) -> FlightPlan {
    let n = config.n_slots();
    let (qb, qi) = (config.bs_pos, config.uav_start);
    let radius = dist(qi, qb);
    let phase = (qi[1] - qb[1]).atan2(qi[0] - qb[0]);
    let points = (0..n)
        .map(|i| {
            let a = phase + 2.0 * PI * i as f64 / n as f64;
            [qb[0] + radius * a.cos(), qb[1] + radius * a.sin()]
        })
        .collect();
    plan_from_points(points, config)
}

/// Piriform loop x = R_c (sin t + 1)/2, y = A_y (1 − sin t) cos t in the
/// frame with x pointing from q_b to q_I, for t from π/2 over one period.
pub fn piriform_plan(config: &ScenarioConfig, a_y: f64) -> FlightPlan {
    let n = config.n_slots();
    let (qb, qi) = (config.bs_pos, config.uav_start);
    let radius = dist(qi, qb);
    let (ex, ey) = if radius > 0.0 { ((qi[0] - qb[0]) / radius, (qi[1] - qb[1]) / radius) } else { (1.0, 0.0) };
    let points = (0..n)
        .map(|i| {
            let t = FRAC_PI_2 + 2.0 * PI * i as f64 / n as f64;
            let x = radius * (t.sin() + 1.0) / 2.0;
            let y = a_y * (1.0 - t.sin()) * t.cos();
            [qb[0] + x * ex - y * ey, qb[1] + x * ey + y * ex]
        })
        .collect();
    plan_from_points(points, config)
}

fn kinematically_feasible(plan: &FlightPlan, config: &ScenarioConfig) -> bool {
    let tol = 1e-9;
    let speed_ok = plan.v.iter().all(|&v| norm_sq(v).sqrt() <= config.vmax + tol);
    let accel_ok = plan.v.windows(2).all(|w| dist(w[1], w[0]) <= config.amax + tol);
    let area_ok = plan.q.iter().all(|&q| dist(q, config.bs_pos) <= config.outer_radius + tol);
    speed_ok && accel_ok && area_ok
}

/// Largest over users of the closest approach of the path to that user.
fn coverage_gap(plan: &FlightPlan, layout: &NodeLayout) -> f64 {
    layout
        .ue_positions
        .iter()
        .map(|&u| plan.q.iter().map(|&q| dist(q, u)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Picks A_y on a grid over [0, R_c]: among kinematically feasible shapes,
/// the one whose worst-served user is closest to the path; A_y = 0 if none.
pub fn piriform_width(config: &ScenarioConfig, layout: &NodeLayout) -> f64 {
    let radius = dist(config.uav_start, config.bs_pos);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..PIRIFORM_GRID {
        let a_y = radius * i as f64 / (PIRIFORM_GRID - 1) as f64;
        let plan = piriform_plan(config, a_y);
        if !kinematically_feasible(&plan, config) {
            continue;
        }
        let gap = coverage_gap(&plan, layout);
        if gap < best.0 {
            best = (gap, a_y);
        }
    }
    best.1
}

/// Slot n goes to user n mod K for the first K ⌊N/K⌋ slots.
pub fn round_robin(config: &ScenarioConfig) -> ResourceAllocation {
    let (k_users, n_slots) = (config.num_users, config.n_slots());
    let served = k_users * (n_slots / k_users.max(1));
    let mut zeta = vec![vec![0.0; n_slots]; k_users];
    let mut p_k = vec![vec![0.0; n_slots]; k_users];
    for n in 0..served {
        zeta[n % k_users][n] = 1.0;
        p_k[n % k_users][n] = config.ue_avg_power;
    }
    ResourceAllocation {
        p_k,
        p_u: vec![config.relay_avg_power; n_slots],
        p_b: vec![config.jam_avg_power; n_slots],
        zeta,
    }
}

pub fn initialize_feasible(config: &ScenarioConfig, layout: &NodeLayout) -> Result<Iterate, OrchestratorError> {
    let radius = dist(config.uav_start, config.bs_pos);
    let circle_time = 2.0 * PI * radius / config.vmax;
    let min_time = 2.0 * radius / config.vmax;
    let plan = if config.mission_time >= circle_time {
        circular_plan(config)
    } else if config.mission_time >= min_time {
        piriform_plan(config, piriform_width(config, layout))
    } else {
        return Err(OrchestratorError::MissionTooShort { mission_time: config.mission_time, min_time });
    };
    Ok(Iterate { plan, alloc: round_robin(config) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::place_users;
    use crate::subproblems::{audit_constraints, ObjectiveMode, Problem};

    #[test]
    fn table1_uses_the_circle_and_passes_audit() {
        let config = ScenarioConfig::table1();
        let layout = place_users(&config);
        let it = initialize_feasible(&config, &layout).unwrap();
        assert!((2.0 * PI * 25.0 / 20.0 - 7.853_981_6).abs() < 1e-6);
        assert_eq!(it.plan, circular_plan(&config));
        let problem = Problem::new(&config, &layout, ObjectiveMode::Msee);
        assert!(audit_constraints(&problem, &it).pass);
        for k in 0..5 {
            assert_eq!(it.alloc.scheduled_slots(k).count(), 20);
        }
    }

    #[test]
    fn short_mission_uses_the_piriform() {
        let config = ScenarioConfig { mission_time: 7.0, ..ScenarioConfig::table1() };
        let layout = place_users(&config);
        let it = initialize_feasible(&config, &layout).unwrap();
        assert_ne!(it.plan, circular_plan(&config));
        let a_y = piriform_width(&config, &layout);
        assert_eq!(it.plan, piriform_plan(&config, a_y));
        let problem = Problem::new(&config, &layout, ObjectiveMode::Msee);
        let audit = audit_constraints(&problem, &it);
        // flight power is not part of the shape search
        assert!(audit.entries.iter().filter(|e| e.family != "C9").all(|e| e.pass), "{:?}", audit.failures());
    }

    #[test]
    fn too_short_mission_is_rejected() {
        let config = ScenarioConfig { mission_time: 2.0, ..ScenarioConfig::table1() };
        let layout = place_users(&config);
        match initialize_feasible(&config, &layout) {
            Err(OrchestratorError::MissionTooShort { min_time, .. }) => assert!((min_time - 2.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
