//! Closed-form channel, rate, secrecy and propulsion-power models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{dist, NodeLayout, RotorConstants, ScenarioConfig, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("induced-velocity slack must be positive, got {0}")]
    NonPositiveSlack(f64),
}

pub(crate) fn norm_sq(v: Vec2) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

/// 3-D distance between a UAV at altitude `h` and a ground node.
pub fn link_distance(q_uav: Vec2, q_node: Vec2, h: f64) -> f64 {
    (dist(q_uav, q_node).powi(2) + h * h).sqrt()
}

/// Line-of-sight THz power gain β₀ e^{−a_f d} / d².
pub fn channel_gain(q_uav: Vec2, q_node: Vec2, h: f64, beta0_linear: f64, a_f: f64) -> f64 {
    let d = link_distance(q_uav, q_node, h);
    beta0_linear * (-a_f * d).exp() / (d * d)
}

/// d² e^{a_f d}: the inverse channel gain up to the factor β₀.
pub fn path_loss_m2(q_uav: Vec2, q_node: Vec2, h: f64, a_f: f64) -> f64 {
    let d2 = dist(q_uav, q_node).powi(2) + h * h;
    d2 * (a_f * d2.sqrt()).exp()
}

/// Per-slot UAV kinematics. Slot `n` is flown from `q[n]` with velocity
/// `v[n]`; the mission closes at `q[N-1] + v[N-1] δ_t = q_I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightPlan {
    pub q: Vec<Vec2>,
    pub v: Vec<Vec2>,
    pub mu: Vec<f64>,
}

impl FlightPlan {
    /// Builds a plan with the induced-velocity slack evaluated exactly.
    pub fn new(q: Vec<Vec2>, v: Vec<Vec2>, rotor: &RotorConstants) -> Self {
        assert_eq!(q.len(), v.len(), "q and v must have one entry per slot");
        let mu = v.iter().map(|&vn| induced_slack(vn, rotor)).collect();
        Self { q, v, mu }
    }

    pub fn n_slots(&self) -> usize {
        self.q.len()
    }

    pub fn flight_powers(&self, rotor: &RotorConstants) -> Vec<f64> {
        self.v.iter().map(|&v| flight_power(v, rotor)).collect()
    }

    /// Average flight power P̄_f in watts.
    pub fn average_flight_power(&self, rotor: &RotorConstants) -> f64 {
        let p = self.flight_powers(rotor);
        p.iter().sum::<f64>() / p.len() as f64
    }

    /// Position after the last slot.
    pub fn end_point(&self, slot_duration: f64) -> Vec2 {
        let n = self.n_slots() - 1;
        [
            self.q[n][0] + self.v[n][0] * slot_duration,
            self.q[n][1] + self.v[n][1] * slot_duration,
        ]
    }
}

/// Powers (W) and user scheduling, indexed `[k][n]` for per-user arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceAllocation {
    pub p_k: Vec<Vec<f64>>,
    pub p_u: Vec<f64>,
    pub p_b: Vec<f64>,
    pub zeta: Vec<Vec<f64>>,
}

impl ResourceAllocation {
    pub fn num_users(&self) -> usize {
        self.p_k.len()
    }

    pub fn n_slots(&self) -> usize {
        self.p_u.len()
    }

    /// p̃_k[n] = p_k[n] ζ_k[n].
    pub fn p_tilde(&self) -> Vec<Vec<f64>> {
        self.p_k
            .iter()
            .zip(&self.zeta)
            .map(|(p, z)| p.iter().zip(z).map(|(p, z)| p * z).collect())
            .collect()
    }

    /// Slots where user `k` is scheduled with a nonzero share.
    pub fn scheduled_slots(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.zeta[k]
            .iter()
            .enumerate()
            .filter(|(_, &z)| z > 0.0)
            .map(|(n, _)| n)
    }
}

/// Noise-normalized link gains g = h / N₀ (1/W).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub g_ku: Vec<Vec<f64>>,
    pub g_bu: Vec<f64>,
}

impl LinkGains {
    pub fn compute(config: &ScenarioConfig, layout: &NodeLayout, plan: &FlightPlan) -> Self {
        let scale = config.path_loss_scale();
        let gain = |q: Vec2, node: Vec2| 1.0 / (scale * path_loss_m2(q, node, config.altitude, config.absorption));
        let g_ku = layout
            .ue_positions
            .iter()
            .map(|&qk| plan.q.iter().map(|&q| gain(q, qk)).collect())
            .collect();
        let g_bu = plan.q.iter().map(|&q| gain(q, layout.bs_pos)).collect();
        Self { g_ku, g_bu }
    }
}

/// Relay (end-to-end) and wiretap SNRs of user `k` in slot `n`, assuming it
/// transmits.
pub fn slot_snrs(gains: &LinkGains, alloc: &ResourceAllocation, n: usize, k: usize) -> (f64, f64) {
    let x = alloc.p_k[k][n] * gains.g_ku[k][n];
    let y = alloc.p_u[n] * gains.g_bu[n];
    let z = alloc.p_b[n] * gains.g_bu[n];
    let relay = x * y / (y + z + x + 1.0);
    let wiretap = x / (z + 1.0);
    (relay, wiretap)
}

/// (relay rate, wiretap rate) in bps for user `k` in slot `n`.
pub fn link_rates(gains: &LinkGains, alloc: &ResourceAllocation, bandwidth: f64, n: usize, k: usize) -> (f64, f64) {
    let zeta = alloc.zeta[k][n];
    if zeta == 0.0 {
        return (0.0, 0.0);
    }
    let (relay, wiretap) = slot_snrs(gains, alloc, n, k);
    (
        zeta * bandwidth * (1.0 + relay).log2(),
        zeta * bandwidth * (1.0 + wiretap).log2(),
    )
}

fn asr_impl(gains: &LinkGains, alloc: &ResourceAllocation, bandwidth: f64, k: usize, clip: bool) -> f64 {
    let n_slots = alloc.n_slots();
    let total: f64 = (0..n_slots)
        .map(|n| {
            let (rb, ru) = link_rates(gains, alloc, bandwidth, n, k);
            let diff = 0.5 * (rb - ru);
            if clip {
                diff.max(0.0)
            } else {
                diff
            }
        })
        .sum();
    total / n_slots as f64
}

/// Average secrecy rate (bps) of user `k` with the per-slot positive part.
pub fn average_secrecy_rate(gains: &LinkGains, alloc: &ResourceAllocation, bandwidth: f64, k: usize) -> f64 {
    asr_impl(gains, alloc, bandwidth, k, true)
}

/// Average secrecy rate without the positive part; this is the smooth form
/// the optimizers work with.
pub fn average_secrecy_rate_unclipped(gains: &LinkGains, alloc: &ResourceAllocation, bandwidth: f64, k: usize) -> f64 {
    asr_impl(gains, alloc, bandwidth, k, false)
}

/// Rotary-wing propulsion power (W) at horizontal speed ‖v‖.
pub fn flight_power(v: Vec2, rotor: &RotorConstants) -> f64 {
    let speed2 = norm_sq(v);
    let speed = speed2.sqrt();
    rotor.blade_profile_power + 3.0 * rotor.blade_coefficient() * speed2
        + rotor.parasite_coefficient() * speed2 * speed
        + rotor.induced_power * induced_slack(v, rotor)
}

/// μ = (√(1 + ‖v‖⁴/4ν₀⁴) − ‖v‖²/2ν₀²)^½.
pub fn induced_slack(v: Vec2, rotor: &RotorConstants) -> f64 {
    let nu0_sq = rotor.hover_induced_velocity.powi(2);
    let x = norm_sq(v) / (2.0 * nu0_sq);
    // √(1 + x²) − x = 1 / (√(1 + x²) + x), which stays accurate for large x
    (1.0 / ((1.0 + x * x).sqrt() + x)).sqrt()
}

/// Flight-power bound with the induced term replaced by P_i μ, using the
/// printed blade-profile coefficient 2.
pub fn flight_power_upper_bound(v: Vec2, mu: f64, rotor: &RotorConstants) -> Result<f64, PhysicsError> {
    if !(mu > 0.0) {
        return Err(PhysicsError::NonPositiveSlack(mu));
    }
    let speed2 = norm_sq(v);
    Ok(rotor.blade_profile_power + 2.0 * rotor.blade_coefficient() * speed2
        + rotor.parasite_coefficient() * speed2 * speed2.sqrt()
        + rotor.induced_power * mu)
}

/// Secrecy-energy-efficiency report for one solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeeMetrics {
    /// Per-user average secrecy rate (bps), clipped.
    pub asr: Vec<f64>,
    /// Per-user SEE (bits/Joule).
    pub see: Vec<f64>,
    /// Minimum SEE over users (bits/Joule).
    pub msee: f64,
    /// Minimum ASR over users (bps).
    pub masr: f64,
    /// Average flight power consumption (W).
    pub afpc: f64,
    /// AFPC divided by the flight power budget.
    pub afpcr: f64,
    /// MSEE with ASR divided by B and power divided by P̄_lim; the scale the
    /// optimizers work in.
    pub msee_normalized: f64,
}

impl SeeMetrics {
    pub fn msee_mbits_per_joule(&self) -> f64 {
        self.msee / 1e6
    }
}

pub fn see_metrics(gains: &LinkGains, alloc: &ResourceAllocation, plan: &FlightPlan, config: &ScenarioConfig) -> SeeMetrics {
    let afpc = plan.average_flight_power(&config.rotor);
    let asr: Vec<f64> = (0..alloc.num_users())
        .map(|k| average_secrecy_rate(gains, alloc, config.bandwidth, k))
        .collect();
    let see: Vec<f64> = asr.iter().map(|r| r / afpc).collect();
    let msee = see.iter().copied().fold(f64::INFINITY, f64::min);
    let masr = asr.iter().copied().fold(f64::INFINITY, f64::min);
    let afpcr = afpc / config.flight_power_limit;
    SeeMetrics {
        msee_normalized: masr / config.bandwidth / afpcr,
        asr,
        see,
        msee,
        masr,
        afpc,
        afpcr,
    }
}
