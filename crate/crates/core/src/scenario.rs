//! Experiment scenarios: physical constants, node geometry, discretization,
//! power budgets and algorithm tolerances.
//!
//! A scenario is read from a JSON document whose keys follow the usual
//! notation of the system-parameter table (`absorption_af`, `bandwidth_hz`,
//! ...). Values are SI units, except the noise density (dBm/Hz) and the
//! reference gain (dB). dB values are converted to linear scale once, by the
//! accessor methods; everything downstream works in linear units.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Horizontal coordinate in meters.
pub type Vec2 = [f64; 2];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {invariant} violated ({detail})")]
    Invariant {
        invariant: &'static str,
        detail: String,
    },
}

impl ScenarioError {
    /// The offending field or invariant, when one can be named.
    pub fn field(&self) -> Option<String> {
        match self {
            ScenarioError::Io { .. } => None,
            ScenarioError::Parse(e) => {
                let msg = e.to_string();
                let start = msg.find('`')?;
                let rest = &msg[start + 1..];
                let end = rest.find('`')?;
                Some(rest[..end].to_string())
            }
            ScenarioError::Invariant { invariant, .. } => Some((*invariant).to_string()),
        }
    }
}

/// Rotary-wing propulsion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorConstants {
    /// Blade angular velocity Ω (rad/s).
    pub blade_angular_velocity: f64,
    /// Rotor radius R (m).
    pub rotor_radius: f64,
    /// Air density ρ (kg/m³).
    pub air_density: f64,
    /// Rotor solidity s.
    pub rotor_solidity: f64,
    /// Rotor disk area A (m²).
    pub rotor_disk_area: f64,
    /// Mean rotor induced velocity in hover ν₀ (m/s).
    pub hover_induced_velocity: f64,
    /// Fuselage drag ratio d₀.
    pub fuselage_drag_ratio: f64,
    /// Blade profile power in hover P₀ (W).
    pub blade_profile_power: f64,
    /// Induced power in hover P_i (W).
    pub induced_power: f64,
}

impl Default for RotorConstants {
    fn default() -> Self {
        Self {
            blade_angular_velocity: 300.0,
            rotor_radius: 0.4,
            air_density: 1.225,
            rotor_solidity: 0.05,
            rotor_disk_area: 0.503,
            hover_induced_velocity: 4.03,
            fuselage_drag_ratio: 0.6,
            blade_profile_power: 79.856,
            induced_power: 88.63,
        }
    }
}

impl RotorConstants {
    /// Coefficient of ‖v‖² in the blade-profile term, without the leading
    /// integer factor: P₀ / (Ω² R²).
    pub fn blade_coefficient(&self) -> f64 {
        self.blade_profile_power / (self.blade_angular_velocity * self.rotor_radius).powi(2)
    }

    /// Coefficient of ‖v‖³: ½ d₀ ρ s A.
    pub fn parasite_coefficient(&self) -> f64 {
        0.5 * self.fuselage_drag_ratio * self.air_density * self.rotor_solidity * self.rotor_disk_area
    }

    pub fn hover_power(&self) -> f64 {
        self.blade_profile_power + self.induced_power
    }
}

fn default_tol_outer() -> f64 {
    1e-3
}
fn default_tol_dinkelbach() -> f64 {
    1e-4
}
fn default_tol_sca() -> f64 {
    1e-4
}
fn default_penalty_init() -> f64 {
    1e-3
}
fn default_penalty_growth() -> f64 {
    10.0
}
fn default_penalty_cap() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Noise power spectral density σ² (dBm/Hz), shared by relay and BS.
    #[serde(rename = "noise_psd_dbm_per_hz")]
    pub noise_psd: f64,
    /// Carrier frequency f (Hz). Informational; the reference gain is given
    /// directly by `ref_gain_db`.
    #[serde(rename = "carrier_freq_hz")]
    pub carrier_freq: f64,
    #[serde(rename = "bandwidth_hz")]
    pub bandwidth: f64,
    /// Reference channel power gain at 1 m, β₀ (dB).
    #[serde(rename = "ref_gain_db")]
    pub ref_gain: f64,
    /// Molecular absorption coefficient a_f (1/m).
    #[serde(rename = "absorption_af")]
    pub absorption: f64,
    #[serde(rename = "ue_avg_power_w")]
    pub ue_avg_power: f64,
    #[serde(rename = "ue_peak_power_w")]
    pub ue_peak_power: f64,
    #[serde(rename = "relay_avg_power_w")]
    pub relay_avg_power: f64,
    #[serde(rename = "relay_peak_power_w")]
    pub relay_peak_power: f64,
    #[serde(rename = "jam_avg_power_w")]
    pub jam_avg_power: f64,
    #[serde(rename = "jam_peak_power_w")]
    pub jam_peak_power: f64,
    /// Flight altitude H (m).
    #[serde(rename = "altitude_m")]
    pub altitude: f64,
    /// Initial and final horizontal UAV position q_I (m).
    #[serde(rename = "uav_start_m")]
    pub uav_start: Vec2,
    #[serde(rename = "bs_pos_m")]
    pub bs_pos: Vec2,
    #[serde(rename = "inner_radius_m")]
    pub inner_radius: f64,
    #[serde(rename = "outer_radius_m")]
    pub outer_radius: f64,
    pub num_users: usize,
    /// Average flight power budget P̄_lim (W).
    #[serde(rename = "flight_power_limit_w")]
    pub flight_power_limit: f64,
    #[serde(rename = "vmax_mps")]
    pub vmax: f64,
    /// Bound on the per-slot velocity change ‖v[n+1] − v[n]‖.
    #[serde(rename = "amax_mps2")]
    pub amax: f64,
    #[serde(default)]
    pub rotor: RotorConstants,
    #[serde(rename = "mission_time_s")]
    pub mission_time: f64,
    #[serde(rename = "slot_duration_s")]
    pub slot_duration: f64,
    #[serde(default = "default_tol_outer")]
    pub tol_outer: f64,
    #[serde(default = "default_tol_dinkelbach")]
    pub tol_dinkelbach: f64,
    #[serde(default = "default_tol_sca")]
    pub tol_sca_p1: f64,
    #[serde(default = "default_tol_sca")]
    pub tol_sca_p3: f64,
    #[serde(default = "default_tol_sca")]
    pub tol_sca_p4: f64,
    #[serde(default = "default_penalty_init")]
    pub penalty_init: f64,
    #[serde(default = "default_penalty_growth")]
    pub penalty_growth: f64,
    #[serde(default = "default_penalty_cap")]
    pub penalty_cap: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl ScenarioConfig {
    /// The full system-parameter table: T = 10 s, δ_t = 0.1 s, K = 5.
    pub fn table1() -> Self {
        Self {
            noise_psd: -196.0,
            carrier_freq: 0.8e12,
            bandwidth: 10e9,
            ref_gain: -71.0,
            absorption: 0.005,
            ue_avg_power: 0.1,
            ue_peak_power: 0.4,
            relay_avg_power: 0.4,
            relay_peak_power: 1.6,
            jam_avg_power: 0.5,
            jam_peak_power: 2.0,
            altitude: 10.0,
            uav_start: [25.0, 0.0],
            bs_pos: [0.0, 0.0],
            inner_radius: 20.0,
            outer_radius: 30.0,
            num_users: 5,
            flight_power_limit: 200.0,
            vmax: 20.0,
            amax: 5.0,
            rotor: RotorConstants::default(),
            mission_time: 10.0,
            slot_duration: 0.1,
            tol_outer: default_tol_outer(),
            tol_dinkelbach: default_tol_dinkelbach(),
            tol_sca_p1: default_tol_sca(),
            tol_sca_p3: default_tol_sca(),
            tol_sca_p4: default_tol_sca(),
            penalty_init: default_penalty_init(),
            penalty_growth: default_penalty_growth(),
            penalty_cap: default_penalty_cap(),
            rng_seed: 7,
        }
    }

    /// Small scenario used for tests and quick experiments: the table
    /// constants with N = 20 slots (δ_t = 0.5 s) and K = 3 users.
    pub fn desk() -> Self {
        Self {
            num_users: 3,
            slot_duration: 0.5,
            ..Self::table1()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Number of time slots N = T / δ_t.
    pub fn n_slots(&self) -> usize {
        (self.mission_time / self.slot_duration).round() as usize
    }

    pub fn beta0_linear(&self) -> f64 {
        10f64.powf(self.ref_gain / 10.0)
    }

    /// Noise power N₀ = B σ² in watts.
    pub fn noise_power(&self) -> f64 {
        let psd_w_per_hz = 10f64.powf((self.noise_psd - 30.0) / 10.0);
        self.bandwidth * psd_w_per_hz
    }

    /// N₀ / β₀, the factor that turns d² e^{a_f d} into an inverse
    /// noise-normalized channel gain.
    pub fn path_loss_scale(&self) -> f64 {
        self.noise_power() / self.beta0_linear()
    }

    /// Soft warnings that do not invalidate the scenario.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let step = self.slot_duration * self.vmax;
        if step > self.altitude / 2.0 && step <= self.altitude {
            out.push(format!(
                "slot displacement delta_t*vmax = {step} exceeds H/2 = {}; the per-slot static channel assumption is loose",
                self.altitude / 2.0
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        fn fail(invariant: &'static str, detail: String) -> Result<(), ScenarioError> {
            Err(ScenarioError::Invariant { invariant, detail })
        }
        let positive = [
            ("bandwidth_hz > 0", self.bandwidth),
            ("carrier_freq_hz > 0", self.carrier_freq),
            ("ue_avg_power_w > 0", self.ue_avg_power),
            ("relay_avg_power_w > 0", self.relay_avg_power),
            ("jam_avg_power_w > 0", self.jam_avg_power),
            ("altitude_m > 0", self.altitude),
            ("inner_radius > 0", self.inner_radius),
            ("flight_power_limit_w > 0", self.flight_power_limit),
            ("vmax_mps > 0", self.vmax),
            ("amax_mps2 > 0", self.amax),
            ("mission_time_s > 0", self.mission_time),
            ("slot_duration_s > 0", self.slot_duration),
            ("tol_outer > 0", self.tol_outer),
            ("tol_dinkelbach > 0", self.tol_dinkelbach),
            ("tol_sca_p1 > 0", self.tol_sca_p1),
            ("tol_sca_p3 > 0", self.tol_sca_p3),
            ("tol_sca_p4 > 0", self.tol_sca_p4),
            ("penalty_init > 0", self.penalty_init),
            ("rotor.hover_induced_velocity > 0", self.rotor.hover_induced_velocity),
            ("rotor.blade_angular_velocity > 0", self.rotor.blade_angular_velocity),
            ("rotor.rotor_radius > 0", self.rotor.rotor_radius),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return fail(name, format!("got {value}"));
            }
        }
        if !(self.absorption.is_finite() && self.absorption >= 0.0) {
            return fail("absorption_af >= 0", format!("got {}", self.absorption));
        }
        if !self.noise_psd.is_finite() || !self.ref_gain.is_finite() {
            return fail("finite dB values", "noise_psd or ref_gain is not finite".into());
        }
        if self.num_users == 0 {
            return fail("num_users >= 1", "got 0".into());
        }
        if self.inner_radius >= self.outer_radius {
            return fail(
                "inner_radius < outer_radius",
                format!("R1 = {}, R2 = {}", self.inner_radius, self.outer_radius),
            );
        }
        for (name, avg, peak) in [
            ("ue_peak_power_w >= ue_avg_power_w", self.ue_avg_power, self.ue_peak_power),
            ("relay_peak_power_w >= relay_avg_power_w", self.relay_avg_power, self.relay_peak_power),
            ("jam_peak_power_w >= jam_avg_power_w", self.jam_avg_power, self.jam_peak_power),
        ] {
            if !(peak >= avg) {
                return fail(name, format!("avg = {avg}, peak = {peak}"));
            }
        }
        let ratio = self.mission_time / self.slot_duration;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return fail(
                "mission_time / slot_duration is a positive integer",
                format!("T / delta_t = {ratio}"),
            );
        }
        let step = self.slot_duration * self.vmax;
        if step > self.altitude {
            return fail(
                "slot_duration * vmax <= altitude",
                format!("delta_t*vmax = {step} > H = {}", self.altitude),
            );
        }
        let start_offset = dist(self.uav_start, self.bs_pos);
        if start_offset > self.outer_radius {
            return fail(
                "uav_start within outer_radius of bs_pos",
                format!("|q_I - q_b| = {start_offset} > R2 = {}", self.outer_radius),
            );
        }
        if !(self.penalty_growth > 1.0) || !(self.penalty_cap >= self.penalty_init) {
            return fail(
                "penalty schedule increasing",
                format!(
                    "init = {}, growth = {}, cap = {}",
                    self.penalty_init, self.penalty_growth, self.penalty_cap
                ),
            );
        }
        Ok(())
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config = ScenarioConfig::from_json_str(&text)?;
    for w in config.warnings() {
        log::warn!("{w}");
    }
    Ok(config)
}

pub(crate) fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Ground node positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLayout {
    pub ue_positions: Vec<Vec2>,
    pub bs_pos: Vec2,
}

impl NodeLayout {
    pub fn num_users(&self) -> usize {
        self.ue_positions.len()
    }
}

/// Places K users uniformly by area on the annulus R₁ ≤ r ≤ R₂ around the
/// base station, deterministically from `rng_seed`.
pub fn place_users(config: &ScenarioConfig) -> NodeLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let (r1, r2) = (config.inner_radius, config.outer_radius);
    let ue_positions = (0..config.num_users)
        .map(|_| {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let u: f64 = rng.gen();
            // inverse CDF of the density ∝ r on [R₁, R₂]
            let r = (r1 * r1 + u * (r2 * r2 - r1 * r1)).sqrt().clamp(r1, r2);
            [
                config.bs_pos[0] + r * theta.cos(),
                config.bs_pos[1] + r * theta.sin(),
            ]
        })
        .collect();
    NodeLayout {
        ue_positions,
        bs_pos: config.bs_pos,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_has_100_slots() {
        let c = ScenarioConfig::table1();
        c.validate().unwrap();
        assert_eq!(c.n_slots(), 100);
        assert!(c.warnings().is_empty());
    }

    #[test]
    fn small_slot_displacement_passes_without_warning() {
        let c = ScenarioConfig {
            mission_time: 10.0,
            slot_duration: 0.1,
            vmax: 20.0,
            altitude: 10.0,
            ..ScenarioConfig::table1()
        };
        c.validate().unwrap();
        assert!(c.warnings().is_empty());
    }

    #[test]
    fn desk_scenario_warns_but_validates() {
        let c = ScenarioConfig::desk();
        c.validate().unwrap();
        assert_eq!(c.n_slots(), 20);
        assert_eq!(c.warnings().len(), 1);
    }

    #[test]
    fn slot_displacement_above_altitude_is_rejected() {
        let c = ScenarioConfig {
            slot_duration: 1.0,
            ..ScenarioConfig::table1()
        };
        let err = c.validate().unwrap_err();
        assert_eq!(err.field().as_deref(), Some("slot_duration * vmax <= altitude"));
    }

    #[test]
    fn inverted_radii_name_the_invariant() {
        let c = ScenarioConfig {
            inner_radius: 30.0,
            outer_radius: 20.0,
            ..ScenarioConfig::table1()
        };
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("inner_radius < outer_radius"));
    }

    #[test]
    fn non_integer_slot_count_is_rejected() {
        let c = ScenarioConfig {
            slot_duration: 0.3,
            ..ScenarioConfig::table1()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn peak_below_average_is_rejected() {
        let c = ScenarioConfig {
            jam_peak_power: 0.1,
            ..ScenarioConfig::table1()
        };
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("jam_peak_power_w >= jam_avg_power_w"));
    }

    #[test]
    fn start_outside_region_is_rejected() {
        let c = ScenarioConfig {
            uav_start: [40.0, 0.0],
            ..ScenarioConfig::table1()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_field_is_named() {
        let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::table1().to_json_string()).unwrap();
        v.as_object_mut().unwrap().remove("inner_radius_m");
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert_eq!(err.field().as_deref(), Some("inner_radius_m"));
    }

    #[test]
    fn derived_quantities() {
        let c = ScenarioConfig::table1();
        assert!((c.beta0_linear() - 10f64.powf(-7.1)).abs() < 1e-20);
        // -196 dBm/Hz over 10 GHz
        let expected = 1e10 * 10f64.powf(-22.6);
        assert!((c.noise_power() / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn placement_is_deterministic_and_inside_annulus() {
        let c = ScenarioConfig::table1();
        let a = place_users(&c);
        let b = place_users(&c);
        assert_eq!(a, b);
        assert_eq!(a.num_users(), 5);
        for p in &a.ue_positions {
            let r = dist(*p, c.bs_pos);
            assert!((20.0..=30.0).contains(&r), "radius {r}");
        }
    }

    #[test]
    fn degenerate_annulus_places_on_the_ring() {
        let eps = 1e-9;
        let c = ScenarioConfig {
            num_users: 1,
            inner_radius: 30.0 - eps,
            outer_radius: 30.0,
            uav_start: [25.0, 0.0],
            ..ScenarioConfig::table1()
        };
        let l = place_users(&c);
        let r = dist(l.ue_positions[0], c.bs_pos);
        assert!((r - c.inner_radius).abs() <= eps);
    }

    proptest::proptest! {
        #[test]
        fn json_round_trip(seed in 0u64..1000, k in 1usize..8, af in 0.0f64..0.05) {
            let c = ScenarioConfig { rng_seed: seed, num_users: k, absorption: af, ..ScenarioConfig::table1() };
            let back = ScenarioConfig::from_json_str(&c.to_json_string()).unwrap();
            proptest::prop_assert_eq!(back, c);
        }

        #[test]
        fn placed_users_respect_annulus(seed in 0u64..10_000, r1 in 1.0f64..50.0, width in 1e-6f64..50.0) {
            let c = ScenarioConfig {
                rng_seed: seed,
                inner_radius: r1,
                outer_radius: r1 + width,
                num_users: 4,
                uav_start: [0.0, 0.0],
                ..ScenarioConfig::table1()
            };
            for p in place_users(&c).ue_positions {
                let r = dist(p, c.bs_pos);
                proptest::prop_assert!(r >= c.inner_radius - 1e-9 && r <= c.outer_radius + 1e-9);
            }
        }
    }
}
