use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{WellRecord, WellSpec};
use crate::{Error, Result};

/// Internal integration rate of the torsional model.
pub const INTERNAL_RATE_HZ: usize = 50;

/// WOB at which `static_friction_torque` / `kinetic_friction_torque` are quoted.
pub const WOB_REFERENCE_KN: f64 = 100.0;

/// m/h of penetration per (kN · rad/s).
const ROP_COEFFICIENT: f64 = 0.02;
/// Time constant of the bit-speed smoothing that drives ROP, seconds.
const ROP_SMOOTHING_S: f64 = 30.0;

const PHYSICS_STREAM: u64 = 0;
const SENSOR_STREAM: u64 = 1;

/// Internal-rate trace of the bit, mostly for tests of the stick logic.
#[derive(Clone, Debug, Default)]
pub struct InternalTrace {
    pub bit_speed: Vec<f64>,
    pub stuck: Vec<bool>,
}

/// Simulates `spec` and returns its 1 Hz record.
pub fn simulate_well(spec: &WellSpec) -> Result<WellRecord> {
    simulate(spec, false).map(|(record, _)| record)
}

/// Like [`simulate_well`], additionally returning the internal-rate bit trace.
pub fn simulate_well_traced(spec: &WellSpec) -> Result<(WellRecord, InternalTrace)> {
    simulate(spec, true)
}

struct Friction {
    static_torque: f64,
    kinetic_torque: f64,
    weakening: f64,
}

impl Friction {
    /// Resisting torque for a slipping bit at speed `omega` (> 0), WOB ratio `load`.
    fn slipping(&self, omega: f64, load: f64) -> f64 {
        load * (self.kinetic_torque
            + (self.static_torque - self.kinetic_torque) * (-self.weakening * omega).exp())
    }
}

fn simulate(spec: &WellSpec, keep_trace: bool) -> Result<(WellRecord, InternalTrace)> {
    spec.validate()?;

    let seconds = spec.duration_s.floor() as usize;
    let dt = 1.0 / INTERNAL_RATE_HZ as f64;
    let k = spec.string_stiffness;
    let c = spec.string_damping;
    let inertia = spec.bit_inertia;
    let friction = Friction {
        static_torque: spec.static_friction_torque,
        kinetic_torque: spec.kinetic_friction_torque,
        weakening: spec.velocity_weakening_rate,
    };

    let mut physics_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    physics_rng.set_stream(PHYSICS_STREAM);

    // Start in the steady state for the initial operating point.
    let omega0 = spec.surface_speed_profile.value_at(0.0);
    let load0 = spec.wob_profile.value_at(0.0) / WOB_REFERENCE_KN;
    let mut omega = omega0.max(0.0);
    let mut twist = if omega > 0.0 {
        friction.slipping(omega, load0) / k
    } else {
        0.0
    };

    let mut bit_speed = Vec::with_capacity(seconds);
    let mut string_torque = Vec::with_capacity(seconds);
    let mut trace = InternalTrace::default();
    if keep_trace {
        trace.bit_speed.reserve(seconds * INTERNAL_RATE_HZ);
        trace.stuck.reserve(seconds * INTERNAL_RATE_HZ);
    }

    for second in 0..seconds {
        let mut omega_sum = 0.0;
        let mut torque_sum = 0.0;
        for sub in 0..INTERNAL_RATE_HZ {
            let step = second * INTERNAL_RATE_HZ + sub;
            let t = step as f64 * dt;
            let surface_speed = spec.surface_speed_profile.value_at(t);
            let load = (spec.wob_profile.value_at(t) / WOB_REFERENCE_KN).max(0.0);

            let torque = k * twist + c * (surface_speed - omega);
            let fluctuation = if spec.bit_torque_fluctuation > 0.0 {
                let z: f64 = physics_rng.sample(StandardNormal);
                spec.bit_torque_fluctuation * load * z
            } else {
                0.0
            };
            let drive = torque + fluctuation;

            let stuck;
            if omega == 0.0 {
                let threshold = load * friction.static_torque;
                if drive > threshold {
                    omega = dt * (drive - threshold) / inertia;
                    stuck = false;
                } else {
                    stuck = true;
                }
            } else {
                omega += dt * (drive - friction.slipping(omega, load)) / inertia;
                stuck = false;
            }
            if omega <= 0.0 {
                omega = 0.0;
            }
            twist += dt * (surface_speed - omega);

            if !omega.is_finite() || !twist.is_finite() {
                return Err(Error::SimulationDiverged { step, time_s: t });
            }
            if keep_trace {
                trace.bit_speed.push(omega);
                trace.stuck.push(stuck);
            }
            omega_sum += omega;
            torque_sum += torque;
        }
        bit_speed.push(omega_sum / INTERNAL_RATE_HZ as f64);
        string_torque.push(torque_sum / INTERNAL_RATE_HZ as f64);
    }

    let mut sensor_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sensor_rng.set_stream(SENSOR_STREAM);
    let mut noise = |std: f64| -> f64 {
        let z: f64 = sensor_rng.sample(StandardNormal);
        std * z
    };

    let ns = &spec.noise_std;
    let mut surface_torque = Vec::with_capacity(seconds);
    let mut surface_wob = Vec::with_capacity(seconds);
    let mut rop = Vec::with_capacity(seconds);
    let mut flow_rate = Vec::with_capacity(seconds);
    let mut total_rotation_speed = Vec::with_capacity(seconds);
    let smoothing = 1.0 / ROP_SMOOTHING_S;
    let mut smoothed_speed = bit_speed.first().copied().unwrap_or(0.0);
    for second in 0..seconds {
        let t = second as f64;
        let wob = spec.wob_profile.value_at(t);
        smoothed_speed += smoothing * (bit_speed[second] - smoothed_speed);
        surface_torque
            .push(spec.torque_gain * string_torque[second] + spec.torque_offset + noise(ns.torque));
        surface_wob.push(wob + noise(ns.wob));
        rop.push(ROP_COEFFICIENT * wob.max(0.0) * smoothed_speed + noise(ns.rop));
        flow_rate.push(spec.flow_profile.value_at(t) + noise(ns.flow));
        total_rotation_speed.push(spec.surface_speed_profile.value_at(t) + noise(ns.rotation));
    }

    let record = WellRecord {
        well_id: spec.well_id.clone(),
        field_id: spec.field_id.clone(),
        sample_rate_hz: 1.0,
        start_s: 0.0,
        surface_torque,
        surface_wob,
        rop,
        flow_rate,
        total_rotation_speed,
        bit_speed,
    };
    Ok((record, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drillsim::{ChannelNoise, Schedule, Trajectory};

    pub(crate) fn base_spec() -> WellSpec {
        WellSpec {
            well_id: "w".into(),
            field_id: "f".into(),
            trajectory: Trajectory::Vertical,
            duration_s: 600.0,
            string_stiffness: 470.0,
            string_damping: 100.0,
            bit_inertia: 400.0,
            static_friction_torque: 12_000.0,
            kinetic_friction_torque: 8_000.0,
            velocity_weakening_rate: 0.5,
            bit_torque_fluctuation: 0.0,
            surface_speed_profile: Schedule::constant(6.0),
            wob_profile: Schedule::constant(140.0),
            flow_profile: Schedule::constant(2000.0),
            torque_gain: 1.0,
            torque_offset: 0.0,
            noise_std: ChannelNoise::default(),
            seed: 7,
        }
    }

    fn window_ssi(w: &[f64]) -> f64 {
        let max = w.iter().cloned().fold(f64::MIN, f64::max);
        let min = w.iter().cloned().fold(f64::MAX, f64::min);
        (max - min) / (w.iter().sum::<f64>() / w.len() as f64)
    }

    #[test]
    fn no_weakening_converges_to_surface_speed() {
        let mut spec = base_spec();
        spec.velocity_weakening_rate = 0.0;
        spec.kinetic_friction_torque = spec.static_friction_torque;
        let rec = simulate_well(&spec).unwrap();
        assert_eq!(rec.len(), 600);
        for w in rec.bit_speed.chunks(60).skip(1) {
            assert!(window_ssi(w) < 1e-6, "ssi {}", window_ssi(w));
        }
        assert!((rec.bit_speed[599] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn strong_weakening_gives_stick_slip() {
        let mut spec = base_spec();
        spec.static_friction_torque = 12_000.0;
        spec.kinetic_friction_torque = 4_000.0;
        spec.bit_torque_fluctuation = 400.0;
        let rec = simulate_well(&spec).unwrap();
        let steady = &rec.bit_speed[300..];
        let min = steady.iter().cloned().fold(f64::MAX, f64::min);
        let max = steady.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(min, 0.0);
        assert!(max > 6.0, "max bit speed {max}");
    }

    #[test]
    fn stuck_means_exactly_zero() {
        let mut spec = base_spec();
        spec.kinetic_friction_torque = 4_000.0;
        spec.bit_torque_fluctuation = 400.0;
        let (_, trace) = simulate_well_traced(&spec).unwrap();
        assert!(trace.stuck.iter().any(|s| *s));
        for (w, s) in trace.bit_speed.iter().zip(&trace.stuck) {
            if *s {
                assert_eq!(*w, 0.0);
            }
        }
    }

    #[test]
    fn frictionless_undamped_mean_speed_matches_surface() {
        let mut spec = base_spec();
        spec.static_friction_torque = 1e-9;
        spec.kinetic_friction_torque = 1e-9;
        spec.string_damping = 0.0;
        spec.duration_s = 3600.0;
        spec.surface_speed_profile = Schedule::from_steps(&[(0.0, 8.0), (1200.0, 11.0)]);
        let rec = simulate_well(&spec).unwrap();
        let mean_bit = rec.bit_speed.iter().sum::<f64>() / rec.len() as f64;
        let mean_surface = rec.total_rotation_speed.iter().sum::<f64>() / rec.len() as f64;
        assert!(((mean_bit - mean_surface) / mean_surface).abs() < 0.01);
    }

    #[test]
    fn deterministic_and_length_is_floor_duration() {
        let mut spec = base_spec();
        spec.duration_s = 250.7;
        spec.bit_torque_fluctuation = 800.0;
        spec.noise_std = ChannelNoise { torque: 50.0, wob: 1.0, rop: 0.5, flow: 10.0, rotation: 0.05 };
        let a = simulate_well(&spec).unwrap();
        let b = simulate_well(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 250);
        a.validate().unwrap();
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = base_spec();
        spec.kinetic_friction_torque = 20_000.0;
        assert!(matches!(simulate_well(&spec), Err(Error::InvalidSpec { .. })));
        let mut spec = base_spec();
        spec.duration_s = 0.0;
        assert!(simulate_well(&spec).is_err());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let mut spec = base_spec();
        spec.surface_speed_profile = Schedule::from_steps(&[(0.0, 6.0), (10.0, 1e308)]);
        match simulate_well(&spec) {
            Err(Error::SimulationDiverged { step, .. }) => assert!(step < 600 * INTERNAL_RATE_HZ),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
