//! Synthetic multi-well drilling data.
//!
//! Each well is a two-degree-of-freedom torsional system: the top drive
//! imposes the surface rotation speed, the bit inertia is coupled to it
//! through a torsional spring and damper, and the rock resists with a
//! velocity-weakening friction torque. Wells differ in mechanics,
//! operating profiles and in how their surface torque sensor is scaled,
//! which makes each one a distinct domain.

mod inject;
mod io;
mod simulate;

pub use inject::{inject_attenuation, inject_jetlag, inject_label_spike, ATTENUATION_WINDOW_S};
pub use io::{read_record_csv, read_spec_json, write_record_csv, write_spec_json, RECORD_CSV_HEADER};
pub use simulate::{simulate_well, simulate_well_traced, InternalTrace, INTERNAL_RATE_HZ, WOB_REFERENCE_KN};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trajectory {
    Vertical,
    Lateral,
}

/// One step of a piecewise-constant schedule: `value` holds from `start_s`
/// until the next step starts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub start_s: f64,
    pub value: f64,
}

/// Piecewise-constant schedule. The first step is extended back to t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<Step>);

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule(vec![Step { start_s: 0.0, value }])
    }

    pub fn from_steps(steps: &[(f64, f64)]) -> Self {
        Schedule(
            steps
                .iter()
                .map(|&(start_s, value)| Step { start_s, value })
                .collect(),
        )
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let mut value = self.0[0].value;
        for step in &self.0 {
            if step.start_s <= t {
                value = step.value;
            } else {
                break;
            }
        }
        value
    }

    fn validate(&self, what: &str, well_id: &str) -> Result<()> {
        let invalid = |reason: String| Error::InvalidSpec {
            well_id: well_id.to_string(),
            reason,
        };
        if self.0.is_empty() {
            return Err(invalid(format!("{what} schedule is empty")));
        }
        for pair in self.0.windows(2) {
            if pair[1].start_s < pair[0].start_s {
                return Err(invalid(format!("{what} schedule is not sorted by start_s")));
            }
        }
        if self.0.iter().any(|s| !s.value.is_finite() || !s.start_s.is_finite()) {
            return Err(invalid(format!("{what} schedule has non-finite entries")));
        }
        Ok(())
    }
}

/// Measurement noise standard deviation per surface channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelNoise {
    /// N·m
    pub torque: f64,
    /// kN
    pub wob: f64,
    /// m/h
    pub rop: f64,
    /// L/min
    pub flow: f64,
    /// rad/s
    pub rotation: f64,
}

/// Mechanical and operational description of one simulated well.
///
/// Friction torques are specified at [`WOB_REFERENCE_KN`] and scale
/// linearly with the weight on bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    pub well_id: String,
    pub field_id: String,
    pub trajectory: Trajectory,
    pub duration_s: f64,
    /// N·m/rad
    pub string_stiffness: f64,
    /// N·m·s/rad
    pub string_damping: f64,
    /// kg·m²
    pub bit_inertia: f64,
    /// N·m
    pub static_friction_torque: f64,
    /// N·m
    pub kinetic_friction_torque: f64,
    /// 1/(rad/s)
    pub velocity_weakening_rate: f64,
    /// Standard deviation of the formation torque fluctuation applied at each
    /// internal step, N·m at the reference WOB.
    #[serde(default)]
    pub bit_torque_fluctuation: f64,
    /// rad/s
    pub surface_speed_profile: Schedule,
    /// kN
    pub wob_profile: Schedule,
    /// L/min
    pub flow_profile: Schedule,
    pub torque_gain: f64,
    /// N·m
    pub torque_offset: f64,
    pub noise_std: ChannelNoise,
    pub seed: u64,
}

impl WellSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidSpec {
            well_id: self.well_id.clone(),
            reason: reason.to_string(),
        };
        let scalars = [
            self.duration_s,
            self.string_stiffness,
            self.string_damping,
            self.bit_inertia,
            self.static_friction_torque,
            self.kinetic_friction_torque,
            self.velocity_weakening_rate,
            self.bit_torque_fluctuation,
            self.torque_gain,
            self.torque_offset,
            self.noise_std.torque,
            self.noise_std.wob,
            self.noise_std.rop,
            self.noise_std.flow,
            self.noise_std.rotation,
        ];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite parameter"));
        }
        if self.duration_s <= 0.0 {
            return Err(invalid("duration_s must be positive"));
        }
        if self.kinetic_friction_torque <= 0.0 {
            return Err(invalid("kinetic_friction_torque must be positive"));
        }
        if self.static_friction_torque < self.kinetic_friction_torque {
            return Err(invalid("static_friction_torque must be >= kinetic_friction_torque"));
        }
        if self.string_stiffness <= 0.0 {
            return Err(invalid("string_stiffness must be positive"));
        }
        if self.bit_inertia <= 0.0 {
            return Err(invalid("bit_inertia must be positive"));
        }
        if self.string_damping < 0.0 || self.velocity_weakening_rate < 0.0 {
            return Err(invalid("damping and weakening rate must be non-negative"));
        }
        if self.bit_torque_fluctuation < 0.0 {
            return Err(invalid("bit_torque_fluctuation must be non-negative"));
        }
        if self.torque_gain <= 0.0 {
            return Err(invalid("torque_gain must be positive"));
        }
        let noise = &self.noise_std;
        if [noise.torque, noise.wob, noise.rop, noise.flow, noise.rotation]
            .iter()
            .any(|v| *v < 0.0)
        {
            return Err(invalid("noise_std entries must be non-negative"));
        }
        self.surface_speed_profile
            .validate("surface_speed", &self.well_id)?;
        self.wob_profile.validate("wob", &self.well_id)?;
        self.flow_profile.validate("flow", &self.well_id)?;
        Ok(())
    }
}

/// Synchronized 1 Hz channels of one well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellRecord {
    pub well_id: String,
    pub field_id: String,
    pub sample_rate_hz: f64,
    /// Time of the first sample, seconds.
    pub start_s: f64,
    /// N·m
    pub surface_torque: Vec<f64>,
    /// kN
    pub surface_wob: Vec<f64>,
    /// m/h
    pub rop: Vec<f64>,
    /// L/min
    pub flow_rate: Vec<f64>,
    /// rad/s
    pub total_rotation_speed: Vec<f64>,
    /// Downhole bit speed, rad/s. Label source only.
    pub bit_speed: Vec<f64>,
}

impl WellRecord {
    pub fn len(&self) -> usize {
        self.bit_speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bit_speed.is_empty()
    }

    /// Surface channels in model input order.
    pub fn surface_channels(&self) -> [&[f64]; 5] {
        [
            &self.surface_torque,
            &self.surface_wob,
            &self.rop,
            &self.flow_rate,
            &self.total_rotation_speed,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let channels = self.surface_channels();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::Input(format!(
                "well {}: channels have unequal lengths",
                self.well_id
            )));
        }
        if self.sample_rate_hz != 1.0 {
            return Err(Error::Input(format!(
                "well {}: sample rate must be 1 Hz, got {}",
                self.well_id, self.sample_rate_hz
            )));
        }
        let all_finite = channels
            .iter()
            .chain(std::iter::once(&self.bit_speed.as_slice()))
            .all(|c| c.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::Input(format!(
                "well {}: non-finite sample",
                self.well_id
            )));
        }
        Ok(())
    }

    pub(crate) fn slice(&self, surface: std::ops::Range<usize>, bit: std::ops::Range<usize>) -> Self {
        debug_assert_eq!(surface.len(), bit.len());
        WellRecord {
            well_id: self.well_id.clone(),
            field_id: self.field_id.clone(),
            sample_rate_hz: self.sample_rate_hz,
            start_s: self.start_s + surface.start as f64,
            surface_torque: self.surface_torque[surface.clone()].to_vec(),
            surface_wob: self.surface_wob[surface.clone()].to_vec(),
            rop: self.rop[surface.clone()].to_vec(),
            flow_rate: self.flow_rate[surface.clone()].to_vec(),
            total_rotation_speed: self.total_rotation_speed[surface].to_vec(),
            bit_speed: self.bit_speed[bit].to_vec(),
        }
    }
}
