//! Failure modes that break the surface/downhole relationship.

use super::WellRecord;
use crate::{Error, Result};

/// Width of the centred rolling mean that separates the slow torque level from
/// its oscillatory component, seconds.
pub const ATTENUATION_WINDOW_S: usize = 31;

/// Delays the downhole stream by `offset_s` seconds relative to the surface
/// channels (negative values make it lead). The result covers the common
/// support of both streams; at index `i` the surface sample taken at
/// `start_s + i` is paired with the bit speed recorded `offset_s` earlier.
pub fn inject_jetlag(record: &WellRecord, offset_s: i64) -> Result<WellRecord> {
    let n = record.len();
    let shift = offset_s.unsigned_abs() as usize;
    if shift >= n {
        return Err(Error::EmptyOverlap { offset_s, len: n });
    }
    let keep = n - shift;
    Ok(if offset_s >= 0 {
        record.slice(shift..n, 0..keep)
    } else {
        record.slice(0..keep, shift..n)
    })
}

/// Scales the oscillatory part of the surface torque (its deviation from a
/// centred rolling mean) by `gain` for every sample at or after
/// `horizontal_start_s`. The downhole channel is untouched.
pub fn inject_attenuation(
    record: &WellRecord,
    horizontal_start_s: f64,
    gain: f64,
) -> Result<WellRecord> {
    if !(0.0..=1.0).contains(&gain) {
        return Err(Error::Domain(format!("attenuation gain {gain} outside [0, 1]")));
    }
    let level = rolling_mean(&record.surface_torque, ATTENUATION_WINDOW_S);
    let mut out = record.clone();
    for (i, torque) in out.surface_torque.iter_mut().enumerate() {
        let t = record.start_s + i as f64;
        if t >= horizontal_start_s {
            *torque = level[i] + gain * (*torque - level[i]);
        }
    }
    Ok(out)
}

/// Adds `magnitude` to the bit speed at second `t_s` (relative to the record
/// start), leaving the surface channels alone.
pub fn inject_label_spike(record: &WellRecord, t_s: usize, magnitude: f64) -> Result<WellRecord> {
    if t_s >= record.len() {
        return Err(Error::Domain(format!(
            "spike time {t_s} s outside record of {} s",
            record.len()
        )));
    }
    let mut out = record.clone();
    out.bit_speed[t_s] += magnitude;
    Ok(out)
}

/// Centred moving average, truncated at the edges.
pub(crate) fn rolling_mean(series: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = series.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in series {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}
