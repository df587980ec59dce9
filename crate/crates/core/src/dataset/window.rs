use serde::{Deserialize, Serialize};

use super::{bin_ssi, compute_ssi, SeverityClass, CHANNELS, WINDOW_LEN};
use crate::drillsim::WellRecord;
use crate::{Error, Result};

/// Per-channel z-score parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
    pub fitted_on: Vec<String>,
}

impl NormalizationStats {
    /// Identity transform (mean 0, std 1).
    pub fn identity() -> Self {
        NormalizationStats {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
            fitted_on: Vec::new(),
        }
    }

    /// Fits pooled per-channel mean and population std over every sample of
    /// `records`. Channels with std below 1e-12 get std = 1.
    pub fn fit(records: &[&WellRecord]) -> Result<Self> {
        let count: usize = records.iter().map(|r| r.len()).sum();
        if count == 0 {
            return Err(Error::InsufficientData(
                "cannot fit normalization on zero samples".into(),
            ));
        }
        let mut mean = [0.0; CHANNELS];
        let mut std = [0.0; CHANNELS];
        for ch in 0..CHANNELS {
            let sum: f64 = records
                .iter()
                .map(|r| r.surface_channels()[ch].iter().sum::<f64>())
                .sum();
            let m = sum / count as f64;
            let ss: f64 = records
                .iter()
                .map(|r| {
                    r.surface_channels()[ch]
                        .iter()
                        .map(|v| (v - m) * (v - m))
                        .sum::<f64>()
                })
                .sum();
            let s = (ss / count as f64).sqrt();
            mean[ch] = m;
            std[ch] = if s > 1e-12 { s } else { 1.0 };
        }
        Ok(NormalizationStats {
            mean,
            std,
            fitted_on: records.iter().map(|r| r.well_id.clone()).collect(),
        })
    }

    pub fn normalize(&self, channel: usize, raw: f64) -> f64 {
        (raw - self.mean[channel]) / self.std[channel]
    }

    pub fn denormalize(&self, channel: usize, z: f64) -> f64 {
        z * self.std[channel] + self.mean[channel]
    }
}

/// One labelled 60 s window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    /// `WINDOW_LEN x CHANNELS`, timestep-major, normalized.
    pub features: Vec<f64>,
    pub ssi: f64,
    pub severity_class: SeverityClass,
    /// Index into the split's source-domain list; `None` for wells without a
    /// domain label (test wells, and validation wells by default).
    pub domain_id: Option<usize>,
    pub well_id: String,
    pub t_start: f64,
}

/// Output of [`window_well`].
#[derive(Clone, Debug, Default)]
pub struct WindowedWell {
    pub samples: Vec<SequenceSample>,
    /// Windows discarded because their SSI is undefined.
    pub dropped: usize,
    /// Set when the record is too short to hold a single window.
    pub warning: Option<String>,
}

/// Cuts `record` into consecutive non-overlapping 60 s windows, normalizes
/// the surface channels with `stats` and labels each window with the SSI of
/// its bit-speed slice.
pub fn window_well(record: &WellRecord, stats: &NormalizationStats) -> WindowedWell {
    let n_windows = record.len() / WINDOW_LEN;
    if n_windows == 0 {
        let warning = format!(
            "well {}: {} s record is shorter than one {WINDOW_LEN} s window",
            record.well_id,
            record.len()
        );
        log::warn!("{warning}");
        return WindowedWell {
            samples: Vec::new(),
            dropped: 0,
            warning: Some(warning),
        };
    }
    let channels = record.surface_channels();
    let mut out = WindowedWell::default();
    for w in 0..n_windows {
        let lo = w * WINDOW_LEN;
        let hi = lo + WINDOW_LEN;
        let ssi = match compute_ssi(&record.bit_speed[lo..hi]) {
            Ok(v) => v,
            Err(_) => {
                out.dropped += 1;
                continue;
            }
        };
        let mut features = Vec::with_capacity(WINDOW_LEN * CHANNELS);
        for t in lo..hi {
            for (ch, series) in channels.iter().enumerate() {
                features.push(stats.normalize(ch, series[t]));
            }
        }
        out.samples.push(SequenceSample {
            features,
            ssi,
            severity_class: bin_ssi(ssi).expect("SSI of a positive-mean window is non-negative"),
            domain_id: None,
            well_id: record.well_id.clone(),
            t_start: record.start_s + lo as f64,
        });
    }
    if out.dropped > 0 {
        log::info!(
            "well {}: dropped {} windows with undefined SSI",
            record.well_id,
            out.dropped
        );
    }
    out
}
