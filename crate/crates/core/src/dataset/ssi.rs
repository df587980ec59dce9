use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Windows whose mean bit speed is at or below this are not labelled.
pub const SSI_MEAN_TOLERANCE: f64 = 1e-9;

/// Stick-slip index of a bit-speed window: `(max - min) / mean`.
pub fn compute_ssi(bit_speed: &[f64]) -> Result<f64> {
    if bit_speed.is_empty() {
        return Err(Error::Input("empty bit-speed window".into()));
    }
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    for &v in bit_speed {
        max = max.max(v);
        min = min.min(v);
        sum += v;
    }
    let mean = sum / bit_speed.len() as f64;
    if !(mean > SSI_MEAN_TOLERANCE) {
        return Err(Error::UndefinedSsi { mean });
    }
    Ok((max - min) / mean)
}

/// Severity class of a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum SeverityClass {
    /// SSI in [0, 0.3)
    NoStickSlip = 1,
    /// SSI in [0.3, 0.5)
    Low = 2,
    /// SSI in [0.5, 0.7)
    Moderate = 3,
    /// SSI >= 0.7
    Severe = 4,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 4] = [
        SeverityClass::NoStickSlip,
        SeverityClass::Low,
        SeverityClass::Moderate,
        SeverityClass::Severe,
    ];

    /// 1-based class number.
    pub fn number(self) -> u8 {
        self as u8
    }

    /// 0-based index for 4-wide tables.
    pub fn index(self) -> usize {
        self as usize - 1
    }
}

impl From<SeverityClass> for u8 {
    fn from(c: SeverityClass) -> u8 {
        c.number()
    }
}

impl TryFrom<u8> for SeverityClass {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(SeverityClass::NoStickSlip),
            2 => Ok(SeverityClass::Low),
            3 => Ok(SeverityClass::Moderate),
            4 => Ok(SeverityClass::Severe),
            other => Err(format!("severity class {other} outside 1..=4")),
        }
    }
}

/// Half-open bins `[0,0.3) [0.3,0.5) [0.5,0.7) [0.7,inf)`.
pub fn bin_ssi(ssi: f64) -> Result<SeverityClass> {
    if ssi.is_nan() || ssi < 0.0 {
        return Err(Error::Domain(format!("SSI must be non-negative, got {ssi}")));
    }
    Ok(if ssi < 0.3 {
        SeverityClass::NoStickSlip
    } else if ssi < 0.5 {
        SeverityClass::Low
    } else if ssi < 0.7 {
        SeverityClass::Moderate
    } else {
        SeverityClass::Severe
    })
}

/// Bins a model prediction; negative predictions fall in the first class.
pub fn bin_prediction(pred: f64) -> SeverityClass {
    bin_ssi(pred.max(0.0)).unwrap_or(SeverityClass::NoStickSlip)
}
