//! Evaluation: MSE, DTW, normalized DTW, confusion matrices and
//! severe-event recall.
//!
//! Normalized DTW is computed per well on the chronological series of
//! sequence-level SSI values (one point per 60 s window), divided by the
//! number of windows of that well.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{bin_prediction, SequenceSample, SeverityClass};
use crate::{Error, Result};

pub fn mse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::Input(format!("mse over {} vs {} values", truth.len(), pred.len())));
    }
    Ok(truth.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth.len() as f64)
}

/// Dynamic time warping with local cost `|a_i - b_j|`, no window constraint.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("dtw of an empty series".into()));
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, ai) in a.iter().enumerate() {
        for j in 0..m {
            let cost = (ai - b[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = prev[j];
                if j > 0 {
                    best = best.min(cur[j - 1]).min(prev[j - 1]);
                }
                best
            };
            cur[j] = best + cost;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// `dtw(truth, pred) / len`, for one well's chronological series.
pub fn normalized_dtw(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Input(format!(
            "normalized DTW needs equal lengths, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Input("normalized DTW of an empty well".into()));
    }
    Ok(dtw(truth, pred)? / truth.len() as f64)
}

/// `(base - other) / base · 100`: positive when `other` is lower.
pub fn improvement_pct(base: f64, other: f64) -> f64 {
    (base - other) / base * 100.0
}

/// Counts indexed `[true class][predicted class]`, classes 1..=4 at 0..=3.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 4]; 4],
    /// Rows divided by their sums; all-zero rows stay zero.
    pub rates: [[f64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn row_sum(&self, class: SeverityClass) -> usize {
        self.counts[class.index()].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for r in 0..4 {
            for c in 0..4 {
                self.counts[r][c] += other.counts[r][c];
            }
        }
        self.refresh_rates();
    }

    fn refresh_rates(&mut self) {
        for r in 0..4 {
            let sum: usize = self.counts[r].iter().sum();
            for c in 0..4 {
                self.rates[r][c] = if sum == 0 { 0.0 } else { self.counts[r][c] as f64 / sum as f64 };
            }
        }
    }
}

pub fn confusion_matrix(truth: &[SeverityClass], pred: &[SeverityClass]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Input(format!("{} true vs {} predicted classes", truth.len(), pred.len())));
    }
    let mut m = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(pred) {
        m.counts[t.index()][p.index()] += 1;
    }
    m.refresh_rates();
    Ok(m)
}

/// Fraction of true class-4 samples predicted as class 4; `None` without
/// any true class-4 sample.
pub fn severe_recall(truth: &[SeverityClass], pred: &[SeverityClass]) -> Option<f64> {
    let severe: Vec<bool> = truth
        .iter()
        .zip(pred)
        .filter(|(t, _)| **t == SeverityClass::Severe)
        .map(|(_, p)| *p == SeverityClass::Severe)
        .collect();
    if severe.is_empty() {
        return None;
    }
    Some(severe.iter().filter(|hit| **hit).count() as f64 / severe.len() as f64)
}

/// One evaluated sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub well: String,
    pub t_start: f64,
    pub true_ssi: f64,
    pub pred_ssi: f64,
    pub true_class: u8,
    pub pred_class: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellEval {
    pub well: String,
    pub sequences: usize,
    pub mse: f64,
    pub ndtw: f64,
    pub confusion: ConfusionMatrix,
    pub severe_recall: Option<f64>,
}

/// Per-well metrics. Samples of each well must appear in `t_start` order.
pub fn evaluate_predictions(samples: &[SequenceSample], preds: &[f64]) -> Result<(Vec<WellEval>, Vec<PredictionRow>)> {
    if samples.len() != preds.len() {
        return Err(Error::Input(format!("{} samples vs {} predictions", samples.len(), preds.len())));
    }
    let mut by_well: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_well.entry(s.well_id.as_str()).or_default().push(i);
    }
    let mut evals = Vec::with_capacity(by_well.len());
    let mut rows = Vec::with_capacity(samples.len());
    for (well, idx) in by_well {
        if idx.windows(2).any(|w| samples[w[1]].t_start <= samples[w[0]].t_start) {
            return Err(Error::Input(format!("samples of well {well} are not in chronological order")));
        }
        let truth: Vec<f64> = idx.iter().map(|&i| samples[i].ssi).collect();
        let pred: Vec<f64> = idx.iter().map(|&i| preds[i]).collect();
        let true_classes: Vec<SeverityClass> = idx.iter().map(|&i| samples[i].severity_class).collect();
        let pred_classes: Vec<SeverityClass> = pred.iter().map(|&p| bin_prediction(p)).collect();
        for (k, &i) in idx.iter().enumerate() {
            rows.push(PredictionRow {
                well: well.to_string(),
                t_start: samples[i].t_start,
                true_ssi: truth[k],
                pred_ssi: pred[k],
                true_class: true_classes[k].number(),
                pred_class: pred_classes[k].number(),
            });
        }
        evals.push(WellEval {
            well: well.to_string(),
            sequences: idx.len(),
            mse: mse(&truth, &pred)?,
            ndtw: normalized_dtw(&truth, &pred)?,
            confusion: confusion_matrix(&true_classes, &pred_classes)?,
            severe_recall: severe_recall(&true_classes, &pred_classes),
        });
    }
    Ok((evals, rows))
}

pub fn write_predictions_csv(rows: &[PredictionRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use SeverityClass::*;

    #[test]
    fn dtw_small_cases() {
        assert_eq!(dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(dtw(&[2.5], &[-1.0]).unwrap(), 3.5);
        assert_eq!(dtw(&[0.0, 1.0], &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(dtw(&[], &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_offset_normalizes_to_offset() {
        let truth = vec![0.4; 25];
        let pred: Vec<f64> = truth.iter().map(|v| v + 0.25).collect();
        assert!((normalized_dtw(&truth, &pred).unwrap() - 0.25).abs() < 1e-12);
        assert!(normalized_dtw(&truth, &pred[1..]).is_err());
    }

    #[test]
    fn improvement_values() {
        assert!((improvement_pct(0.136, 0.122) - 10.294117647).abs() < 1e-6);
        assert_eq!(improvement_pct(0.2, 0.2), 0.0);
    }

    #[test]
    fn confusion_and_recall() {
        let truth = [NoStickSlip, Low, Moderate, Severe];
        let m = confusion_matrix(&truth, &truth).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(m.counts[r][c], usize::from(r == c));
            }
        }
        let m = confusion_matrix(&[Severe], &[Moderate]).unwrap();
        assert_eq!(m.counts[3][2], 1);
        assert_eq!(m.total(), 1);
        assert_eq!(severe_recall(&[NoStickSlip, Low], &[Severe, Severe]), None);
        assert_eq!(severe_recall(&[Severe, Severe], &[Severe, Severe]), Some(1.0));
        assert_eq!(severe_recall(&[Severe, Severe], &[Severe, Low]), Some(0.5));
    }
}
