use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{train, LogRow, TrainConfig};
use crate::dataset::{bin_prediction, DatasetSplit, SeverityClass};
use crate::metrics::{evaluate_predictions, improvement_pct, severe_recall, ConfusionMatrix};
use crate::models::{ModelBundle, ModelKind};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellSummary {
    pub well: String,
    pub sequences: usize,
    pub ndtw_per_seed: Vec<f64>,
    pub ndtw_mean: f64,
    pub mse_mean: f64,
    /// Summed over seeds.
    pub confusion: ConfusionMatrix,
    pub severe_recall_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: ModelKind,
    pub wells: Vec<WellSummary>,
    /// Mean over wells of the seed-averaged normalized DTW.
    pub mean_ndtw: f64,
    /// Class-4 recall over all test sequences, per seed.
    pub severe_recall_per_seed: Vec<Option<f64>>,
    pub severe_recall_mean: Option<f64>,
}

/// `(versus - kind) / versus · 100` per well and averaged over wells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub kind: ModelKind,
    pub versus: ModelKind,
    pub per_well: BTreeMap<String, f64>,
    pub mean_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub kinds: Vec<KindSummary>,
    pub improvements: Vec<Improvement>,
}

impl EvalReport {
    pub fn kind(&self, kind: ModelKind) -> Option<&KindSummary> {
        self.kinds.iter().find(|k| k.kind == kind)
    }

    pub fn improvement(&self, kind: ModelKind, versus: ModelKind) -> Option<&Improvement> {
        self.improvements.iter().find(|i| i.kind == kind && i.versus == versus)
    }
}

pub struct FinalRuns {
    pub report: EvalReport,
    /// Best-validation bundles, one per seed, in seed order.
    pub bundles: BTreeMap<ModelKind, Vec<ModelBundle>>,
    pub logs: BTreeMap<ModelKind, Vec<Vec<LogRow>>>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_opt(v: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = v.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| mean(&present))
}

/// Summarizes already trained bundles of one kind on the test split.
pub fn summarize_kind(kind: ModelKind, bundles: &[ModelBundle], split: &DatasetSplit) -> Result<KindSummary> {
    let mut per_well: BTreeMap<String, Vec<crate::metrics::WellEval>> = BTreeMap::new();
    let mut recall_per_seed = Vec::with_capacity(bundles.len());
    for bundle in bundles {
        let preds = bundle.predict(&split.test)?;
        let (evals, _) = evaluate_predictions(&split.test, &preds)?;
        for e in evals {
            per_well.entry(e.well.clone()).or_default().push(e);
        }
        let truth: Vec<SeverityClass> = split.test.iter().map(|s| s.severity_class).collect();
        let pred: Vec<SeverityClass> = preds.iter().map(|&p| bin_prediction(p)).collect();
        recall_per_seed.push(severe_recall(&truth, &pred));
    }
    let wells: Vec<WellSummary> = per_well
        .into_iter()
        .map(|(well, evals)| {
            let ndtw: Vec<f64> = evals.iter().map(|e| e.ndtw).collect();
            let mut confusion = ConfusionMatrix::default();
            for e in &evals {
                confusion.add(&e.confusion);
            }
            WellSummary {
                well,
                sequences: evals[0].sequences,
                ndtw_mean: mean(&ndtw),
                ndtw_per_seed: ndtw,
                mse_mean: mean(&evals.iter().map(|e| e.mse).collect::<Vec<_>>()),
                confusion,
                severe_recall_mean: mean_opt(&evals.iter().map(|e| e.severe_recall).collect::<Vec<_>>()),
            }
        })
        .collect();
    Ok(KindSummary {
        kind,
        mean_ndtw: mean(&wells.iter().map(|w| w.ndtw_mean).collect::<Vec<_>>()),
        wells,
        severe_recall_mean: mean_opt(&recall_per_seed),
        severe_recall_per_seed: recall_per_seed,
    })
}

fn improvement(kind: &KindSummary, versus: &KindSummary) -> Improvement {
    let per_well: BTreeMap<String, f64> = kind
        .wells
        .iter()
        .filter_map(|w| {
            versus
                .wells
                .iter()
                .find(|v| v.well == w.well)
                .map(|v| (w.well.clone(), improvement_pct(v.ndtw_mean, w.ndtw_mean)))
        })
        .collect();
    let mean_pct = mean(&per_well.values().copied().collect::<Vec<_>>());
    Improvement { kind: kind.kind, versus: versus.kind, per_well, mean_pct }
}

/// Builds the report for trained bundles: per-kind summaries plus ADG and
/// IRM against the baseline and ADG against IRM.
pub fn build_report(bundles: &BTreeMap<ModelKind, Vec<ModelBundle>>, split: &DatasetSplit, seeds: &[u64]) -> Result<EvalReport> {
    let kinds: Vec<KindSummary> = bundles
        .iter()
        .map(|(kind, b)| summarize_kind(*kind, b, split))
        .collect::<Result<_>>()?;
    let find = |k: ModelKind| kinds.iter().find(|s| s.kind == k);
    let mut improvements = Vec::new();
    for (kind, versus) in [
        (ModelKind::Adg, ModelKind::Baseline),
        (ModelKind::Irm, ModelKind::Baseline),
        (ModelKind::Adg, ModelKind::Irm),
    ] {
        if let (Some(a), Some(b)) = (find(kind), find(versus)) {
            improvements.push(improvement(a, b));
        }
    }
    Ok(EvalReport { seeds: seeds.to_vec(), kinds, improvements })
}

/// Trains every config once per seed on `split` and evaluates each bundle
/// on every test well. A given seed yields the same generator
/// initialization for every kind.
pub fn compare_final(configs: &[TrainConfig], split: &DatasetSplit, seeds: &[u64]) -> Result<FinalRuns> {
    if split.test.is_empty() {
        return Err(Error::InsufficientData("the final comparison needs test wells".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("compare_final needs at least one seed".into()));
    }
    let mut bundles: BTreeMap<ModelKind, Vec<ModelBundle>> = BTreeMap::new();
    let mut logs: BTreeMap<ModelKind, Vec<Vec<LogRow>>> = BTreeMap::new();
    for config in configs {
        if bundles.contains_key(&config.kind) {
            return Err(Error::Config(format!("two configs for kind {}", config.kind)));
        }
        for &seed in seeds {
            let outcome = train(config, split, seed)?;
            log::info!(
                "{} seed {seed}: best epoch {} validation mse {:?}",
                config.kind,
                outcome.best_epoch,
                outcome.best_validation_mse
            );
            bundles.entry(config.kind).or_default().push(outcome.bundle);
            logs.entry(config.kind).or_default().push(outcome.log);
        }
    }
    let report = build_report(&bundles, split, seeds)?;
    Ok(FinalRuns { report, bundles, logs })
}
