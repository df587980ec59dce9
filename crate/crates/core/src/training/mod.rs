//! Epoch loop, best-validation checkpointing, grid search and the final
//! three-way comparison.

mod compare;
mod grid;
mod run;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamState};
use crate::dataset::{DatasetSplit, SequenceSample};
use crate::metrics;
use crate::models::{Architecture, GeneratorConfig, HeadConfig, ModelBundle, ModelKind};
use crate::objectives::{adg_loss, erm_loss, irm_loss, LossBreakdown, LossOutput};
use crate::{Error, Result};

pub use compare::{build_report, compare_final, summarize_kind, EvalReport, FinalRuns, Improvement, KindSummary, WellSummary};
pub use grid::{grid_search, GridOutcome, GridRow, GridSpec, GridStage, ValidationCase};
pub use run::{
    read_grid_results, read_training_log, write_grid_results, write_training_log, EvalFile, RunDir, CHECKPOINT_DIR,
    CONFIG_FILE, EVAL_REPORT_FILE, GRID_RESULTS_FILE, PREDICTIONS_FILE, REPORT_FILE, TRAINING_LOG_FILE,
    TRANSFER_REPORT_FILE,
};

const SHUFFLE_STREAM: u64 = 3;

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// GRL gain, required for ADG only.
    pub lambda: Option<f64>,
    /// IRM penalty weight, required for IRM only.
    pub alpha: Option<f64>,
    pub regularization_coefficient: f64,
    pub hidden_layer_count: usize,
    pub units: usize,
    pub seeds: Vec<u64>,
}

impl TrainConfig {
    /// Desk-scale defaults for `kind`.
    pub fn desk(kind: ModelKind) -> Self {
        TrainConfig {
            kind,
            epochs: 150,
            batch_size: 256,
            learning_rate: 1e-3,
            lambda: (kind == ModelKind::Adg).then_some(10.0),
            alpha: (kind == ModelKind::Irm).then_some(1.0),
            regularization_coefficient: 1e-4,
            hidden_layer_count: 6,
            units: 64,
            seeds: vec![0, 1, 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        match (self.kind, self.lambda, self.alpha) {
            (ModelKind::Baseline, None, None) | (ModelKind::Adg, Some(_), None) | (ModelKind::Irm, None, Some(_)) => {}
            (kind, _, _) => {
                return Err(Error::Config(format!(
                    "{kind} needs exactly its own coefficient (lambda for adg, alpha for irm, none for baseline)"
                )))
            }
        }
        if self.lambda.is_some_and(|l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config("lambda must be finite and >= 0".into()));
        }
        if self.alpha.is_some_and(|a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::Config("alpha must be finite and >= 0".into()));
        }
        self.generator().validate()
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            hidden_layer_count: self.hidden_layer_count,
            units: self.units,
            regularization_coefficient: self.regularization_coefficient,
        }
    }

    pub fn architecture(&self, domain_count: usize, seed: u64) -> Architecture {
        Architecture::new(
            self.kind,
            self.generator(),
            HeadConfig::standard(domain_count, self.lambda.unwrap_or(0.0)),
            seed,
        )
    }
}

/// One line of `training_log.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub split: String,
    pub total: f64,
    pub ssi_mse: f64,
    pub domain_ce: Option<f64>,
    pub irm_penalty: Option<f64>,
    pub l2: f64,
}

impl LogRow {
    fn new(epoch: usize, split: &str, b: &LossBreakdown) -> Self {
        LogRow {
            epoch,
            split: split.to_string(),
            total: b.total,
            ssi_mse: b.ssi_mse,
            domain_ce: b.domain_ce,
            irm_penalty: b.irm_penalty,
            l2: b.l2,
        }
    }
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE, or from
    /// the last epoch when there is no validation data.
    pub bundle: ModelBundle,
    pub log: Vec<LogRow>,
    pub best_epoch: usize,
    pub best_validation_mse: Option<f64>,
}

fn mean_breakdown(parts: &[LossBreakdown]) -> LossBreakdown {
    let n = parts.len() as f64;
    let avg = |f: &dyn Fn(&LossBreakdown) -> f64| parts.iter().map(f).sum::<f64>() / n;
    let avg_opt = |f: &dyn Fn(&LossBreakdown) -> Option<f64>| {
        parts.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
    };
    LossBreakdown {
        total: avg(&|b| b.total),
        ssi_mse: avg(&|b| b.ssi_mse),
        domain_ce: avg_opt(&|b| b.domain_ce),
        irm_penalty: avg_opt(&|b| b.irm_penalty),
        l2: avg(&|b| b.l2),
    }
}

/// Training samples grouped by domain id, in sample order.
fn by_domain(samples: &[SequenceSample], domain_count: usize) -> Result<Vec<Vec<usize>>> {
    let mut groups = vec![Vec::new(); domain_count];
    for (i, s) in samples.iter().enumerate() {
        let d = s.domain_id.ok_or_else(|| {
            Error::Input(format!("training sample of {} has no domain label", s.well_id))
        })?;
        groups
            .get_mut(d)
            .ok_or_else(|| Error::Input(format!("domain id {d} >= domain count {domain_count}")))?
            .push(i);
    }
    Ok(groups)
}

/// Round-robin interleaving of shuffled per-domain lists, so consecutive
/// chunks carry several domains.
fn stratified_order(groups: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut shuffled: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.shuffle(rng);
            g
        })
        .collect();
    let total: usize = shuffled.iter().map(Vec::len).sum();
    let mut order = Vec::with_capacity(total);
    let mut cursor = vec![0usize; shuffled.len()];
    while order.len() < total {
        for (d, g) in shuffled.iter_mut().enumerate() {
            if cursor[d] < g.len() {
                order.push(g[cursor[d]]);
                cursor[d] += 1;
            }
        }
    }
    order
}

/// Validation breakdown: MSE of predictions plus the current L2 term.
fn validation_breakdown(bundle: &ModelBundle, samples: &[SequenceSample]) -> Result<LossBreakdown> {
    let preds = bundle.predict(samples)?;
    let truth: Vec<f64> = samples.iter().map(|s| s.ssi).collect();
    let mse = metrics::mse(&truth, &preds)?;
    let l2 = crate::autodiff::l2_penalty(&bundle.params, bundle.architecture.generator.regularization_coefficient);
    Ok(LossBreakdown { total: mse + l2, ssi_mse: mse, domain_ce: None, irm_penalty: None, l2 })
}

/// Trains one bundle of `config.kind` with initialization `seed`.
pub fn train(config: &TrainConfig, split: &DatasetSplit, seed: u64) -> Result<TrainOutcome> {
    let bundle = ModelBundle::build(config.architecture(split.domain_count.max(1), seed))?;
    train_bundle(config, bundle, split, seed)
}

/// Trains an existing bundle; `seed` drives the batch shuffles.
pub fn train_bundle(config: &TrainConfig, mut bundle: ModelBundle, split: &DatasetSplit, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    if bundle.kind() != config.kind {
        return Err(Error::Kind { expected: config.kind.to_string(), actual: bundle.kind().to_string() });
    }
    let train = &split.train;
    if train.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    if config.kind == ModelKind::Adg && split.domain_count < 1 {
        return Err(Error::InsufficientData("ADG training needs domain labels".into()));
    }
    let groups = match config.kind {
        ModelKind::Baseline => Vec::new(),
        _ => by_domain(train, split.domain_count)?,
    };

    let adam = Adam::new(config.learning_rate);
    let mut state = AdamState::new(&bundle.params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM);

    let mut log = Vec::with_capacity(2 * config.epochs);
    let mut best: Option<(f64, usize, crate::autodiff::ParameterSet)> = None;
    let steps_per_epoch = train.len().div_ceil(config.batch_size);

    for epoch in 1..=config.epochs {
        let mut parts = Vec::with_capacity(steps_per_epoch);
        let batches: Vec<Vec<Vec<usize>>> = match config.kind {
            ModelKind::Baseline => {
                let mut order: Vec<usize> = (0..train.len()).collect();
                order.shuffle(&mut rng);
                order.chunks(config.batch_size).map(|c| vec![c.to_vec()]).collect()
            }
            ModelKind::Adg => stratified_order(&groups, &mut rng)
                .chunks(config.batch_size)
                .map(|c| vec![c.to_vec()])
                .collect(),
            ModelKind::Irm => {
                let live: Vec<&Vec<usize>> = groups.iter().filter(|g| !g.is_empty()).collect();
                let sub = (config.batch_size / live.len().max(1)).max(1);
                let mut shuffled: Vec<Vec<usize>> = live
                    .iter()
                    .map(|g| {
                        let mut g = (*g).clone();
                        g.shuffle(&mut rng);
                        g
                    })
                    .collect();
                let mut cursor = vec![0usize; shuffled.len()];
                let mut steps = Vec::with_capacity(steps_per_epoch);
                for _ in 0..steps_per_epoch {
                    let mut step = Vec::with_capacity(shuffled.len());
                    for (d, g) in shuffled.iter_mut().enumerate() {
                        let mut part = Vec::with_capacity(sub);
                        for _ in 0..sub.min(g.len()) {
                            if cursor[d] == g.len() {
                                g.shuffle(&mut rng);
                                cursor[d] = 0;
                            }
                            part.push(g[cursor[d]]);
                            cursor[d] += 1;
                        }
                        step.push(part);
                    }
                    steps.push(step);
                }
                steps
            }
        };

        for (b, batch) in batches.iter().enumerate() {
            let out: LossOutput = match config.kind {
                ModelKind::Baseline => {
                    let s: Vec<&SequenceSample> = batch[0].iter().map(|&i| &train[i]).collect();
                    erm_loss(&bundle, &s)?
                }
                ModelKind::Adg => {
                    let s: Vec<&SequenceSample> = batch[0].iter().map(|&i| &train[i]).collect();
                    adg_loss(&bundle, &s, config.lambda.unwrap_or(0.0))?
                }
                ModelKind::Irm => {
                    let domains: Vec<Vec<&SequenceSample>> =
                        batch.iter().map(|d| d.iter().map(|&i| &train[i]).collect()).collect();
                    irm_loss(&bundle, &domains, config.alpha.unwrap_or(0.0))?
                }
            };
            if !out.breakdown.total.is_finite() || !out.gradients.all_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss: out.breakdown.total });
            }
            adam.step(&mut bundle.params, &out.gradients, &mut state);
            parts.push(out.breakdown);
        }
        log.push(LogRow::new(epoch, "train", &mean_breakdown(&parts)));

        let score = if split.validation.is_empty() {
            None
        } else {
            let vb = validation_breakdown(&bundle, &split.validation)?;
            if !vb.ssi_mse.is_finite() {
                return Err(Error::Diverged { epoch, batch: batches.len(), loss: vb.ssi_mse });
            }
            log.push(LogRow::new(epoch, "validation", &vb));
            Some(vb.ssi_mse)
        };
        match score {
            Some(mse) => {
                if best.as_ref().is_none_or(|(b, _, _)| mse < *b) {
                    best = Some((mse, epoch, bundle.params.clone()));
                }
            }
            None => best = Some((f64::NAN, epoch, bundle.params.clone())),
        }
        log::debug!("{} seed {seed} epoch {epoch}: {:?}", config.kind, log.last());
    }

    let (mse, best_epoch, params) = best.expect("at least one epoch");
    bundle.params = params;
    Ok(TrainOutcome {
        bundle,
        log,
        best_epoch,
        best_validation_mse: (!mse.is_nan()).then_some(mse),
    })
}

/// Per-well normalized DTW averaged over wells.
pub fn mean_ndtw(bundle: &ModelBundle, samples: &[SequenceSample]) -> Result<f64> {
    let preds = bundle.predict(samples)?;
    let (evals, _) = metrics::evaluate_predictions(samples, &preds)?;
    Ok(evals.iter().map(|e| e.ndtw).sum::<f64>() / evals.len() as f64)
}

/// Groups samples by well id, keeping order within each well.
pub fn samples_by_well(samples: &[SequenceSample]) -> BTreeMap<String, Vec<SequenceSample>> {
    let mut out: BTreeMap<String, Vec<SequenceSample>> = BTreeMap::new();
    for s in samples {
        out.entry(s.well_id.clone()).or_default().push(s.clone());
    }
    out
}
