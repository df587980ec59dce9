//! Supervised fine-tuning on the first slice of a target well.
//!
//! "First two layers" is read with the layer-counting convention of
//! [`crate::models`]: the first LSTM+LN pair of the generator, plus the
//! first two dense layers of the SSI head for ADG and IRM bundles.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamState, Parameter};
use crate::dataset::SequenceSample;
use crate::metrics::{improvement_pct, normalized_dtw};
use crate::models::{ln_prefix, lstm_prefix, ModelBundle, ModelKind};
use crate::objectives::erm_loss;
use crate::{Error, Result};

const FINE_TUNE_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    /// Leading share of the target well used for adaptation.
    pub fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig { fraction: 0.10, epochs: 20, batch_size: 8, learning_rate: 1e-3, seed: 0 }
    }
}

pub struct FineTuneOutcome {
    pub bundle: ModelBundle,
    /// Checksum of the frozen parameters before and after adaptation.
    pub frozen_checksum_before: String,
    pub frozen_checksum_after: String,
    pub adaptation_samples: usize,
    pub trainable: Vec<String>,
}

/// Whether a parameter is updated during fine-tuning of a `kind` bundle.
pub fn is_trainable(kind: ModelKind, p: &Parameter) -> bool {
    let first_pair = p.name.starts_with(&format!("{}/", lstm_prefix(0))) || p.name.starts_with(&format!("{}/", ln_prefix(0)));
    let head = p.name.starts_with("ssi_head/dense0/") || p.name.starts_with("ssi_head/dense1/");
    match kind {
        ModelKind::Baseline => first_pair,
        ModelKind::Adg | ModelKind::Irm => first_pair || head,
    }
}

/// Splits chronologically ordered target samples into the adaptation head
/// and the evaluation tail.
pub fn split_target(samples: &[SequenceSample], fraction: f64) -> Result<(&[SequenceSample], &[SequenceSample])> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("fine-tune fraction must lie in (0, 1), got {fraction}")));
    }
    if samples.windows(2).any(|w| w[1].t_start <= w[0].t_start || w[1].well_id != w[0].well_id) {
        return Err(Error::Input("target samples must come from one well in t_start order".into()));
    }
    let cut = (samples.len() as f64 * fraction).floor() as usize;
    Ok(samples.split_at(cut))
}

/// Fine-tunes a clone of `source` on the first `config.fraction` of `target`.
pub fn fine_tune(source: &ModelBundle, target: &[SequenceSample], config: &FineTuneConfig) -> Result<FineTuneOutcome> {
    let (adapt, _) = split_target(target, config.fraction)?;
    if config.batch_size == 0 {
        return Err(Error::Config("fine-tune batch_size must be positive".into()));
    }
    if adapt.len() < config.batch_size {
        return Err(Error::InsufficientData(format!(
            "{} adaptation samples is less than one batch of {}",
            adapt.len(),
            config.batch_size
        )));
    }
    let kind = source.kind();
    let mut bundle = source.clone();
    let trainable: Vec<bool> = bundle.params.iter().map(|p| is_trainable(kind, p)).collect();
    let frozen = |p: &Parameter| !is_trainable(kind, p);
    let before = bundle.params.checksum(frozen);

    let adam = Adam::new(config.learning_rate);
    let mut state = AdamState::new(&bundle.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(FINE_TUNE_STREAM);
    let mut order: Vec<usize> = (0..adapt.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&SequenceSample> = chunk.iter().map(|&i| &adapt[i]).collect();
            let out = erm_loss(&bundle, &batch)?;
            if !out.breakdown.total.is_finite() || !out.gradients.all_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss: out.breakdown.total });
            }
            adam.step_masked(&mut bundle.params, &out.gradients, &mut state, |i| trainable[i]);
        }
    }

    let after = bundle.params.checksum(frozen);
    let names = bundle.params.iter().filter(|p| is_trainable(kind, p)).map(|p| p.name.clone()).collect();
    Ok(FineTuneOutcome {
        bundle,
        frozen_checksum_before: before,
        frozen_checksum_after: after,
        adaptation_samples: adapt.len(),
        trainable: names,
    })
}

/// One line of `transfer_report.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub well: String,
    pub kind: ModelKind,
    pub dtw_pre: f64,
    pub dtw_post: f64,
    pub improvement_pct: f64,
}

/// Normalized DTW of both bundles on the part of `target` after the
/// adaptation slice.
pub fn evaluate_transfer(
    pre: &ModelBundle,
    post: &ModelBundle,
    target: &[SequenceSample],
    fraction: f64,
) -> Result<TransferRow> {
    let (_, eval) = split_target(target, fraction)?;
    if eval.is_empty() {
        return Err(Error::InsufficientData("no evaluation samples after the adaptation slice".into()));
    }
    let truth: Vec<f64> = eval.iter().map(|s| s.ssi).collect();
    let dtw_pre = normalized_dtw(&truth, &pre.predict(eval)?)?;
    let dtw_post = normalized_dtw(&truth, &post.predict(eval)?)?;
    Ok(TransferRow {
        well: eval[0].well_id.clone(),
        kind: post.kind(),
        dtw_pre,
        dtw_post,
        improvement_pct: improvement_pct(dtw_pre, dtw_post),
    })
}

pub fn write_transfer_report(rows: &[TransferRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
