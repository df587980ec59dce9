//! Training losses and the H-divergence probe.
//!
//! The adversarial objective is realised with a gradient reversal layer:
//! the classifier descends its cross-entropy while the generator receives
//! `-λ` times the classifier gradient, so one backward pass yields the
//! saddle-point updates for all three parameter groups. The reported
//! `total` is therefore `ssi_mse + domain_ce + l2`; `λ` only acts on the
//! backward pass.

mod h_divergence;

use serde::{Deserialize, Serialize};

use crate::autodiff::{scaled_mse_beta_grad, Gradients, Graph, Var};
use crate::dataset::SequenceSample;
use crate::models::{batch_tensor, ModelBundle, ModelKind};
use crate::{Error, Result};

pub use h_divergence::{estimate_h_divergence, h_divergence_from_error, ProbeConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Summed over domains for the IRM objective.
    pub ssi_mse: f64,
    pub domain_ce: Option<f64>,
    /// Unweighted penalty summed over domains; `total` adds it times `α`.
    pub irm_penalty: Option<f64>,
    pub l2: f64,
}

/// Loss values together with the gradient of `total`.
pub struct LossOutput {
    pub breakdown: LossBreakdown,
    pub gradients: Gradients,
}

fn targets(samples: &[&SequenceSample]) -> Vec<f64> {
    samples.iter().map(|s| s.ssi).collect()
}

fn check_batch(samples: &[&SequenceSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    Ok(())
}

fn finish(g: &Graph<'_>, total: Var, breakdown: LossBreakdown) -> Result<LossOutput> {
    let back = g.backward(total)?;
    Ok(LossOutput { breakdown, gradients: back.into_param_grads() })
}

/// `mse + l2` on one batch, through the SSI path of any kind of bundle.
pub fn erm_loss(bundle: &ModelBundle, samples: &[&SequenceSample]) -> Result<LossOutput> {
    check_batch(samples)?;
    let mut g = Graph::new(&bundle.params);
    let x = g.input(batch_tensor(samples));
    let z = bundle.generator_graph(&mut g, x)?;
    let y = bundle.ssi_graph(&mut g, z)?;
    let mse = g.mse(y, &targets(samples))?;
    let l2 = g.l2(bundle.architecture.generator.regularization_coefficient);
    let total = g.add(mse, l2)?;
    let breakdown = LossBreakdown {
        total: g.value(total).item(),
        ssi_mse: g.value(mse).item(),
        domain_ce: None,
        irm_penalty: None,
        l2: g.value(l2).item(),
    };
    finish(&g, total, breakdown)
}

/// Sum of per-domain MSEs plus `l2`, with one forward pass per domain.
/// This is the IRM objective at `α = 0`.
pub fn erm_loss_domains(bundle: &ModelBundle, domains: &[Vec<&SequenceSample>]) -> Result<LossOutput> {
    per_domain_loss(bundle, domains, None)
}

/// ADG objective: SSI MSE plus domain cross-entropy behind a GRL of gain
/// `lambda`, plus `l2`.
pub fn adg_loss(bundle: &ModelBundle, samples: &[&SequenceSample], lambda: f64) -> Result<LossOutput> {
    bundle.require(ModelKind::Adg)?;
    check_batch(samples)?;
    let labels: Vec<usize> = samples
        .iter()
        .map(|s| {
            s.domain_id.ok_or_else(|| {
                Error::Input(format!("sample {}@{} has no domain label", s.well_id, s.t_start))
            })
        })
        .collect::<Result<_>>()?;
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        log::warn!("ADG batch holds a single domain ({first}); the classifier has nothing to separate");
    }

    let mut g = Graph::new(&bundle.params);
    let x = g.input(batch_tensor(samples));
    let z = bundle.generator_graph(&mut g, x)?;
    let y = bundle.ssi_graph(&mut g, z)?;
    let mse = g.mse(y, &targets(samples))?;
    let logits = bundle.domain_graph(&mut g, z, lambda)?;
    let ce = g.cross_entropy(logits, &labels)?;
    let l2 = g.l2(bundle.architecture.generator.regularization_coefficient);
    let task = g.add(mse, ce)?;
    let total = g.add(task, l2)?;
    let breakdown = LossBreakdown {
        total: g.value(total).item(),
        ssi_mse: g.value(mse).item(),
        domain_ce: Some(g.value(ce).item()),
        irm_penalty: None,
        l2: g.value(l2).item(),
    };
    finish(&g, total, breakdown)
}

/// IRM objective: `Σ_i [mse_i + α·(∂mse_i/∂β |β=1)²] + l2`. Empty domain
/// batches are skipped with a warning. β is a probe, never updated.
pub fn irm_loss(bundle: &ModelBundle, domains: &[Vec<&SequenceSample>], alpha: f64) -> Result<LossOutput> {
    bundle.require(ModelKind::Irm)?;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    per_domain_loss(bundle, domains, Some(alpha))
}

fn per_domain_loss(
    bundle: &ModelBundle,
    domains: &[Vec<&SequenceSample>],
    alpha: Option<f64>,
) -> Result<LossOutput> {
    let beta = bundle.irm_beta().unwrap_or(1.0);
    let mut g = Graph::new(&bundle.params);
    let mut mse_sum = 0.0;
    let mut penalty_sum = 0.0;
    let mut risk: Option<Var> = None;
    for (d, batch) in domains.iter().enumerate() {
        if batch.is_empty() {
            log::warn!("domain {d} has an empty batch; skipped");
            continue;
        }
        let x = g.input(batch_tensor(batch));
        let z = bundle.generator_graph(&mut g, x)?;
        let y = bundle.ssi_graph(&mut g, z)?;
        let t = targets(batch);
        let mse = g.mse(y, &t)?;
        mse_sum += g.value(mse).item();
        let mut term = mse;
        if let Some(a) = alpha.filter(|a| *a != 0.0) {
            let penalty = g.irm_penalty(y, &t, beta)?;
            penalty_sum += g.value(penalty).item();
            let weighted = g.scale(penalty, a);
            term = g.add(mse, weighted)?;
        } else if alpha.is_some() {
            let grad = scaled_mse_beta_grad(g.value(y).data(), &t, beta);
            penalty_sum += grad * grad;
        }
        risk = Some(match risk {
            None => term,
            Some(r) => g.add(r, term)?,
        });
    }
    let risk = risk.ok_or_else(|| Error::InsufficientData("every domain batch is empty".into()))?;
    let l2 = g.l2(bundle.architecture.generator.regularization_coefficient);
    let total = g.add(risk, l2)?;
    let breakdown = LossBreakdown {
        total: g.value(total).item(),
        ssi_mse: mse_sum,
        domain_ce: None,
        irm_penalty: alpha.map(|_| penalty_sum),
        l2: g.value(l2).item(),
    };
    finish(&g, total, breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{bin_ssi, CHANNELS, WINDOW_LEN};
    use crate::models::{Architecture, GeneratorConfig, HeadConfig};
    use rand::{Rng, SeedableRng};

    fn bundle(kind: ModelKind, coef: f64) -> ModelBundle {
        ModelBundle::build(Architecture::new(
            kind,
            GeneratorConfig { hidden_layer_count: 0, units: 3, regularization_coefficient: coef },
            HeadConfig { ssi_head_widths: vec![4, 1], classifier_widths: vec![4, 2], grl_lambda: 1.0 },
            11,
        ))
        .unwrap()
    }

    fn samples(n: usize, seed: u64) -> Vec<SequenceSample> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let ssi: f64 = rng.random_range(0.0..1.2);
                SequenceSample {
                    features: (0..WINDOW_LEN * CHANNELS).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    ssi,
                    severity_class: bin_ssi(ssi).unwrap(),
                    domain_id: Some(i % 2),
                    well_id: format!("w{}", i % 2),
                    t_start: (i * 60) as f64,
                }
            })
            .collect()
    }

    #[test]
    fn breakdown_decomposes() {
        let data = samples(6, 1);
        let refs: Vec<&SequenceSample> = data.iter().collect();
        let out = erm_loss(&bundle(ModelKind::Baseline, 1e-3), &refs).unwrap();
        let b = out.breakdown;
        assert!((b.total - (b.ssi_mse + b.l2)).abs() < 1e-12);
        let out = adg_loss(&bundle(ModelKind::Adg, 1e-3), &refs, 10.0).unwrap();
        let b = out.breakdown;
        assert!((b.total - (b.ssi_mse + b.domain_ce.unwrap() + b.l2)).abs() < 1e-12);
        let domains = vec![refs[..3].to_vec(), refs[3..].to_vec()];
        let out = irm_loss(&bundle(ModelKind::Irm, 1e-3), &domains, 0.5).unwrap();
        let b = out.breakdown;
        assert!(b.irm_penalty.unwrap() >= 0.0);
        assert!((b.total - (b.ssi_mse + 0.5 * b.irm_penalty.unwrap() + b.l2)).abs() < 1e-12);
    }

    #[test]
    fn adg_needs_domain_labels_and_kind() {
        let mut data = samples(4, 2);
        data[1].domain_id = None;
        let refs: Vec<&SequenceSample> = data.iter().collect();
        assert!(matches!(adg_loss(&bundle(ModelKind::Adg, 0.0), &refs, 1.0), Err(Error::Input(_))));
        assert!(matches!(adg_loss(&bundle(ModelKind::Irm, 0.0), &refs, 1.0), Err(Error::Kind { .. })));
    }

    #[test]
    fn irm_skips_empty_domains() {
        let data = samples(4, 3);
        let refs: Vec<&SequenceSample> = data.iter().collect();
        let b = bundle(ModelKind::Irm, 0.0);
        let with_empty = irm_loss(&b, &[refs.clone(), vec![]], 1.0).unwrap();
        let without = irm_loss(&b, &[refs], 1.0).unwrap();
        assert_eq!(with_empty.breakdown, without.breakdown);
        assert!(irm_loss(&b, &[vec![]], 1.0).is_err());
    }
}
