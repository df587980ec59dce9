mod common;

use common::checks::gaussian_cloud;
use stickslip::autodiff::{l2_penalty, Gradients};
use stickslip::dataset::SequenceSample;
use stickslip::models::{ModelBundle, ModelKind};
use stickslip::objectives::{
    adg_loss, erm_loss, erm_loss_domains, estimate_h_divergence, h_divergence_from_error, irm_loss, ProbeConfig,
};
use stickslip::Error;

const LAMBDAS: [f64; 5] = [0.0, 1.0, 10.0, 100.0, 1000.0];

fn grads_of<'a>(bundle: &'a ModelBundle, g: &'a Gradients, prefix: &'a str) -> impl Iterator<Item = f64> + 'a {
    (0..bundle.params.len())
        .filter(move |&i| bundle.params.get(i).name.starts_with(prefix))
        .flat_map(move |i| g.get(i).iter().copied())
}

#[test]
fn adg_without_reversal_gain_matches_erm_on_the_generator() {
    for seed in 0..5 {
        let bundle = common::tiny_bundle(ModelKind::Adg, 3, 3, 1e-3, seed);
        let mut rng = common::rng(seed);
        let data = common::samples(&mut rng, 9, 3);
        let refs: Vec<&SequenceSample> = data.iter().collect();
        let erm = erm_loss(&bundle, &refs).unwrap();
        let adg = adg_loss(&bundle, &refs, 0.0).unwrap();
        for prefix in ["generator/", "ssi_head/"] {
            let a: Vec<u64> = grads_of(&bundle, &adg.gradients, prefix).map(f64::to_bits).collect();
            let e: Vec<u64> = grads_of(&bundle, &erm.gradients, prefix).map(f64::to_bits).collect();
            assert_eq!(a, e, "seed {seed}, {prefix}");
        }
    }
}

#[test]
fn irm_without_penalty_is_per_domain_erm() {
    for seed in 0..5 {
        let bundle = common::tiny_bundle(ModelKind::Irm, 3, 1, 1e-3, seed);
        let mut rng = common::rng(seed + 100);
        let data = common::samples(&mut rng, 12, 3);
        let domains: Vec<Vec<&SequenceSample>> =
            (0..3).map(|d| data.iter().filter(|s| s.domain_id == Some(d)).collect()).collect();
        let irm = irm_loss(&bundle, &domains, 0.0).unwrap();
        let erm = erm_loss_domains(&bundle, &domains).unwrap();
        assert_eq!(irm.gradients.flatten(), erm.gradients.flatten());
        assert_eq!(irm.breakdown.total, erm.breakdown.total);

        // Summing single-domain ERM gradients counts the L2 term once per domain.
        let mut summed = Gradients::zeros_like(&bundle.params);
        for d in &domains {
            summed.add_assign(&erm_loss(&bundle, d).unwrap().gradients);
        }
        let l2_grad: Vec<f64> = (0..bundle.params.len())
            .flat_map(|i| {
                let p = bundle.params.get(i);
                let scale = if p.regularized { 2.0 * 1e-3 } else { 0.0 };
                p.value.data().iter().map(move |v| scale * v).collect::<Vec<_>>()
            })
            .collect();
        for ((s, e), l) in summed.flatten().iter().zip(erm.gradients.flatten()).zip(&l2_grad) {
            let pooled = s - 2.0 * l;
            assert!((pooled - e).abs() <= 1e-10 * e.abs().max(1.0), "{pooled} vs {e}");
        }
    }
}

#[test]
fn irm_penalty_matches_the_beta_oracles() {
    for seed in 0..5 {
        let gap = common::checks::irm_penalty_gap(seed);
        assert!(gap <= 1e-8, "seed {seed}: relative gap {gap:e}");
    }
}

#[test]
fn per_domain_optimal_predictor_has_no_penalty() {
    let penalty = common::checks::per_domain_optimal_penalty(9);
    assert!(penalty < 1e-24, "{penalty}");
}

#[test]
fn breakdowns_decompose_on_random_batches() {
    for seed in 0..10 {
        let mut rng = common::rng(seed + 300);
        let data = common::samples(&mut rng, 8, 2);
        let refs: Vec<&SequenceSample> = data.iter().collect();
        let domains: Vec<Vec<&SequenceSample>> = vec![refs[..4].to_vec(), refs[4..].to_vec()];
        let reg = 10f64.powi(-(seed as i32 % 4) - 1);

        let base = common::tiny_bundle(ModelKind::Baseline, 3, 2, reg, seed);
        let b = erm_loss(&base, &refs).unwrap().breakdown;
        assert!((b.total - (b.ssi_mse + b.l2)).abs() <= 1e-12);
        assert!((b.l2 - l2_penalty(&base.params, reg)).abs() <= 1e-12);

        let adg = common::tiny_bundle(ModelKind::Adg, 3, 2, reg, seed);
        let b = adg_loss(&adg, &refs, LAMBDAS[seed as usize % 5]).unwrap().breakdown;
        assert!((b.total - (b.ssi_mse + b.domain_ce.unwrap() + b.l2)).abs() <= 1e-12);

        let irm = common::tiny_bundle(ModelKind::Irm, 3, 2, reg, seed);
        let alpha = 0.1 * seed as f64;
        let b = irm_loss(&irm, &domains, alpha).unwrap().breakdown;
        assert!((b.total - (b.ssi_mse + alpha * b.irm_penalty.unwrap() + b.l2)).abs() <= 1e-12);
    }
}

#[test]
fn perfect_predictions_without_regularization_cost_nothing() {
    let mut bundle = common::tiny_bundle(ModelKind::Baseline, 3, 1, 0.0, 2);
    for i in 0..bundle.params.len() {
        let p = bundle.params.get_mut(i);
        if p.name.starts_with("output/") {
            let fill = if p.name.ends_with("bias") { 0.8 } else { 0.0 };
            p.value.data_mut().fill(fill);
        }
    }
    let mut rng = common::rng(2);
    let mut data = common::samples(&mut rng, 5, 1);
    data.iter_mut().for_each(|s| s.ssi = 0.8);
    let refs: Vec<&SequenceSample> = data.iter().collect();
    assert_eq!(erm_loss(&bundle, &refs).unwrap().breakdown.total, 0.0);
}

#[test]
fn reversal_gain_scales_only_the_generator_side() {
    let bundle = common::tiny_bundle(ModelKind::Adg, 3, 3, 1e-4, 4);
    let mut rng = common::rng(4);
    let data = common::samples(&mut rng, 9, 3);
    let refs: Vec<&SequenceSample> = data.iter().collect();
    let at = |lambda: f64| adg_loss(&bundle, &refs, lambda).unwrap();
    let g0 = at(0.0);
    let g1 = at(1.0);
    for lambda in LAMBDAS {
        let out = at(lambda);
        assert_eq!(out.breakdown, g0.breakdown);
        for prefix in ["ssi_head/", "classifier/"] {
            let got: Vec<f64> = grads_of(&bundle, &out.gradients, prefix).collect();
            let want: Vec<f64> = grads_of(&bundle, &g0.gradients, prefix).collect();
            assert_eq!(got, want, "lambda {lambda}, {prefix}");
        }
        let gen: Vec<f64> = grads_of(&bundle, &out.gradients, "generator/").collect();
        let base: Vec<f64> = grads_of(&bundle, &g0.gradients, "generator/").collect();
        let unit: Vec<f64> = grads_of(&bundle, &g1.gradients, "generator/").collect();
        for ((g, b), u) in gen.iter().zip(&base).zip(&unit) {
            // generator gradient = ERM part - lambda * dCE/dtheta_G
            let want = b + lambda * (u - b);
            assert!((g - want).abs() <= 1e-9 * want.abs().max(1e-6), "lambda {lambda}: {g} vs {want}");
        }
    }
}

#[test]
fn single_domain_batch_still_trains_and_unlabelled_batch_fails() {
    let bundle = common::tiny_bundle(ModelKind::Adg, 3, 2, 0.0, 5);
    let mut rng = common::rng(5);
    let mut data = common::samples(&mut rng, 4, 1);
    let refs: Vec<&SequenceSample> = data.iter().collect();
    let out = adg_loss(&bundle, &refs, 10.0).unwrap();
    assert!(out.gradients.all_finite());
    data[2].domain_id = None;
    let refs: Vec<&SequenceSample> = data.iter().collect();
    assert!(matches!(adg_loss(&bundle, &refs, 1.0), Err(Error::Input(_))));
}

#[test]
fn probe_separates_only_separable_clouds() {
    assert_eq!(h_divergence_from_error(0.5), 0.0);
    assert_eq!(h_divergence_from_error(0.0), 1.0);
    for seed in 0..3 {
        let (d_same, d_far) = common::checks::h_divergence_pair(seed);
        assert!((-0.1..=0.1).contains(&d_same), "seed {seed}: identical clouds gave {d_same}");
        assert!(d_far >= 0.9, "seed {seed}: separated clouds gave {d_far}");
    }
    let mut rng = common::rng(0);
    let small = gaussian_cloud(&mut rng, 9, 2, 0.0);
    let ok = gaussian_cloud(&mut rng, 20, 2, 0.0);
    assert!(matches!(estimate_h_divergence(&small, &ok, &ProbeConfig::default()), Err(Error::InsufficientData(_))));
}
