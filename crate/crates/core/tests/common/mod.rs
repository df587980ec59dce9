#![allow(dead_code)]

pub mod checks;
pub mod fd_checks;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stickslip::dataset::{
    bin_ssi, DatasetSplit, NormalizationStats, SequenceSample, SplitOptions, SplitRole, CHANNELS, WINDOW_LEN,
};
use stickslip::models::{Architecture, GeneratorConfig, HeadConfig, ModelBundle, ModelKind};
use stickslip::training::TrainConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Random window with a label drawn from [0, 2.5).
pub fn sample(rng: &mut ChaCha8Rng, well: &str, t_start: f64, domain_id: Option<usize>) -> SequenceSample {
    let ssi = rng.random_range(0.0..2.5);
    SequenceSample {
        features: uniform(rng, WINDOW_LEN * CHANNELS, 1.5),
        ssi,
        severity_class: bin_ssi(ssi).unwrap(),
        domain_id,
        well_id: well.to_string(),
        t_start,
    }
}

pub fn samples(rng: &mut ChaCha8Rng, n: usize, domains: usize) -> Vec<SequenceSample> {
    (0..n)
        .map(|i| {
            let d = i % domains.max(1);
            sample(rng, &format!("well{d}"), (i / domains.max(1)) as f64 * 60.0, Some(d))
        })
        .collect()
}

/// A bundle small enough for finite differences, moved off its
/// initialization so no bias sits exactly on a ReLU kink.
pub fn tiny_bundle(kind: ModelKind, units: usize, domains: usize, reg: f64, seed: u64) -> ModelBundle {
    let heads = HeadConfig {
        ssi_head_widths: vec![3, 2, 1],
        classifier_widths: vec![3, domains],
        grl_lambda: 1.0,
    };
    let generator = GeneratorConfig { hidden_layer_count: 0, units, regularization_coefficient: reg };
    let mut bundle = ModelBundle::build(Architecture::new(kind, generator, heads, seed)).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let flat: Vec<f64> = bundle.params.flatten().iter().map(|v| v + r.random_range(-0.1..0.1)).collect();
    bundle.params.assign_flat(&flat);
    bundle
}

/// Split over random windows: `domains` training wells with `per_domain`
/// windows each, plus one validation and one test well.
pub fn random_split(seed: u64, domains: usize, per_domain: usize) -> DatasetSplit {
    let mut r = rng(seed);
    let mut train = Vec::new();
    for d in 0..domains {
        for k in 0..per_domain {
            train.push(sample(&mut r, &format!("src{d}"), 60.0 * k as f64, Some(d)));
        }
    }
    let validation = (0..per_domain).map(|k| sample(&mut r, "val", 60.0 * k as f64, None)).collect();
    let test = (0..per_domain).map(|k| sample(&mut r, "tgt", 60.0 * k as f64, None)).collect();
    let mut assignment = BTreeMap::new();
    let mut fields = BTreeMap::new();
    let names: Vec<String> = (0..domains).map(|d| format!("src{d}")).collect();
    for name in &names {
        assignment.insert(name.clone(), SplitRole::Train);
        fields.insert(name.clone(), "source".to_string());
    }
    assignment.insert("val".into(), SplitRole::Validation);
    fields.insert("val".into(), "source".into());
    assignment.insert("tgt".into(), SplitRole::Test);
    fields.insert("tgt".into(), "target".into());
    DatasetSplit {
        train,
        validation,
        test,
        domain_count: domains,
        domains: names,
        stats: NormalizationStats::identity(),
        assignment,
        fields,
        options: SplitOptions::default(),
    }
}

/// A few epochs of a very small model.
pub fn tiny_config(kind: ModelKind) -> TrainConfig {
    TrainConfig {
        kind,
        epochs: 3,
        batch_size: 8,
        learning_rate: 1e-2,
        lambda: (kind == ModelKind::Adg).then_some(1.0),
        alpha: (kind == ModelKind::Irm).then_some(0.1),
        regularization_coefficient: 1e-4,
        hidden_layer_count: 0,
        units: 4,
        seeds: vec![0],
    }
}

/// The nine benchmark wells, shortened to `duration_s` each.
pub fn short_wells(duration_s: f64) -> Vec<stickslip::drillsim::WellRecord> {
    use stickslip::benchmark::{simulate_all, standard_specs, BenchmarkConfig};
    let config = BenchmarkConfig { train_duration_s: duration_s, test_duration_s: duration_s, ..BenchmarkConfig::default() };
    simulate_all(&standard_specs(&config)).unwrap()
}
