//! The standard synthetic benchmark: nine simulated wells in six fields,
//! standing in for the field data of the original study.
//!
//! Wells 1-3 share a field; wells 4, 5 and 6 each sit in their own field;
//! wells 7-9 come from two further fields and are only used for testing.
//! Fields differ in friction, damping and in the scaling of the surface
//! torque sensor, so the surface channels of each field have their own
//! marginal distribution while the physics linking surface patterns to
//! stick-slip is shared.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{assemble_split, DatasetSplit, SequenceSample, SplitOptions, SplitRole};
use crate::drillsim::{simulate_well, ChannelNoise, Schedule, Trajectory, WellRecord, WellSpec};
use crate::metrics::improvement_pct;
use crate::models::{ModelBundle, ModelKind};
use crate::objectives::{estimate_h_divergence, ProbeConfig};
use crate::training::{samples_by_well, TrainConfig, ValidationCase};
use crate::transfer::{evaluate_transfer, fine_tune, FineTuneConfig, TransferRow};
use crate::{Error, Result};

/// Field-level priors shared by the wells of a field.
#[derive(Clone, Debug)]
struct FieldPrior {
    id: &'static str,
    trajectory: Trajectory,
    static_friction: f64,
    kinetic_friction: f64,
    damping: f64,
    torque_gain: f64,
    torque_offset: f64,
    torque_noise: f64,
    fluctuation: f64,
}

const FIELDS: [FieldPrior; 6] = [
    FieldPrior { id: "A", trajectory: Trajectory::Lateral, static_friction: 12_000.0, kinetic_friction: 8_000.0, damping: 100.0, torque_gain: 1.0, torque_offset: 0.0, torque_noise: 150.0, fluctuation: 600.0 },
    FieldPrior { id: "B", trajectory: Trajectory::Lateral, static_friction: 11_000.0, kinetic_friction: 9_000.0, damping: 80.0, torque_gain: 1.3, torque_offset: 3_000.0, torque_noise: 300.0, fluctuation: 800.0 },
    FieldPrior { id: "C", trajectory: Trajectory::Lateral, static_friction: 12_500.0, kinetic_friction: 8_000.0, damping: 90.0, torque_gain: 0.8, torque_offset: -2_000.0, torque_noise: 200.0, fluctuation: 500.0 },
    FieldPrior { id: "D", trajectory: Trajectory::Lateral, static_friction: 11_500.0, kinetic_friction: 8_500.0, damping: 100.0, torque_gain: 1.15, torque_offset: 1_500.0, torque_noise: 400.0, fluctuation: 700.0 },
    FieldPrior { id: "E", trajectory: Trajectory::Lateral, static_friction: 12_000.0, kinetic_friction: 8_500.0, damping: 95.0, torque_gain: 0.7, torque_offset: 4_000.0, torque_noise: 250.0, fluctuation: 650.0 },
    FieldPrior { id: "F", trajectory: Trajectory::Vertical, static_friction: 11_800.0, kinetic_friction: 8_200.0, damping: 85.0, torque_gain: 1.45, torque_offset: -3_000.0, torque_noise: 350.0, fluctuation: 750.0 },
];

/// `(well id, field index, role in the final split)`.
const WELLS: [(&str, usize, SplitRole); 9] = [
    ("well1", 0, SplitRole::Train),
    ("well2", 0, SplitRole::Train),
    ("well3", 0, SplitRole::Train),
    ("well4", 1, SplitRole::Train),
    ("well5", 2, SplitRole::Train),
    ("well6", 3, SplitRole::Train),
    ("well7", 4, SplitRole::Test),
    ("well8", 5, SplitRole::Test),
    ("well9", 5, SplitRole::Test),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub train_duration_s: f64,
    pub test_duration_s: f64,
    /// Operating-point segments last between these many seconds.
    pub segment_s: (f64, f64),
    /// Hold time of each commissioning sweep cell.
    pub sweep_step_s: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seed: 2024,
            train_duration_s: 9_000.0,
            test_duration_s: 14_400.0,
            segment_s: (240.0, 720.0),
            sweep_step_s: 180.0,
        }
    }
}

/// Commissioning sweep run at the start of every well: each surface speed
/// is held at a low and a high weight on bit.
const SWEEP_SPEEDS: [f64; 3] = [6.0, 10.0, 14.0];
const SWEEP_WOBS: [f64; 2] = [70.0, 130.0];

fn random_steps(rng: &mut ChaCha8Rng, start: f64, duration: f64, segment: (f64, f64), range: (f64, f64)) -> Vec<(f64, f64)> {
    let mut steps = Vec::new();
    let mut t = start;
    while t < duration {
        steps.push((t, rng.random_range(range.0..range.1)));
        t += rng.random_range(segment.0..segment.1).round();
    }
    steps
}

/// Surface speed, WOB and flow schedules: the sweep, then piecewise-constant
/// operating points drawn uniformly.
fn operating_schedules(rng: &mut ChaCha8Rng, duration: f64, config: &BenchmarkConfig) -> [Schedule; 3] {
    let mut cells: Vec<(f64, f64)> =
        SWEEP_SPEEDS.iter().flat_map(|&v| SWEEP_WOBS.iter().map(move |&w| (v, w))).collect();
    cells.shuffle(rng);
    let mut speed = Vec::new();
    let mut wob = Vec::new();
    for (i, (v, w)) in cells.into_iter().enumerate() {
        let t = i as f64 * config.sweep_step_s;
        speed.push((t, v));
        wob.push((t, w));
    }
    let start = speed.len() as f64 * config.sweep_step_s;
    speed.extend(random_steps(rng, start, duration, config.segment_s, (6.0, 16.0)));
    wob.extend(random_steps(rng, start, duration, config.segment_s, (60.0, 140.0)));
    let flow = random_steps(rng, 0.0, duration, config.segment_s, (1_800.0, 2_600.0));
    [Schedule::from_steps(&speed), Schedule::from_steps(&wob), Schedule::from_steps(&flow)]
}

/// The nine well specs of the benchmark.
pub fn standard_specs(config: &BenchmarkConfig) -> Vec<WellSpec> {
    WELLS
        .iter()
        .enumerate()
        .map(|(i, &(well_id, field, role))| {
            let prior = &FIELDS[field];
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(100 + i as u64);
            let jitter = |rng: &mut ChaCha8Rng, v: f64, rel: f64| v * (1.0 + rng.random_range(-rel..rel));
            let duration = match role {
                SplitRole::Test => config.test_duration_s,
                _ => config.train_duration_s,
            };
            let static_friction = jitter(&mut rng, prior.static_friction, 0.03);
            let kinetic_friction = jitter(&mut rng, prior.kinetic_friction, 0.03).min(static_friction);
            let [surface_speed_profile, wob_profile, flow_profile] = operating_schedules(&mut rng, duration, config);
            WellSpec {
                well_id: well_id.to_string(),
                field_id: prior.id.to_string(),
                trajectory: prior.trajectory,
                duration_s: duration,
                string_stiffness: jitter(&mut rng, 470.0, 0.05),
                string_damping: jitter(&mut rng, prior.damping, 0.05),
                bit_inertia: jitter(&mut rng, 400.0, 0.05),
                static_friction_torque: static_friction,
                kinetic_friction_torque: kinetic_friction,
                velocity_weakening_rate: 0.5,
                bit_torque_fluctuation: prior.fluctuation,
                surface_speed_profile,
                wob_profile,
                flow_profile,
                torque_gain: jitter(&mut rng, prior.torque_gain, 0.02),
                torque_offset: prior.torque_offset + rng.random_range(-200.0..200.0),
                noise_std: ChannelNoise { torque: prior.torque_noise, wob: 1.5, rop: 0.5, flow: 15.0, rotation: 0.05 },
                seed: config.seed.wrapping_mul(31).wrapping_add(i as u64),
            }
        })
        .collect()
}

/// Simulates specs concurrently; output order follows `specs`.
pub fn simulate_all(specs: &[WellSpec]) -> Result<Vec<WellRecord>> {
    specs.par_iter().map(simulate_well).collect()
}

/// Wells 1-6 train, wells 7-9 test.
pub fn final_assignment() -> BTreeMap<String, SplitRole> {
    WELLS.iter().map(|&(w, _, r)| (w.to_string(), r)).collect()
}

/// The three validation cases: wells 1-3 always train, two of wells 4-6
/// validate. Test wells are left out.
pub fn validation_cases() -> Vec<ValidationCase> {
    let case = |name: &str, validation: [&str; 2]| {
        let assignment = WELLS[..6]
            .iter()
            .map(|&(w, _, _)| {
                let role = if validation.contains(&w) { SplitRole::Validation } else { SplitRole::Train };
                (w.to_string(), role)
            })
            .collect();
        ValidationCase { name: name.to_string(), assignment }
    };
    vec![
        case("case1", ["well4", "well6"]),
        case("case2", ["well4", "well5"]),
        case("case3", ["well5", "well6"]),
    ]
}

/// The final split with the chronological last 10% of each training well
/// held out for checkpoint selection.
pub fn final_split(records: &[WellRecord]) -> Result<DatasetSplit> {
    assemble_split(
        records,
        &final_assignment(),
        &SplitOptions { validation_domains: false, validation_tail_fraction: Some(0.1) },
    )
}

/// Desk-scale training settings used by the benchmark.
pub fn desk_config(kind: ModelKind) -> TrainConfig {
    TrainConfig {
        kind,
        epochs: 100,
        batch_size: 32,
        learning_rate: 1e-3,
        lambda: (kind == ModelKind::Adg).then_some(1.0),
        alpha: (kind == ModelKind::Irm).then_some(0.1),
        regularization_coefficient: 1e-4,
        hidden_layer_count: 4,
        units: 16,
        seeds: vec![0, 1, 2],
    }
}

/// Fine-tuning settings paired with [`desk_config`]: a tenth of its epochs.
pub fn desk_fine_tune(seed: u64) -> FineTuneConfig {
    FineTuneConfig { fraction: 0.10, epochs: 10, batch_size: 8, learning_rate: 1e-3, seed }
}

/// Mean H-divergence between the embeddings of every pair of training
/// domains in `samples`.
pub fn mean_pairwise_h_divergence(bundle: &ModelBundle, samples: &[SequenceSample], probe: &ProbeConfig) -> Result<f64> {
    let mut by_domain: BTreeMap<usize, Vec<&SequenceSample>> = BTreeMap::new();
    for s in samples {
        let d = s.domain_id.ok_or_else(|| Error::Input(format!("sample of {} has no domain label", s.well_id)))?;
        by_domain.entry(d).or_default().push(s);
    }
    if by_domain.len() < 2 {
        return Err(Error::InsufficientData("need at least two domains".into()));
    }
    let embeddings: Vec<Vec<Vec<f64>>> =
        by_domain.values().map(|v| bundle.embed_samples(v)).collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            total += estimate_h_divergence(&embeddings[i], &embeddings[j], probe)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Fine-tuning results for one kind, averaged over source seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferStudy {
    pub rows: Vec<TransferRow>,
    pub per_seed: Vec<TransferRow>,
    pub frozen_unchanged: bool,
}

/// Fine-tunes every bundle on the head of every test well and scores the
/// tail, before and after.
pub fn transfer_study(bundles: &[ModelBundle], test: &[SequenceSample], config: &FineTuneConfig) -> Result<TransferStudy> {
    if bundles.is_empty() {
        return Err(Error::Config("transfer study needs at least one bundle".into()));
    }
    let wells = samples_by_well(test);
    let mut per_seed = Vec::new();
    let mut rows = Vec::new();
    let mut frozen_unchanged = true;
    for (well, samples) in &wells {
        let mut pre = 0.0;
        let mut post = 0.0;
        for bundle in bundles {
            let outcome = fine_tune(bundle, samples, config)?;
            frozen_unchanged &= outcome.frozen_checksum_before == outcome.frozen_checksum_after;
            let row = evaluate_transfer(bundle, &outcome.bundle, samples, config.fraction)?;
            pre += row.dtw_pre;
            post += row.dtw_post;
            per_seed.push(row);
        }
        let n = bundles.len() as f64;
        let (dtw_pre, dtw_post) = (pre / n, post / n);
        rows.push(TransferRow {
            well: well.clone(),
            kind: bundles[0].kind(),
            dtw_pre,
            dtw_post,
            improvement_pct: improvement_pct(dtw_pre, dtw_post),
        });
    }
    Ok(TransferStudy { rows, per_seed, frozen_unchanged })
}
