use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Adam, AdamState, Graph, ParameterSet, Role, Tensor};
use crate::{Error, Result};

/// Settings of the probe classifier used to measure H-divergence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { hidden: 16, steps: 200, learning_rate: 1e-2, train_fraction: 0.8, seed: 0 }
    }
}

pub const MIN_SAMPLES_PER_SIDE: usize = 10;

/// `1 - 2·err`.
pub fn h_divergence_from_error(err: f64) -> f64 {
    1.0 - 2.0 * err
}

/// Trains a fresh two-layer probe to tell set `a` from set `b` and returns
/// `1 - 2·err` measured on the held-out part of both sets.
pub fn estimate_h_divergence(a: &[Vec<f64>], b: &[Vec<f64>], config: &ProbeConfig) -> Result<f64> {
    if a.len() < MIN_SAMPLES_PER_SIDE || b.len() < MIN_SAMPLES_PER_SIDE {
        return Err(Error::InsufficientData(format!(
            "H-divergence needs at least {MIN_SAMPLES_PER_SIDE} samples per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dim = a[0].len();
    if dim == 0 || a.iter().chain(b).any(|r| r.len() != dim) {
        return Err(Error::Shape("H-divergence inputs must share one positive width".into()));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::Config("probe train_fraction must lie in (0, 1)".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let split = |set: &[Vec<f64>], rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..set.len()).collect();
        idx.shuffle(rng);
        let cut = ((set.len() as f64 * config.train_fraction).round() as usize).clamp(1, set.len() - 1);
        (idx[..cut].to_vec(), idx[cut..].to_vec())
    };
    let (a_train, a_test) = split(a, &mut rng);
    let (b_train, b_test) = split(b, &mut rng);

    let mut train_rows: Vec<&[f64]> = Vec::new();
    let mut train_labels = Vec::new();
    for &i in &a_train {
        train_rows.push(&a[i]);
        train_labels.push(0usize);
    }
    for &i in &b_train {
        train_rows.push(&b[i]);
        train_labels.push(1usize);
    }

    let mut mean = vec![0.0; dim];
    for r in &train_rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train_rows.len() as f64);
    let mut std = vec![0.0; dim];
    for r in &train_rows {
        for ((s, v), m) in std.iter_mut().zip(r.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    std.iter_mut().for_each(|s| {
        *s = (*s / train_rows.len() as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    });
    let standardize = |rows: &[&[f64]]| -> Tensor {
        let data = rows
            .iter()
            .flat_map(|r| r.iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s))
            .collect();
        Tensor::new(vec![rows.len(), dim], data).expect("rows share width")
    };
    let x_train = standardize(&train_rows);

    let mut params = ParameterSet::new();
    let glorot = |rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize| -> Vec<f64> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect()
    };
    let h = config.hidden;
    params.add("w0", Role::Kernel, false, Tensor::new(vec![dim, h], glorot(&mut rng, dim, h))?)?;
    params.add("b0", Role::Bias, false, Tensor::zeros(vec![h]))?;
    params.add("w1", Role::Kernel, false, Tensor::new(vec![h, 2], glorot(&mut rng, h, 2))?)?;
    params.add("b1", Role::Bias, false, Tensor::zeros(vec![2]))?;

    let logits_of = |g: &mut Graph<'_>, x: Tensor| -> Result<crate::autodiff::Var> {
        let x = g.input(x);
        let (w0, b0, w1, b1) = (g.param(0), g.param(1), g.param(2), g.param(3));
        let hidden = g.dense(x, w0, b0, Activation::Relu)?;
        g.dense(hidden, w1, b1, Activation::Linear)
    };

    let adam = Adam::new(config.learning_rate);
    let mut state = AdamState::new(&params);
    for _ in 0..config.steps {
        let grads = {
            let mut g = Graph::new(&params);
            let logits = logits_of(&mut g, x_train.clone())?;
            let loss = g.cross_entropy(logits, &train_labels)?;
            g.backward(loss)?.into_param_grads()
        };
        adam.step(&mut params, &grads, &mut state);
    }

    let test_rows: Vec<&[f64]> = a_test
        .iter()
        .map(|&i| a[i].as_slice())
        .chain(b_test.iter().map(|&i| b[i].as_slice()))
        .collect();
    let labels: Vec<usize> = std::iter::repeat_n(0, a_test.len()).chain(std::iter::repeat_n(1, b_test.len())).collect();
    let mut g = Graph::new(&params);
    let logits = logits_of(&mut g, standardize(&test_rows))?;
    let errors = g
        .value(logits)
        .data()
        .chunks_exact(2)
        .zip(&labels)
        .filter(|(row, &label)| usize::from(row[1] > row[0]) != label)
        .count();
    Ok(h_divergence_from_error(errors as f64 / labels.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        assert_eq!(h_divergence_from_error(0.5), 0.0);
        assert_eq!(h_divergence_from_error(0.0), 1.0);
    }

    #[test]
    fn too_few_samples() {
        let few = vec![vec![0.0]; 9];
        let many = vec![vec![0.0]; 50];
        assert!(matches!(
            estimate_h_divergence(&few, &many, &ProbeConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
