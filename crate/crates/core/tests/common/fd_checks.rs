//! Finite-difference gradient checks, one relative error per random configuration.

use super::{rng, samples, tiny_bundle, uniform};
use rand::Rng;
use stickslip::autodiff::{Activation, Gradients, Graph, ParameterSet, Role, Tensor, Var};
use stickslip::models::{ModelBundle, ModelKind};
use stickslip::objectives::{adg_loss, erm_loss, irm_loss, LossBreakdown};
use stickslip_oracles::{fd_gradient, max_relative_error};

pub const TOLERANCE: f64 = 1e-4;
pub const FLOOR: f64 = 1e-5;
pub const STEP: f64 = 1e-5;
pub const CONFIGS: u64 = 20;

fn params(shapes: &[(&str, Vec<usize>)], rng: &mut rand_chacha::ChaCha8Rng, regularized: bool) -> ParameterSet {
    let mut p = ParameterSet::new();
    for (name, shape) in shapes {
        let n = shape.iter().product();
        p.add(*name, Role::Kernel, regularized, Tensor::new(shape.clone(), uniform(rng, n, 1.0)).unwrap()).unwrap();
    }
    p
}

/// Max relative error between the graph gradient and central differences,
/// with every parameter perturbed.
fn graph_check(p: &ParameterSet, build: impl Fn(&mut Graph<'_>) -> Var) -> f64 {
    let value = |set: &ParameterSet| {
        let mut g = Graph::new(set);
        let root = build(&mut g);
        g.value(root).item()
    };
    let mut g = Graph::new(p);
    let root = build(&mut g);
    let analytic = g.backward(root).unwrap().into_param_grads().flatten();
    let numeric = fd_gradient(
        |flat| {
            let mut q = p.clone();
            q.assign_flat(flat);
            value(&q)
        },
        &p.flatten(),
        STEP,
    );
    max_relative_error(&analytic, &numeric, FLOOR)
}

pub fn dense_linear_and_relu() -> Vec<f64> {
    let mut errors = Vec::new();
    for seed in 0..CONFIGS {
        let mut r = rng(seed);
        let (b, i, o) = (r.random_range(1..5), r.random_range(1..6), r.random_range(1..6));
        let target = uniform(&mut r, b * o, 1.0);
        let p = params(&[("x", vec![b, i]), ("w", vec![i, o]), ("b", vec![o])], &mut r, false);
        let act = if seed % 2 == 0 { Activation::Linear } else { Activation::Relu };
        errors.push(graph_check(&p, |g| {
            let (x, w, bias) = (g.param(0), g.param(1), g.param(2));
            let y = g.dense(x, w, bias, act).unwrap();
            g.mse(y, &target).unwrap()
        }));
    }
    errors
}

pub fn lstm_sequence_output() -> Vec<f64> {
    let mut errors = Vec::new();
    for seed in 0..CONFIGS {
        let mut r = rng(100 + seed);
        let (b, t, f, h) = (r.random_range(1..4), r.random_range(1..6), r.random_range(1..4), r.random_range(1..5));
        let target = uniform(&mut r, b * t * h, 1.0);
        let p = params(
            &[("x", vec![b, t, f]), ("k", vec![f, 4 * h]), ("u", vec![h, 4 * h]), ("bias", vec![4 * h])],
            &mut r,
            false,
        );
        errors.push(graph_check(&p, |g| {
            let (x, k, u, bias) = (g.param(0), g.param(1), g.param(2), g.param(3));
            let y = g.lstm(x, k, u, bias).unwrap();
            g.mse(y, &target).unwrap()
        }));
    }
    errors
}

pub fn layer_norm_rank_two_and_three() -> Vec<f64> {
    let mut errors = Vec::new();
    for seed in 0..CONFIGS {
        let mut r = rng(200 + seed);
        let h = r.random_range(2..6);
        let shape = if seed % 2 == 0 { vec![r.random_range(1..4), h] } else { vec![2, r.random_range(1..4), h] };
        let n: usize = shape.iter().product();
        let target = uniform(&mut r, n, 1.0);
        let p = params(&[("x", shape), ("gain", vec![h]), ("shift", vec![h])], &mut r, false);
        errors.push(graph_check(&p, |g| {
            let (x, gain, shift) = (g.param(0), g.param(1), g.param(2));
            let y = g.layer_norm(x, gain, shift).unwrap();
            g.mse(y, &target).unwrap()
        }));
    }
    errors
}

pub fn mse_loss() -> Vec<f64> {
    let mut errors = Vec::new();
    for seed in 0..CONFIGS {
        let mut r = rng(300 + seed);
        let n = r.random_range(1..10);
        let target = uniform(&mut r, n, 2.0);
        let p = params(&[("pred", vec![n])], &mut r, false);
        errors.push(graph_check(&p, |g| {
            let x = g.param(0);
            g.mse(x, &target).unwrap()
        }));
    }
    errors
}

pub fn cross_entropy_loss() -> Vec<f64> {
    let mut errors = Vec::new();
    for seed in 0..CONFIGS {
        let mut r = rng(400 + seed);
        let (n, k) = (r.random_range(1..6), r.random_range(2..6));
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let p = params(&[("logits", vec![n, k])], &mut r, false);
        errors.push(graph_check(&p, |g| {
            let x = g.param(0);
            g.cross_entropy(x, &labels).unwrap()
        }));
    }
    errors
}

pub fn l2_penalty() -> Vec<f64> {
    let mut errors = Vec::new();
    for seed in 0..CONFIGS {
        let mut r = rng(500 + seed);
        let coef = r.random_range(1e-5..1.0);
        let mut p = params(&[("a", vec![r.random_range(1..5), 3])], &mut r, true);
        p.add("free", Role::Bias, false, Tensor::vector(uniform(&mut r, 4, 1.0))).unwrap();
        errors.push(graph_check(&p, |g| {
            let a = g.param(0);
            let target = vec![0.0; g.value(a).len()];
            let fit = g.mse(a, &target).unwrap();
            let l2 = g.l2(coef);
            g.add(fit, l2).unwrap()
        }));
    }
    errors
}

pub fn gradient_reversal_is_scaled_identity() -> Vec<f64> {
    let mut errors = Vec::new();
    for (seed, lambda) in (0..CONFIGS).zip([0.5, 1.0, 3.0, 10.0].into_iter().cycle()) {
        let mut r = rng(600 + seed);
        let n = r.random_range(1..8);
        let target = uniform(&mut r, n, 1.0);
        let p = params(&[("x", vec![n])], &mut r, false);
        let mut g = Graph::new(&p);
        let x = g.param(0);
        let y = g.gradient_reversal(x, lambda);
        let root = g.mse(y, &target).unwrap();
        let analytic = g.backward(root).unwrap().into_param_grads().flatten();
        let numeric: Vec<f64> = fd_gradient(
            |v| v.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64,
            &p.flatten(),
            STEP,
        )
        .into_iter()
        .map(|d| -lambda * d)
        .collect();
        errors.push(max_relative_error(&analytic, &numeric, FLOOR));
    }
    errors
}

pub fn irm_penalty_node_double_backward() -> Vec<f64> {
    let mut errors = Vec::new();
    for seed in 0..CONFIGS {
        let mut r = rng(700 + seed);
        let n = r.random_range(1..10);
        let target = uniform(&mut r, n, 2.0);
        let p = params(&[("pred", vec![n])], &mut r, false);
        errors.push(graph_check(&p, |g| {
            let x = g.param(0);
            g.irm_penalty(x, &target, 1.0).unwrap()
        }));
    }
    errors
}

pub fn generator_end_to_end_short_sequences() -> Vec<f64> {
    let mut errors = Vec::new();
    for seed in 0..CONFIGS {
        let mut r = rng(800 + seed);
        let bundle = tiny_bundle(ModelKind::Baseline, 3, 1, 1e-3, seed);
        let b = r.random_range(1..4);
        let x = Tensor::new(vec![b, 4, 5], uniform(&mut r, b * 20, 1.5)).unwrap();
        let target = uniform(&mut r, b, 1.0);
        errors.push(graph_check(&bundle.params, |g| {
            let input = g.input(x.clone());
            let z = bundle.generator_graph(g, input).unwrap();
            let y = bundle.ssi_graph(g, z).unwrap();
            let fit = g.mse(y, &target).unwrap();
            let l2 = g.l2(1e-3);
            g.add(fit, l2).unwrap()
        }));
    }
    errors
}

fn component_fd(bundle: &ModelBundle, f: impl Fn(&ModelBundle) -> LossBreakdown, pick: impl Fn(&LossBreakdown) -> f64) -> Vec<f64> {
    fd_gradient(
        |flat| {
            let mut b = bundle.clone();
            b.params.assign_flat(flat);
            pick(&f(&b))
        },
        &bundle.params.flatten(),
        STEP,
    )
}

fn param_mask(bundle: &ModelBundle, prefix: &str) -> Vec<bool> {
    bundle.params.iter().flat_map(|p| std::iter::repeat_n(p.name.starts_with(prefix), p.value.len())).collect()
}

pub fn adg_total_with_reversed_generator_gradient() -> Vec<f64> {
    let mut errors = Vec::new();
    for (seed, lambda) in (0..CONFIGS).zip([0.0, 0.5, 1.0, 10.0].into_iter().cycle()) {
        let mut r = rng(900 + seed);
        let domains = r.random_range(2..4);
        let n = r.random_range(domains..6);
        let data = samples(&mut r, n, domains);
        let batch: Vec<_> = data.iter().collect();
        let bundle = tiny_bundle(ModelKind::Adg, 2, domains, 1e-3, seed);
        let loss = |b: &ModelBundle| adg_loss(b, &batch, lambda).unwrap().breakdown;
        let analytic = adg_loss(&bundle, &batch, lambda).unwrap().gradients.flatten();
        let fit = component_fd(&bundle, loss, |l| l.ssi_mse + l.l2);
        let ce = component_fd(&bundle, loss, |l| l.domain_ce.unwrap());
        let generator = param_mask(&bundle, "generator/");
        let expected: Vec<f64> = (0..fit.len())
            .map(|i| if generator[i] { fit[i] - lambda * ce[i] } else { fit[i] + ce[i] })
            .collect();
        errors.push(max_relative_error(&analytic, &expected, FLOOR));
    }
    errors
}

pub fn irm_total_including_penalty() -> Vec<f64> {
    let mut errors = Vec::new();
    for (seed, alpha) in (0..CONFIGS).zip([0.0, 0.1, 1.0, 10.0].into_iter().cycle()) {
        let mut r = rng(1000 + seed);
        let n_domains = r.random_range(1..4);
        let n = 2 * n_domains + r.random_range(0..3);
        let data = samples(&mut r, n, n_domains);
        let domains: Vec<Vec<_>> =
            (0..n_domains).map(|d| data.iter().filter(|s| s.domain_id == Some(d)).collect()).collect();
        let bundle = tiny_bundle(ModelKind::Irm, 2, 1, 1e-3, seed);
        let analytic = irm_loss(&bundle, &domains, alpha).unwrap().gradients.flatten();
        let numeric = component_fd(&bundle, |b| irm_loss(b, &domains, alpha).unwrap().breakdown, |l| l.total);
        errors.push(max_relative_error(&analytic, &numeric, FLOOR));
    }
    errors
}

pub fn erm_total_through_full_windows() -> Vec<f64> {
    let mut errors = Vec::new();
    for seed in 0..CONFIGS {
        let mut r = rng(1100 + seed);
        let n = r.random_range(1..4);
        let data = samples(&mut r, n, 1);
        let batch: Vec<_> = data.iter().collect();
        let bundle = tiny_bundle(ModelKind::Baseline, 2, 1, 1e-2, seed);
        let analytic: Gradients = erm_loss(&bundle, &batch).unwrap().gradients;
        let numeric = component_fd(&bundle, |b| erm_loss(b, &batch).unwrap().breakdown, |l| l.total);
        errors.push(max_relative_error(&analytic.flatten(), &numeric, FLOOR));
    }
    errors
}

/// Every check with the label it is reported under.
pub const ALL: &[(&str, fn() -> Vec<f64>)] = &[
    ("dense_linear_and_relu", dense_linear_and_relu),
    ("lstm_sequence_output", lstm_sequence_output),
    ("layer_norm_rank_two_and_three", layer_norm_rank_two_and_three),
    ("mse_loss", mse_loss),
    ("cross_entropy_loss", cross_entropy_loss),
    ("l2_penalty", l2_penalty),
    ("gradient_reversal_is_scaled_identity", gradient_reversal_is_scaled_identity),
    ("irm_penalty_node_double_backward", irm_penalty_node_double_backward),
    ("generator_end_to_end_short_sequences", generator_end_to_end_short_sequences),
    ("adg_total_with_reversed_generator_gradient", adg_total_with_reversed_generator_gradient),
    ("irm_total_including_penalty", irm_total_including_penalty),
    ("erm_total_through_full_windows", erm_total_through_full_windows),
];
