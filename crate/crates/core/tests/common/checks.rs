//! Contract checks shared by the integration tests and the acceptance run.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stickslip::autodiff::{Gradients, Graph, ParameterSet, Role, Tensor};
use stickslip::dataset::SequenceSample;
use stickslip::metrics::dtw;
use stickslip::models::{batch_tensor, ModelBundle, ModelKind};
use stickslip::objectives::{adg_loss, erm_loss, erm_loss_domains, estimate_h_divergence, irm_loss, ProbeConfig};
use stickslip_oracles::{dtw_bruteforce, irm_beta_grad_closed_form, irm_beta_grad_fd};

use super::{rng, samples, tiny_bundle, uniform};

pub const GRL_LAMBDAS: [f64; 5] = [0.0, 1.0, 10.0, 100.0, 1000.0];

/// Forward value and input gradient of a reversal node against the identity
/// and `-lambda * upstream`, compared with `==` so that a zero gain may
/// produce either signed zero. Returns the first mismatch.
pub fn grl_contract(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = 7;
    let mut p = ParameterSet::new();
    p.add("x", Role::Kernel, false, Tensor::vector(uniform(&mut r, n, 3.0))).unwrap();
    let target = uniform(&mut r, n, 1.0);
    for lambda in GRL_LAMBDAS {
        let mut g = Graph::new(&p);
        let x = g.param(0);
        let y = g.gradient_reversal(x, lambda);
        if g.value(y) != g.value(x) {
            return Err(format!("lambda {lambda}: forward is not the identity"));
        }
        let root = g.mse(y, &target).unwrap();
        let back = g.backward(root).unwrap();
        let upstream = back.grad(y).ok_or("no gradient reached the reversal output")?.to_vec();
        let dx = back.param_grads().get(0).to_vec();
        for (d, u) in dx.iter().zip(&upstream) {
            if *d != -lambda * u {
                return Err(format!("lambda {lambda}: {d} != -{lambda} * {u}"));
            }
        }
    }
    Ok(())
}

fn bits_of(bundle: &ModelBundle, g: &Gradients, prefixes: &[&str]) -> Vec<u64> {
    (0..bundle.params.len())
        .filter(|&i| prefixes.iter().any(|p| bundle.params.get(i).name.starts_with(p)))
        .flat_map(|i| g.get(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

/// ADG at zero gain against ERM on the generator and SSI head, and IRM at
/// zero penalty weight against ERM over the same domain batches.
pub fn objective_reductions(seed: u64) -> Result<(), String> {
    let bundle = tiny_bundle(ModelKind::Adg, 3, 3, 1e-3, seed);
    let mut r = rng(seed);
    let data = samples(&mut r, 9, 3);
    let refs: Vec<&SequenceSample> = data.iter().collect();
    let erm = erm_loss(&bundle, &refs).map_err(|e| e.to_string())?;
    let adg = adg_loss(&bundle, &refs, 0.0).map_err(|e| e.to_string())?;
    let shared = ["generator/", "ssi_head/"];
    if bits_of(&bundle, &adg.gradients, &shared) != bits_of(&bundle, &erm.gradients, &shared) {
        return Err(format!("seed {seed}: ADG at zero gain differs from ERM"));
    }

    let bundle = tiny_bundle(ModelKind::Irm, 3, 1, 1e-3, seed);
    let data = samples(&mut r, 12, 3);
    let domains: Vec<Vec<&SequenceSample>> =
        (0..3).map(|d| data.iter().filter(|s| s.domain_id == Some(d)).collect()).collect();
    let irm = irm_loss(&bundle, &domains, 0.0).map_err(|e| e.to_string())?;
    let erm = erm_loss_domains(&bundle, &domains).map_err(|e| e.to_string())?;
    if bits_of(&bundle, &irm.gradients, &shared) != bits_of(&bundle, &erm.gradients, &shared) {
        return Err(format!("seed {seed}: IRM at zero weight differs from ERM"));
    }
    Ok(())
}

/// DTW against path enumeration on `pairs` random pairs of length at most 8,
/// plus self distance and symmetry.
pub fn dtw_agreement(seed: u64, pairs: usize) -> Result<(), String> {
    use rand::Rng;
    let mut r = rng(seed);
    for k in 0..pairs {
        let (n, m) = (r.random_range(1..=8), r.random_range(1..=8));
        let a = uniform(&mut r, n, 5.0);
        let b = uniform(&mut r, m, 5.0);
        let got = dtw(&a, &b).unwrap();
        let want = dtw_bruteforce(&a, &b);
        if got != want {
            return Err(format!("pair {k}: {got} vs brute force {want}"));
        }
        if dtw(&a, &a).unwrap() != 0.0 {
            return Err(format!("pair {k}: dtw(x, x) is not zero"));
        }
        let back = dtw(&b, &a).unwrap();
        if (back - got).abs() > 1e-12 {
            return Err(format!("pair {k}: asymmetric {got} vs {back}"));
        }
    }
    Ok(())
}

fn predictions(bundle: &ModelBundle, batch: &[&SequenceSample]) -> Vec<f64> {
    bundle.forward_ssi(&batch_tensor(batch)).unwrap()
}

/// Largest relative gap between the reported IRM penalty and the closed-form
/// and finite-difference beta-gradient oracles.
pub fn irm_penalty_gap(seed: u64) -> f64 {
    let bundle = tiny_bundle(ModelKind::Irm, 3, 1, 0.0, seed);
    let mut r = rng(seed + 200);
    let data = samples(&mut r, 10, 2);
    let domains: Vec<Vec<&SequenceSample>> =
        (0..2).map(|d| data.iter().filter(|s| s.domain_id == Some(d)).collect()).collect();
    let penalty = irm_loss(&bundle, &domains, 1.0).unwrap().breakdown.irm_penalty.unwrap();
    let mut closed = 0.0;
    let mut fd = 0.0;
    for d in &domains {
        let p = predictions(&bundle, d);
        let y: Vec<f64> = d.iter().map(|s| s.ssi).collect();
        closed += irm_beta_grad_closed_form(&p, &y).powi(2);
        fd += irm_beta_grad_fd(&p, &y, 1e-5).powi(2);
    }
    let gap_closed = (penalty - closed).abs() / closed.max(1.0);
    let gap_fd = (penalty - fd).abs() / fd.max(1.0);
    gap_closed.max(gap_fd)
}

/// IRM penalty when every domain's residuals are orthogonal to its
/// predictions, which makes beta = 1 stationary per domain.
pub fn per_domain_optimal_penalty(seed: u64) -> f64 {
    use rand::Rng;
    let bundle = tiny_bundle(ModelKind::Irm, 3, 1, 0.0, seed);
    let mut r = rng(seed);
    let mut data = samples(&mut r, 8, 2);
    for d in 0..2 {
        let idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].domain_id == Some(d)).collect();
        let refs: Vec<&SequenceSample> = idx.iter().map(|&i| &data[i]).collect();
        let p = predictions(&bundle, &refs);
        let mut res: Vec<f64> = (0..p.len()).map(|_| r.random_range(-0.5..0.5)).collect();
        let proj = res.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() / p.iter().map(|v| v * v).sum::<f64>();
        res.iter_mut().zip(&p).for_each(|(a, b)| *a -= proj * b);
        for (k, &i) in idx.iter().enumerate() {
            data[i].ssi = p[k] + res[k];
        }
    }
    let domains: Vec<Vec<&SequenceSample>> =
        (0..2).map(|d| data.iter().filter(|s| s.domain_id == Some(d)).collect()).collect();
    irm_loss(&bundle, &domains, 10.0).unwrap().breakdown.irm_penalty.unwrap()
}

pub fn gaussian_cloud(r: &mut ChaCha8Rng, n: usize, dim: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|k| {
                    let v: f64 = StandardNormal.sample(r);
                    if k == 0 { v + shift } else { v }
                })
                .collect()
        })
        .collect()
}

/// H-divergence estimates for two draws of one Gaussian and for a Gaussian
/// against a copy shifted by ten standard deviations, 2000 points a side.
pub fn h_divergence_pair(seed: u64) -> (f64, f64) {
    let mut r = rng(seed + 400);
    let probe = ProbeConfig { seed, ..ProbeConfig::default() };
    let a = gaussian_cloud(&mut r, 2000, 4, 0.0);
    let same = gaussian_cloud(&mut r, 2000, 4, 0.0);
    let far = gaussian_cloud(&mut r, 2000, 4, 10.0);
    (estimate_h_divergence(&a, &same, &probe).unwrap(), estimate_h_divergence(&a, &far, &probe).unwrap())
}
