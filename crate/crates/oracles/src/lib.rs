//! Brute-force reference implementations for the `stickslip` test suites.
//!
//! Nothing here is fast and nothing here shares code with the main crate:
//! each function recomputes its quantity from first principles so that a
//! bug in the production path cannot hide behind the same bug in its check.

/// Central finite-difference gradient of `f` at `point`.
pub fn fd_gradient<F>(mut f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Largest relative error between two gradient vectors, using
/// `|a - b| / max(|a|, |b|, floor)` per coordinate.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Every monotone warping path between series of lengths `n` and `m`,
/// as a list of `(i, j)` cells from `(0, 0)` to `(n - 1, m - 1)`.
pub fn warping_paths(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn walk(
        i: usize,
        j: usize,
        n: usize,
        m: usize,
        path: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        path.push((i, j));
        if i == n - 1 && j == m - 1 {
            out.push(path.clone());
        } else {
            if i + 1 < n {
                walk(i + 1, j, n, m, path, out);
            }
            if j + 1 < m {
                walk(i, j + 1, n, m, path, out);
            }
            if i + 1 < n && j + 1 < m {
                walk(i + 1, j + 1, n, m, path, out);
            }
        }
        path.pop();
    }
    assert!(n > 0 && m > 0, "warping paths need non-empty series");
    let mut out = Vec::new();
    walk(0, 0, n, m, &mut Vec::new(), &mut out);
    out
}

/// DTW by exhaustive enumeration of warping paths with local cost `|a_i - b_j|`.
/// Only sensible for lengths up to about 8.
pub fn dtw_bruteforce(a: &[f64], b: &[f64]) -> f64 {
    warping_paths(a.len(), b.len())
        .iter()
        .map(|path| path.iter().map(|&(i, j)| (a[i] - b[j]).abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Stick-slip index evaluated straight from its definition.
pub fn ssi_direct(bit_speed: &[f64]) -> f64 {
    let max = bit_speed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = bit_speed.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = bit_speed.iter().sum::<f64>() / bit_speed.len() as f64;
    (max - min) / mean
}

/// d/dβ of mean((β·p − y)²) at β = 1, in closed form.
pub fn irm_beta_grad_closed_form(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    pred.iter().zip(target).map(|(p, y)| p * (p - y)).sum::<f64>() * 2.0 / n
}

/// d/dβ of mean((β·p − y)²) at β = 1 by central differences in β.
pub fn irm_beta_grad_fd(pred: &[f64], target: &[f64], h: f64) -> f64 {
    let risk = |beta: f64| {
        pred.iter()
            .zip(target)
            .map(|(p, y)| (beta * p - y).powi(2))
            .sum::<f64>()
            / pred.len() as f64
    };
    (risk(1.0 + h) - risk(1.0 - h)) / (2.0 * h)
}

/// Scalar parameter count of a generator made of `pairs` LSTM+LN pairs,
/// obtained by walking layer shapes one at a time.
pub fn generator_param_count(pairs: usize, features: usize, units: usize) -> usize {
    let mut total = 0;
    let mut width = features;
    for _ in 0..pairs {
        let kernel = [width, 4 * units];
        let recurrent = [units, 4 * units];
        let bias = [4 * units];
        total += kernel.iter().product::<usize>()
            + recurrent.iter().product::<usize>()
            + bias.iter().product::<usize>();
        let gain = [units];
        let shift = [units];
        total += gain[0] + shift[0];
        width = units;
    }
    total
}

/// Scalar parameter count of a dense stack `input -> widths[0] -> ... -> widths[last]`.
pub fn dense_stack_param_count(input: usize, widths: &[usize]) -> usize {
    let mut total = 0;
    let mut width = input;
    for &w in widths {
        total += width * w + w;
        width = w;
    }
    total
}
