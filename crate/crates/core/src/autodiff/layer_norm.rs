//! Layer normalization over the last axis.

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub(crate) struct LayerNormCache {
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

pub(crate) fn forward(x: &[f64], width: usize, gain: &[f64], shift: &[f64]) -> (Vec<f64>, LayerNormCache) {
    let rows = x.len() / width;
    let mut y = vec![0.0; x.len()];
    let mut normalized = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * width..(r + 1) * width];
        let mean = row.iter().sum::<f64>() / width as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std[r] = inv;
        for j in 0..width {
            let n = (row[j] - mean) * inv;
            normalized[r * width + j] = n;
            y[r * width + j] = gain[j] * n + shift[j];
        }
    }
    (y, LayerNormCache { normalized, inv_std })
}

/// Returns `(d_input, d_gain, d_shift)`.
pub(crate) fn backward(
    width: usize,
    gain: &[f64],
    cache: &LayerNormCache,
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = dy.len() / width;
    let mut dx = vec![0.0; dy.len()];
    let mut d_gain = vec![0.0; width];
    let mut d_shift = vec![0.0; width];
    let mut d_norm = vec![0.0; width];
    for r in 0..rows {
        let n_row = &cache.normalized[r * width..(r + 1) * width];
        let dy_row = &dy[r * width..(r + 1) * width];
        let mut mean_dn = 0.0;
        let mut mean_dn_n = 0.0;
        for j in 0..width {
            d_gain[j] += dy_row[j] * n_row[j];
            d_shift[j] += dy_row[j];
            d_norm[j] = dy_row[j] * gain[j];
            mean_dn += d_norm[j];
            mean_dn_n += d_norm[j] * n_row[j];
        }
        mean_dn /= width as f64;
        mean_dn_n /= width as f64;
        let inv = cache.inv_std[r];
        for j in 0..width {
            dx[r * width + j] = inv * (d_norm[j] - mean_dn - n_row[j] * mean_dn_n);
        }
    }
    (dx, d_gain, d_shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_affine_standardizes_rows() {
        let x = [1.0, 2.0, 3.0, 10.0, -4.0, 0.5, 0.5, 7.0];
        let (y, _) = forward(&x, 4, &[1.0; 4], &[0.0; 4]);
        for row in y.chunks(4) {
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_row_maps_to_zero() {
        let (y, _) = forward(&[3.0; 5], 5, &[1.0; 5], &[0.0; 5]);
        assert!(y.iter().all(|v| *v == 0.0));
    }
}
