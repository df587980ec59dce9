//! Batched LSTM over a full sequence with backpropagation through time.
//!
//! Layout: input `[B, T, F]`, kernel `[F, 4H]`, recurrent `[H, 4H]`,
//! bias `[4H]`, output `[B, T, H]`. Gate blocks inside `4H` are ordered
//! input, forget, cell candidate, output.

use super::linalg::{gemm, MatMut, MatRef};

#[derive(Clone, Copy, Debug)]
pub(crate) struct LstmDims {
    pub batch: usize,
    pub steps: usize,
    pub features: usize,
    pub units: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct LstmCache {
    /// Post-activation gates, `[B, T, 4H]`.
    gates: Vec<f64>,
    /// Cell state, `[B, T, H]`.
    cell: Vec<f64>,
    /// `tanh(cell)`, `[B, T, H]`.
    cell_tanh: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn forward(
    dims: LstmDims,
    x: &[f64],
    kernel: &[f64],
    recurrent: &[f64],
    bias: &[f64],
) -> (Vec<f64>, LstmCache) {
    let LstmDims { batch, steps, features, units } = dims;
    let g4 = 4 * units;
    let rows = batch * steps;

    // Input projection for all timesteps at once.
    let mut gates = vec![0.0; rows * g4];
    for row in gates.chunks_exact_mut(g4) {
        row.copy_from_slice(bias);
    }
    gemm(
        1.0,
        MatRef::rows(x, 0, rows, features),
        MatRef::rows(kernel, 0, features, g4),
        1.0,
        MatMut::rows(&mut gates, 0, rows, g4),
    );

    let mut out = vec![0.0; rows * units];
    let mut cell = vec![0.0; rows * units];
    let mut cell_tanh = vec![0.0; rows * units];

    for s in 0..steps {
        if s > 0 {
            gemm(
                1.0,
                MatRef::strided(&out, (s - 1) * units, batch, units, steps * units),
                MatRef::rows(recurrent, 0, units, g4),
                1.0,
                MatMut::strided(&mut gates, s * g4, batch, g4, steps * g4),
            );
        }
        for b in 0..batch {
            let row = b * steps + s;
            let gate = &mut gates[row * g4..(row + 1) * g4];
            for j in 0..units {
                gate[j] = sigmoid(gate[j]);
                gate[units + j] = sigmoid(gate[units + j]);
                gate[2 * units + j] = gate[2 * units + j].tanh();
                gate[3 * units + j] = sigmoid(gate[3 * units + j]);
            }
            let prev = if s > 0 { Some((row - 1) * units) } else { None };
            for j in 0..units {
                let c_prev = prev.map_or(0.0, |p| cell[p + j]);
                let c = gate[units + j] * c_prev + gate[j] * gate[2 * units + j];
                let tc = c.tanh();
                cell[row * units + j] = c;
                cell_tanh[row * units + j] = tc;
                out[row * units + j] = gate[3 * units + j] * tc;
            }
        }
    }
    (out, LstmCache { gates, cell, cell_tanh })
}

pub(crate) struct LstmGrads {
    pub input: Vec<f64>,
    pub kernel: Vec<f64>,
    pub recurrent: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn backward(
    dims: LstmDims,
    x: &[f64],
    kernel: &[f64],
    recurrent: &[f64],
    out: &[f64],
    cache: &LstmCache,
    d_out: &[f64],
) -> LstmGrads {
    let LstmDims { batch, steps, features, units } = dims;
    let g4 = 4 * units;
    let rows = batch * steps;

    let mut d_gates = vec![0.0; rows * g4];
    let mut dh_next = vec![0.0; batch * units];
    let mut dc_next = vec![0.0; batch * units];
    let mut d_recurrent = vec![0.0; units * g4];

    for s in (0..steps).rev() {
        for b in 0..batch {
            let row = b * steps + s;
            let gate = &cache.gates[row * g4..(row + 1) * g4];
            let dz = &mut d_gates[row * g4..(row + 1) * g4];
            for j in 0..units {
                let i_g = gate[j];
                let f_g = gate[units + j];
                let c_g = gate[2 * units + j];
                let o_g = gate[3 * units + j];
                let tc = cache.cell_tanh[row * units + j];
                let c_prev = if s > 0 { cache.cell[(row - 1) * units + j] } else { 0.0 };

                let dh = d_out[row * units + j] + dh_next[b * units + j];
                let d_o = dh * tc;
                let dc = dh * o_g * (1.0 - tc * tc) + dc_next[b * units + j];
                let d_i = dc * c_g;
                let d_c = dc * i_g;
                let d_f = dc * c_prev;
                dc_next[b * units + j] = dc * f_g;

                dz[j] = d_i * i_g * (1.0 - i_g);
                dz[units + j] = d_f * f_g * (1.0 - f_g);
                dz[2 * units + j] = d_c * (1.0 - c_g * c_g);
                dz[3 * units + j] = d_o * o_g * (1.0 - o_g);
            }
        }
        if s > 0 {
            let dz_s = MatRef::strided(&d_gates, s * g4, batch, g4, steps * g4);
            // dh_{s-1} = dZ_s @ U^T
            gemm(
                1.0,
                dz_s,
                MatRef::rows(recurrent, 0, units, g4).t(),
                0.0,
                MatMut::rows(&mut dh_next, 0, batch, units),
            );
            // dU += h_{s-1}^T @ dZ_s
            gemm(
                1.0,
                MatRef::strided(out, (s - 1) * units, batch, units, steps * units).t(),
                dz_s,
                1.0,
                MatMut::rows(&mut d_recurrent, 0, units, g4),
            );
        }
    }

    let mut d_kernel = vec![0.0; features * g4];
    gemm(
        1.0,
        MatRef::rows(x, 0, rows, features).t(),
        MatRef::rows(&d_gates, 0, rows, g4),
        0.0,
        MatMut::rows(&mut d_kernel, 0, features, g4),
    );
    let mut d_bias = vec![0.0; g4];
    for row in d_gates.chunks_exact(g4) {
        for (acc, v) in d_bias.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut d_input = vec![0.0; rows * features];
    gemm(
        1.0,
        MatRef::rows(&d_gates, 0, rows, g4),
        MatRef::rows(kernel, 0, features, g4).t(),
        0.0,
        MatMut::rows(&mut d_input, 0, rows, features),
    );
    LstmGrads {
        input: d_input,
        kernel: d_kernel,
        recurrent: d_recurrent,
        bias: d_bias,
    }
}
