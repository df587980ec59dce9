use super::layer_norm::{self, LayerNormCache};
use super::linalg::{gemm, MatMut, MatRef};
use super::lstm::{self, LstmCache, LstmDims};
use super::{Gradients, ParameterSet, Tensor};
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

enum Op {
    Input,
    Param(usize),
    Dense { x: Var, w: Var, b: Var },
    Relu { x: Var },
    Lstm { x: Var, w: Var, u: Var, b: Var, dims: LstmDims, cache: LstmCache },
    LayerNorm { x: Var, gain: Var, shift: Var, cache: LayerNormCache },
    LastStep { x: Var },
    Grl { x: Var, lambda: f64 },
    Mse { pred: Var, target: Vec<f64> },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    IrmPenalty { pred: Var, target: Vec<f64>, beta: f64, beta_grad: f64 },
    L2 { params: Vec<Var>, coefficient: f64 },
    Add { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
}

struct Node {
    /// `None` for parameter nodes, whose value lives in the parameter set.
    value: Option<Tensor>,
    op: Op,
}

/// A tape of operations recorded during one forward pass.
pub struct Graph<'p> {
    params: &'p ParameterSet,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Backward {
    node_grads: Vec<Option<Vec<f64>>>,
    param_grads: Gradients,
}

impl Backward {
    /// Gradient with respect to a node, `None` if no gradient reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node_grads[v.0].as_deref()
    }

    pub fn param_grads(&self) -> &Gradients {
        &self.param_grads
    }

    pub fn into_param_grads(self) -> Gradients {
        self.param_grads
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&contribution) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParameterSet) -> Self {
        Graph {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParameterSet {
        self.params
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(idx)) => &self.params.get(*idx).value,
            (None, _) => unreachable!("non-parameter node without value"),
        }
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Node for parameter `idx`; repeated calls return the same node.
    pub fn param(&mut self, idx: usize) -> Var {
        if let Some(v) = self.param_vars[idx] {
            return v;
        }
        self.nodes.push(Node { value: None, op: Op::Param(idx) });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[idx] = Some(v);
        v
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var> {
        let idx = self
            .params
            .index_of(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
        Ok(self.param(idx))
    }

    /// `activation(x @ w + b)` for `x: [B, I]`, `w: [I, O]`, `b: [O]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var, activation: Activation) -> Result<Var> {
        let (rows, inner) = self.value(x).dims2()?;
        let (w_in, out) = self.value(w).dims2()?;
        if w_in != inner || self.value(b).len() != out {
            return Err(Error::Shape(format!(
                "dense: input [{rows}, {inner}], kernel {:?}, bias {:?}",
                self.value(w).shape(),
                self.value(b).shape()
            )));
        }
        let mut y = vec![0.0; rows * out];
        let bias = self.value(b).data();
        for row in y.chunks_exact_mut(out) {
            row.copy_from_slice(bias);
        }
        gemm(
            1.0,
            MatRef::rows(self.value(x).data(), 0, rows, inner),
            MatRef::rows(self.value(w).data(), 0, inner, out),
            1.0,
            MatMut::rows(&mut y, 0, rows, out),
        );
        let pre = self.push(Tensor::new(vec![rows, out], y)?, Op::Dense { x, w, b });
        Ok(match activation {
            Activation::Linear => pre,
            Activation::Relu => self.relu(pre),
        })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.max(0.0)).collect();
        let shape = xv.shape().to_vec();
        self.push(Tensor::new(shape, data).expect("same shape"), Op::Relu { x })
    }

    /// LSTM over `x: [B, T, F]` returning the hidden sequence `[B, T, H]`.
    pub fn lstm(&mut self, x: Var, kernel: Var, recurrent: Var, bias: Var) -> Result<Var> {
        let (batch, steps, features) = self.value(x).dims3()?;
        let (k_in, g4) = self.value(kernel).dims2()?;
        let (u_in, u_out) = self.value(recurrent).dims2()?;
        let units = g4 / 4;
        if k_in != features
            || g4 % 4 != 0
            || u_in != units
            || u_out != g4
            || self.value(bias).len() != g4
        {
            return Err(Error::Shape(format!(
                "lstm: input {:?}, kernel {:?}, recurrent {:?}, bias {:?}",
                self.value(x).shape(),
                self.value(kernel).shape(),
                self.value(recurrent).shape(),
                self.value(bias).shape()
            )));
        }
        let dims = LstmDims { batch, steps, features, units };
        let (out, cache) = lstm::forward(
            dims,
            self.value(x).data(),
            self.value(kernel).data(),
            self.value(recurrent).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new(vec![batch, steps, units], out)?;
        Ok(self.push(value, Op::Lstm { x, w: kernel, u: recurrent, b: bias, dims, cache }))
    }

    /// Normalizes each row along the last axis, then applies `gain`/`shift`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        let width = *shape.last().ok_or_else(|| Error::Shape("layer_norm on a scalar".into()))?;
        if width == 0 || self.value(gain).len() != width || self.value(shift).len() != width {
            return Err(Error::Shape(format!(
                "layer_norm: input {shape:?}, gain {:?}, shift {:?}",
                self.value(gain).shape(),
                self.value(shift).shape()
            )));
        }
        let (y, cache) = layer_norm::forward(
            self.value(x).data(),
            width,
            self.value(gain).data(),
            self.value(shift).data(),
        );
        Ok(self.push(Tensor::new(shape, y)?, Op::LayerNorm { x, gain, shift, cache }))
    }

    /// `[B, T, H] -> [B, H]`, keeping the final timestep.
    pub fn last_step(&mut self, x: Var) -> Result<Var> {
        let (batch, steps, width) = self.value(x).dims3()?;
        if steps == 0 {
            return Err(Error::Shape("last_step on an empty sequence".into()));
        }
        let data = self.value(x).data();
        let mut y = Vec::with_capacity(batch * width);
        for b in 0..batch {
            let start = (b * steps + steps - 1) * width;
            y.extend_from_slice(&data[start..start + width]);
        }
        Ok(self.push(Tensor::new(vec![batch, width], y)?, Op::LastStep { x }))
    }

    /// Identity forward; multiplies the incoming gradient by `-lambda` backward.
    pub fn gradient_reversal(&mut self, x: Var, lambda: f64) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::Grl { x, lambda })
    }

    /// Mean squared error between `pred` (any shape, flattened) and `target`.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let p = self.value(pred).data();
        if p.len() != target.len() || p.is_empty() {
            return Err(Error::Shape(format!(
                "mse: {} predictions vs {} targets",
                p.len(),
                target.len()
            )));
        }
        let n = p.len() as f64;
        let loss = p.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target: target.to_vec() }))
    }

    /// Mean softmax cross-entropy of `logits: [N, K]` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, k) = self.value(logits).dims2()?;
        if labels.len() != n || n == 0 {
            return Err(Error::Shape(format!("cross_entropy: {n} rows vs {} labels", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Input(format!("class label {bad} >= {k} logits")));
        }
        let data = self.value(logits).data();
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for r in 0..n {
            let row = &data[r * k..(r + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..k {
                let e = (row[j] - max).exp();
                probs[r * k + j] = e;
                z += e;
            }
            for j in 0..k {
                probs[r * k + j] /= z;
            }
            loss += z.ln() + max - row[labels[r]];
        }
        loss /= n as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, labels: labels.to_vec(), probs },
        ))
    }

    /// Squared derivative of `mean((beta * pred - target)^2)` with respect to
    /// the scalar `beta`, evaluated at the given `beta`.
    ///
    /// The backward pass differentiates that derivative once more with
    /// respect to `pred`, which is exact because `beta` is a scalar.
    pub fn irm_penalty(&mut self, pred: Var, target: &[f64], beta: f64) -> Result<Var> {
        let p = self.value(pred).data();
        if p.len() != target.len() || p.is_empty() {
            return Err(Error::Shape(format!(
                "irm_penalty: {} predictions vs {} targets",
                p.len(),
                target.len()
            )));
        }
        let beta_grad = scaled_mse_beta_grad(p, target, beta);
        Ok(self.push(
            Tensor::scalar(beta_grad * beta_grad),
            Op::IrmPenalty { pred, target: target.to_vec(), beta, beta_grad },
        ))
    }

    /// `coefficient * sum of squares` over regularized parameters.
    pub fn l2(&mut self, coefficient: f64) -> Var {
        let indices: Vec<usize> = (0..self.params.len())
            .filter(|&i| self.params.get(i).regularized)
            .collect();
        let vars: Vec<Var> = indices.iter().map(|&i| self.param(i)).collect();
        let value = super::l2_penalty(self.params, coefficient);
        self.push(Tensor::scalar(value), Op::L2 { params: vars, coefficient })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(Error::Shape(format!("add: {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let shape = av.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v * factor).collect();
        let shape = xv.shape().to_vec();
        self.push(Tensor::new(shape, data).expect("same shape"), Op::Scale { x, factor })
    }

    /// Reverse pass from the scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Backward> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        let mut param_grads = Gradients::zeros_like(self.params);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(p) => {
                    for (acc, v) in param_grads.get_mut(*p).iter_mut().zip(&g) {
                        *acc += v;
                    }
                }
                Op::Dense { x, w, b } => {
                    let (rows, inner) = self.value(*x).dims2()?;
                    let out = self.value(*b).len();
                    let mut dx = vec![0.0; rows * inner];
                    gemm(
                        1.0,
                        MatRef::rows(&g, 0, rows, out),
                        MatRef::rows(self.value(*w).data(), 0, inner, out).t(),
                        0.0,
                        MatMut::rows(&mut dx, 0, rows, inner),
                    );
                    let mut dw = vec![0.0; inner * out];
                    gemm(
                        1.0,
                        MatRef::rows(self.value(*x).data(), 0, rows, inner).t(),
                        MatRef::rows(&g, 0, rows, out),
                        0.0,
                        MatMut::rows(&mut dw, 0, inner, out),
                    );
                    let mut db = vec![0.0; out];
                    for row in g.chunks_exact(out) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Relu { x } => {
                    let dx = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(pre, d)| if *pre > 0.0 { *d } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Lstm { x, w, u, b, dims, cache } => {
                    let lg = lstm::backward(
                        *dims,
                        self.value(*x).data(),
                        self.value(*w).data(),
                        self.value(*u).data(),
                        self.nodes[idx].value.as_ref().unwrap().data(),
                        cache,
                        &g,
                    );
                    accumulate(&mut grads, *b, lg.bias);
                    accumulate(&mut grads, *u, lg.recurrent);
                    accumulate(&mut grads, *w, lg.kernel);
                    accumulate(&mut grads, *x, lg.input);
                }
                Op::LayerNorm { x, gain, shift, cache } => {
                    let width = self.value(*gain).len();
                    let (dx, dgain, dshift) =
                        layer_norm::backward(width, self.value(*gain).data(), cache, &g);
                    accumulate(&mut grads, *shift, dshift);
                    accumulate(&mut grads, *gain, dgain);
                    accumulate(&mut grads, *x, dx);
                }
                Op::LastStep { x } => {
                    let (batch, steps, width) = self.value(*x).dims3()?;
                    let mut dx = vec![0.0; batch * steps * width];
                    for bi in 0..batch {
                        let start = (bi * steps + steps - 1) * width;
                        dx[start..start + width].copy_from_slice(&g[bi * width..(bi + 1) * width]);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Grl { x, lambda } => {
                    // A zero gain detaches the input entirely.
                    if *lambda != 0.0 {
                        let dx = g.iter().map(|v| -lambda * v).collect();
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred).data();
                    let scale = 2.0 * g[0] / p.len() as f64;
                    let dp = p.iter().zip(target).map(|(a, b)| scale * (a - b)).collect();
                    accumulate(&mut grads, *pred, dp);
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let (n, k) = self.value(*logits).dims2()?;
                    let scale = g[0] / n as f64;
                    let mut dl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (r, &label) in labels.iter().enumerate() {
                        dl[r * k + label] -= scale;
                    }
                    accumulate(&mut grads, *logits, dl);
                }
                Op::IrmPenalty { pred, target, beta, beta_grad } => {
                    let p = self.value(*pred).data();
                    let mixed = scaled_mse_beta_grad_wrt_pred(p, target, *beta);
                    let scale = g[0] * 2.0 * beta_grad;
                    let dp = mixed.iter().map(|m| scale * m).collect();
                    accumulate(&mut grads, *pred, dp);
                }
                Op::L2 { params, coefficient } => {
                    if *coefficient != 0.0 {
                        for &pv in params.iter().rev() {
                            let dp = self
                                .value(pv)
                                .data()
                                .iter()
                                .map(|v| g[0] * 2.0 * coefficient * v)
                                .collect();
                            accumulate(&mut grads, pv, dp);
                        }
                    }
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Scale { x, factor } => {
                    let dx = g.iter().map(|v| v * factor).collect();
                    accumulate(&mut grads, *x, dx);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Backward { node_grads: grads, param_grads })
    }
}

/// d/dβ of `mean((β·p − y)²)` = `(2/N) Σ p (β p − y)`.
pub fn scaled_mse_beta_grad(pred: &[f64], target: &[f64], beta: f64) -> f64 {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(p, y)| p * (beta * p - y))
        .sum::<f64>()
        * 2.0
        / n
}

/// ∂/∂p_k of [`scaled_mse_beta_grad`] = `(2/N)(2 β p_k − y_k)`.
fn scaled_mse_beta_grad_wrt_pred(pred: &[f64], target: &[f64], beta: f64) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(p, y)| 2.0 * (2.0 * beta * p - y) / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Role;

    fn set_with(values: &[(&str, Vec<usize>, Vec<f64>)]) -> ParameterSet {
        let mut set = ParameterSet::new();
        for (name, shape, data) in values {
            set.add(*name, Role::Kernel, true, Tensor::new(shape.clone(), data.clone()).unwrap())
                .unwrap();
        }
        set
    }

    #[test]
    fn identity_dense_is_passthrough() {
        let set = set_with(&[
            ("w", vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]),
            ("b", vec![3], vec![0.; 3]),
        ]);
        let mut g = Graph::new(&set);
        let x = g.input(Tensor::new(vec![2, 3], vec![1., -2., 3., 4., 5., -6.]).unwrap());
        let (w, b) = (g.param(0), g.param(1));
        let y = g.dense(x, w, b, Activation::Linear).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn relu_on_negative_inputs_blocks_gradient() {
        let set = set_with(&[("w", vec![2, 2], vec![1., 0., 0., 1.]), ("b", vec![2], vec![0.; 2])]);
        let mut g = Graph::new(&set);
        let x = g.input(Tensor::new(vec![1, 2], vec![-1., -3.]).unwrap());
        let (w, b) = (g.param(0), g.param(1));
        let y = g.dense(x, w, b, Activation::Relu).unwrap();
        assert!(g.value(y).data().iter().all(|v| *v == 0.0));
        let loss = g.mse(y, &[1.0, 1.0]).unwrap();
        let back = g.backward(loss).unwrap();
        assert!(back.grad(x).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grl_forward_identity_backward_reversed() {
        let set = ParameterSet::new();
        for lambda in [0.0, 1.0, 10.0, 100.0, 1000.0] {
            let mut g = Graph::new(&set);
            let x = g.input(Tensor::vector(vec![0.5, -1.5, 2.0]));
            let r = g.gradient_reversal(x, lambda);
            assert_eq!(g.value(r).data(), g.value(x).data());
            let s = g.scale(r, 1.0);
            let loss = g.mse(s, &[0.0, 0.0, 0.0]).unwrap();
            let back = g.backward(loss).unwrap();
            let upstream = back.grad(r).unwrap();
            match back.grad(x) {
                Some(dx) => {
                    for (d, u) in dx.iter().zip(upstream) {
                        assert_eq!(*d, -lambda * u);
                    }
                }
                None => assert_eq!(lambda, 0.0),
            }
        }
    }

    #[test]
    fn mse_values() {
        let set = ParameterSet::new();
        let mut g = Graph::new(&set);
        let p = g.input(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let same = g.mse(p, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.value(same).item(), 0.0);
        let off = g.mse(p, &[0.5, 1.5, 2.5]).unwrap();
        assert!((g.value(off).item() - 0.25).abs() < 1e-15);
        let back = g.backward(off).unwrap();
        for v in back.grad(p).unwrap() {
            assert!((v - 2.0 * 0.5 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_limits() {
        let set = ParameterSet::new();
        let mut g = Graph::new(&set);
        let uniform = g.input(Tensor::new(vec![2, 4], vec![0.3; 8]).unwrap());
        let ce = g.cross_entropy(uniform, &[0, 3]).unwrap();
        assert!((g.value(ce).item() - 4f64.ln()).abs() < 1e-12);
        let confident = g.input(Tensor::new(vec![1, 3], vec![1e4, 0.0, -5.0]).unwrap());
        let ce = g.cross_entropy(confident, &[0]).unwrap();
        assert!(g.value(ce).item().abs() < 1e-12);
        assert!(g.cross_entropy(confident, &[3]).is_err());
    }

    #[test]
    fn backward_requires_scalar_root() {
        let set = ParameterSet::new();
        let mut g = Graph::new(&set);
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn shape_errors() {
        let set = set_with(&[("w", vec![2, 2], vec![0.; 4]), ("b", vec![3], vec![0.; 3])]);
        let mut g = Graph::new(&set);
        let x = g.input(Tensor::new(vec![1, 2], vec![1., 1.]).unwrap());
        let (w, b) = (g.param(0), g.param(1));
        assert!(matches!(g.dense(x, w, b, Activation::Linear), Err(Error::Shape(_))));
        assert!(matches!(g.lstm(x, w, w, b), Err(Error::Shape(_))));
    }
}
