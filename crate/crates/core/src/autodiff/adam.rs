use serde::{Deserialize, Serialize};

use super::{Gradients, ParameterSet};

/// Adam with bias correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new(1e-3)
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0 }
    }
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    /// One update of every parameter.
    pub fn step(&self, params: &mut ParameterSet, grads: &Gradients, state: &mut AdamState) {
        self.step_masked(params, grads, state, |_| true);
    }

    /// One update of the parameters for which `trainable(index)` holds.
    /// Other parameters and their moments are left untouched.
    pub fn step_masked(
        &self,
        params: &mut ParameterSet,
        grads: &Gradients,
        state: &mut AdamState,
        trainable: impl Fn(usize) -> bool,
    ) {
        state.t += 1;
        let t = state.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for idx in 0..params.len() {
            if !trainable(idx) {
                continue;
            }
            let g = grads.get(idx);
            let m = &mut state.m[idx];
            let v = &mut state.v[idx];
            let values = params.get_mut(idx).value.data_mut();
            for k in 0..values.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                values[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Role, Tensor};

    fn one_param(v: f64) -> ParameterSet {
        let mut set = ParameterSet::new();
        set.add("w", Role::Kernel, true, Tensor::vector(vec![v])).unwrap();
        set
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut set = one_param(0.7);
        let mut state = AdamState::new(&set);
        state.m[0][0] = 0.5;
        state.v[0][0] = 0.25;
        let grads = Gradients::zeros_like(&set);
        let adam = Adam::default();
        adam.step(&mut set, &grads, &mut state);
        assert_eq!(state.m[0][0], 0.45);
        assert!((state.v[0][0] - 0.25 * 0.999).abs() < 1e-16);
        // Moments decay, but a zero gradient from zero moments moves nothing.
        let mut fresh = one_param(0.7);
        let mut fresh_state = AdamState::new(&fresh);
        adam.step(&mut fresh, &grads, &mut fresh_state);
        assert_eq!(fresh.get(0).value.data()[0], 0.7);
    }

    #[test]
    fn constant_gradient_steps_at_learning_rate() {
        let mut set = one_param(0.0);
        let mut state = AdamState::new(&set);
        let mut grads = Gradients::zeros_like(&set);
        grads.get_mut(0)[0] = 3.0;
        let adam = Adam::new(1e-3);
        let mut prev = 0.0;
        for _ in 0..500 {
            adam.step(&mut set, &grads, &mut state);
            let now = set.get(0).value.data()[0];
            assert!((prev - now - 1e-3).abs() < 1e-9);
            prev = now;
        }
    }

    #[test]
    fn masked_params_untouched() {
        let mut set = one_param(1.0);
        set.add("frozen", Role::Bias, false, Tensor::vector(vec![2.0])).unwrap();
        let mut state = AdamState::new(&set);
        let mut grads = Gradients::zeros_like(&set);
        grads.get_mut(0)[0] = 1.0;
        grads.get_mut(1)[0] = 1.0;
        Adam::default().step_masked(&mut set, &grads, &mut state, |i| i == 0);
        assert_ne!(set.get(0).value.data()[0], 1.0);
        assert_eq!(set.get(1).value.data()[0], 2.0);
        assert_eq!(state.m[1][0], 0.0);
    }
}
