use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Tensor;
use crate::{Error, Result};

/// What a parameter does inside its layer. Layer-norm gains are tagged
/// `Kernel` and shifts `Bias`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Kernel,
    Recurrent,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub role: Role,
    /// Included in the L2 penalty.
    pub regularized: bool,
    pub value: Tensor,
}

/// Named parameters in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    params: Vec<Parameter>,
    index: BTreeMap<String, usize>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter and returns its index.
    pub fn add(&mut self, name: impl Into<String>, role: Role, regularized: bool, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let idx = self.params.len();
        self.index.insert(name.clone(), idx);
        self.params.push(Parameter { name, role, regularized, value });
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter {
        &mut self.params[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.index_of(name).map(|i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// All values concatenated in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.scalar_count());
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// SHA-256 over the names and little-endian values of the parameters
    /// selected by `keep`, hex encoded.
    pub fn checksum(&self, mut keep: impl FnMut(&Parameter) -> bool) -> String {
        let mut hasher = Sha256::new();
        for p in self.params.iter().filter(|p| keep(p)) {
            hasher.update(p.name.as_bytes());
            hasher.update([0u8]);
            for v in p.value.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Per-parameter gradients aligned with a [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Gradients {
            grads: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn get(&self, idx: usize) -> &[f64] {
        &self.grads[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.grads[idx]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.grads.iter().flatten().copied().collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|v| v.is_finite())
    }
}

/// `coefficient * sum of squares` over the regularized parameters.
pub fn l2_penalty(params: &ParameterSet, coefficient: f64) -> f64 {
    if coefficient == 0.0 {
        return 0.0;
    }
    let sum: f64 = params
        .iter()
        .filter(|p| p.regularized)
        .map(|p| p.value.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    coefficient * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_of_single_value() {
        let mut set = ParameterSet::new();
        set.add("w", Role::Kernel, true, Tensor::vector(vec![3.0])).unwrap();
        set.add("skip", Role::Bias, false, Tensor::vector(vec![100.0])).unwrap();
        assert!((l2_penalty(&set, 1e-4) - 9e-4).abs() < 1e-18);
        assert_eq!(l2_penalty(&set, 0.0), 0.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut set = ParameterSet::new();
        set.add("w", Role::Kernel, true, Tensor::scalar(1.0)).unwrap();
        assert!(set.add("w", Role::Bias, true, Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn checksum_tracks_selected_values_only() {
        let mut set = ParameterSet::new();
        set.add("a", Role::Kernel, true, Tensor::vector(vec![1.0, 2.0])).unwrap();
        set.add("b", Role::Bias, true, Tensor::vector(vec![3.0])).unwrap();
        let only_a = |p: &Parameter| p.name == "a";
        let before = set.checksum(only_a);
        set.get_mut(1).value.data_mut()[0] = 9.0;
        assert_eq!(set.checksum(only_a), before);
        set.get_mut(0).value.data_mut()[0] = 9.0;
        assert_ne!(set.checksum(only_a), before);
    }
}
