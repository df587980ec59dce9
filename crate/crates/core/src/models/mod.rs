//! The three architectures: the ERM baseline, the adversarial (ADG) model
//! with its domain classifier behind a gradient reversal layer, and the IRM
//! model with its fixed scalar β.
//!
//! Layer counting follows the convention where an LSTM and the layer norm
//! after it are two layers: a generator with `hidden_layer_count = h` holds
//! one input pair, `h / 2` middle pairs and one output pair, so `h = 6` gives
//! five LSTM and five LN layers.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{read_checkpoint, write_checkpoint, Activation, Graph, ParameterSet, Role, Tensor, Var};
use crate::dataset::{SequenceSample, CHANNELS, WINDOW_LEN};
use crate::{Error, Result};

pub const ARCHITECTURE_FILE: &str = "architecture.json";

const GENERATOR_STREAM: u64 = 0;
const SSI_HEAD_STREAM: u64 = 1;
const CLASSIFIER_STREAM: u64 = 2;

/// Rows per forward pass when predicting over many samples.
const PREDICT_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Baseline,
    Adg,
    Irm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Baseline, ModelKind::Adg, ModelKind::Irm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Adg => "adg",
            ModelKind::Irm => "irm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ModelKind::Baseline),
            "adg" => Ok(ModelKind::Adg),
            "irm" => Ok(ModelKind::Irm),
            other => Err(Error::Config(format!("unknown model kind `{other}` (baseline, adg, irm)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub hidden_layer_count: usize,
    pub units: usize,
    pub regularization_coefficient: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { hidden_layer_count: 6, units: 64, regularization_coefficient: 1e-4 }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layer_count % 2 != 0 {
            return Err(Error::Config(format!(
                "hidden_layer_count must be even (LSTM+LN pairs), got {}",
                self.hidden_layer_count
            )));
        }
        if self.units == 0 {
            return Err(Error::Config("generator units must be positive".into()));
        }
        if !(self.regularization_coefficient >= 0.0) || !self.regularization_coefficient.is_finite() {
            return Err(Error::Config("regularization coefficient must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Number of LSTM+LN pairs.
    pub fn pairs(&self) -> usize {
        2 + self.hidden_layer_count / 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub ssi_head_widths: Vec<usize>,
    pub classifier_widths: Vec<usize>,
    pub grl_lambda: f64,
}

impl HeadConfig {
    /// `[60, 40, 20, 10]` interiors for both heads.
    pub fn standard(domain_count: usize, grl_lambda: f64) -> Self {
        HeadConfig {
            ssi_head_widths: vec![60, 40, 20, 10, 1],
            classifier_widths: vec![60, 40, 20, 10, domain_count],
            grl_lambda,
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if kind != ModelKind::Baseline && self.ssi_head_widths.last() != Some(&1) {
            return Err(Error::Config("the SSI head must end in a single neuron".into()));
        }
        if self.ssi_head_widths.contains(&0) || self.classifier_widths.contains(&0) {
            return Err(Error::Config("head widths must be positive".into()));
        }
        if kind == ModelKind::Adg && self.classifier_widths.is_empty() {
            return Err(Error::Config("the domain classifier needs at least one layer".into()));
        }
        if !(self.grl_lambda >= 0.0) || !self.grl_lambda.is_finite() {
            return Err(Error::Config("grl_lambda must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Everything needed to rebuild a bundle's parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub features: usize,
    pub generator: GeneratorConfig,
    pub heads: HeadConfig,
    /// Present and equal to 1.0 for IRM bundles only.
    pub irm_beta: Option<f64>,
    pub seed: u64,
}

impl Architecture {
    pub fn new(kind: ModelKind, generator: GeneratorConfig, heads: HeadConfig, seed: u64) -> Self {
        Architecture {
            kind,
            features: CHANNELS,
            generator,
            heads,
            irm_beta: (kind == ModelKind::Irm).then_some(1.0),
            seed,
        }
    }

    pub fn domain_count(&self) -> Option<usize> {
        (self.kind == ModelKind::Adg).then(|| *self.heads.classifier_widths.last().unwrap())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.heads.validate(self.kind)?;
        if self.features == 0 {
            return Err(Error::Config("feature count must be positive".into()));
        }
        match (self.kind, self.irm_beta) {
            (ModelKind::Irm, Some(b)) if b == 1.0 => Ok(()),
            (ModelKind::Irm, other) => Err(Error::Config(format!("IRM bundles need irm_beta = 1.0, got {other:?}"))),
            (_, None) => Ok(()),
            (kind, Some(_)) => Err(Error::Config(format!("{kind} bundles carry no irm_beta"))),
        }
    }
}

/// Generator, heads and their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub architecture: Architecture,
    pub params: ParameterSet,
}

/// Nodes produced by one forward pass through a bundle.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub embedding: Var,
    /// `[B, 1]`
    pub ssi: Var,
    /// `[B, N_S]`, only for ADG bundles.
    pub domain_logits: Option<Var>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn add_dense_stack(
    params: &mut ParameterSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    input: usize,
    widths: &[usize],
) -> Result<()> {
    let mut width = input;
    for (j, &w) in widths.iter().enumerate() {
        let kernel = glorot(rng, width, w, width * w);
        params.add(format!("{prefix}/dense{j}/kernel"), Role::Kernel, false, Tensor::new(vec![width, w], kernel)?)?;
        params.add(format!("{prefix}/dense{j}/bias"), Role::Bias, false, Tensor::zeros(vec![w]))?;
        width = w;
    }
    Ok(())
}

pub fn lstm_prefix(pair: usize) -> String {
    format!("generator/pair{pair}/lstm")
}

pub fn ln_prefix(pair: usize) -> String {
    format!("generator/pair{pair}/ln")
}

impl ModelBundle {
    /// Fresh parameters. For a given seed and generator config the generator
    /// weights are identical whatever the kind.
    pub fn build(architecture: Architecture) -> Result<Self> {
        architecture.validate()?;
        let mut params = ParameterSet::new();
        let units = architecture.generator.units;

        let mut rng = stream(architecture.seed, GENERATOR_STREAM);
        let mut width = architecture.features;
        for pair in 0..architecture.generator.pairs() {
            let lstm = lstm_prefix(pair);
            let g4 = 4 * units;
            let kernel = glorot(&mut rng, width, g4, width * g4);
            let recurrent = glorot(&mut rng, units, g4, units * g4);
            let mut bias = vec![0.0; g4];
            bias[units..2 * units].fill(1.0);
            params.add(format!("{lstm}/kernel"), Role::Kernel, true, Tensor::new(vec![width, g4], kernel)?)?;
            params.add(format!("{lstm}/recurrent"), Role::Recurrent, true, Tensor::new(vec![units, g4], recurrent)?)?;
            params.add(format!("{lstm}/bias"), Role::Bias, true, Tensor::vector(bias))?;
            let ln = ln_prefix(pair);
            params.add(format!("{ln}/gain"), Role::Kernel, false, Tensor::vector(vec![1.0; units]))?;
            params.add(format!("{ln}/shift"), Role::Bias, false, Tensor::zeros(vec![units]))?;
            width = units;
        }

        let mut rng = stream(architecture.seed, SSI_HEAD_STREAM);
        match architecture.kind {
            ModelKind::Baseline => add_dense_stack(&mut params, &mut rng, "output", units, &[1])?,
            ModelKind::Adg | ModelKind::Irm => add_dense_stack(
                &mut params,
                &mut rng,
                "ssi_head",
                units,
                &architecture.heads.ssi_head_widths,
            )?,
        }
        if architecture.kind == ModelKind::Adg {
            let mut rng = stream(architecture.seed, CLASSIFIER_STREAM);
            add_dense_stack(&mut params, &mut rng, "classifier", units, &architecture.heads.classifier_widths)?;
        }
        Ok(ModelBundle { architecture, params })
    }

    pub fn kind(&self) -> ModelKind {
        self.architecture.kind
    }

    pub fn irm_beta(&self) -> Option<f64> {
        self.architecture.irm_beta
    }

    /// Scalar count of the parameters whose name starts with `prefix`.
    pub fn count_params(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.value.len())
            .sum()
    }

    /// Generator on `x: [B, T, F]`, returning the last-timestep embedding `[B, H]`.
    pub fn generator_graph(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let mut h = x;
        for pair in 0..self.architecture.generator.pairs() {
            let lstm = lstm_prefix(pair);
            let (k, u, b) = (
                g.param_named(&format!("{lstm}/kernel"))?,
                g.param_named(&format!("{lstm}/recurrent"))?,
                g.param_named(&format!("{lstm}/bias"))?,
            );
            h = g.lstm(h, k, u, b)?;
            let ln = ln_prefix(pair);
            let (gain, shift) = (g.param_named(&format!("{ln}/gain"))?, g.param_named(&format!("{ln}/shift"))?);
            h = g.layer_norm(h, gain, shift)?;
        }
        g.last_step(h)
    }

    fn dense_stack(&self, g: &mut Graph<'_>, prefix: &str, layers: usize, x: Var) -> Result<Var> {
        let mut h = x;
        for j in 0..layers {
            let w = g.param_named(&format!("{prefix}/dense{j}/kernel"))?;
            let b = g.param_named(&format!("{prefix}/dense{j}/bias"))?;
            let act = if j + 1 == layers { Activation::Linear } else { Activation::Relu };
            h = g.dense(h, w, b, act)?;
        }
        Ok(h)
    }

    /// SSI prediction `[B, 1]` from an embedding.
    pub fn ssi_graph(&self, g: &mut Graph<'_>, z: Var) -> Result<Var> {
        match self.kind() {
            ModelKind::Baseline => self.dense_stack(g, "output", 1, z),
            _ => self.dense_stack(g, "ssi_head", self.architecture.heads.ssi_head_widths.len(), z),
        }
    }

    /// Domain logits `[B, N_S]` from an embedding, through a GRL with gain `lambda`.
    pub fn domain_graph(&self, g: &mut Graph<'_>, z: Var, lambda: f64) -> Result<Var> {
        self.require(ModelKind::Adg)?;
        let reversed = g.gradient_reversal(z, lambda);
        self.dense_stack(g, "classifier", self.architecture.heads.classifier_widths.len(), reversed)
    }

    /// One generator evaluation feeding every head of the bundle.
    pub fn forward_graph(&self, g: &mut Graph<'_>, x: Var) -> Result<ForwardVars> {
        let embedding = self.generator_graph(g, x)?;
        let ssi = self.ssi_graph(g, embedding)?;
        let domain_logits = match self.kind() {
            ModelKind::Adg => Some(self.domain_graph(g, embedding, self.architecture.heads.grl_lambda)?),
            _ => None,
        };
        Ok(ForwardVars { embedding, ssi, domain_logits })
    }

    pub fn require(&self, expected: ModelKind) -> Result<()> {
        if self.kind() != expected {
            return Err(Error::Kind { expected: expected.to_string(), actual: self.kind().to_string() });
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let (_, _, f) = batch.dims3()?;
        if f != self.architecture.features {
            return Err(Error::Shape(format!(
                "batch has {f} channels, model expects {}",
                self.architecture.features
            )));
        }
        Ok(())
    }

    /// SSI predictions for `batch: [B, T, F]`.
    pub fn forward_ssi(&self, batch: &Tensor) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let mut g = Graph::new(&self.params);
        let x = g.input(batch.clone());
        let z = self.generator_graph(&mut g, x)?;
        let y = self.ssi_graph(&mut g, z)?;
        Ok(g.value(y).data().to_vec())
    }

    /// Domain logits `[B, N_S]`; ADG bundles only.
    pub fn forward_domain(&self, batch: &Tensor) -> Result<Tensor> {
        self.require(ModelKind::Adg)?;
        self.check_batch(batch)?;
        let mut g = Graph::new(&self.params);
        let x = g.input(batch.clone());
        let z = self.generator_graph(&mut g, x)?;
        let logits = self.domain_graph(&mut g, z, self.architecture.heads.grl_lambda)?;
        Ok(g.value(logits).clone())
    }

    /// Generator embeddings `[B, H]`.
    pub fn embed(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut g = Graph::new(&self.params);
        let x = g.input(batch.clone());
        let z = self.generator_graph(&mut g, x)?;
        Ok(g.value(z).clone())
    }

    /// SSI predictions for many samples, evaluated in chunks.
    pub fn predict(&self, samples: &[SequenceSample]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(PREDICT_CHUNK) {
            let refs: Vec<&SequenceSample> = chunk.iter().collect();
            out.extend(self.forward_ssi(&batch_tensor(&refs))?);
        }
        Ok(out)
    }

    /// Embeddings for many samples, one row each.
    pub fn embed_samples(&self, samples: &[&SequenceSample]) -> Result<Vec<Vec<f64>>> {
        let units = self.architecture.generator.units;
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(PREDICT_CHUNK) {
            let z = self.embed(&batch_tensor(chunk))?;
            out.extend(z.data().chunks_exact(units).map(|r| r.to_vec()));
        }
        Ok(out)
    }

    /// Writes `architecture.json` and the parameter checkpoint into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_checkpoint(&self.params, dir)?;
        let path = dir.join(ARCHITECTURE_FILE);
        let text = serde_json::to_string_pretty(&self.architecture).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(ARCHITECTURE_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let architecture: Architecture = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let params = read_checkpoint(dir)?;
        let fresh = ModelBundle::build(architecture.clone())?;
        if fresh.params.len() != params.len()
            || fresh
                .params
                .iter()
                .zip(params.iter())
                .any(|(a, b)| a.name != b.name || a.value.shape() != b.value.shape())
        {
            return Err(Error::Input(format!(
                "checkpoint in {} does not match its architecture",
                dir.display()
            )));
        }
        Ok(ModelBundle { architecture, params })
    }
}

/// Stacks samples into a `[B, 60, 5]` tensor.
pub fn batch_tensor(samples: &[&SequenceSample]) -> Tensor {
    let mut data = Vec::with_capacity(samples.len() * WINDOW_LEN * CHANNELS);
    for s in samples {
        data.extend_from_slice(&s.features);
    }
    Tensor::new(vec![samples.len(), WINDOW_LEN, CHANNELS], data).expect("sample features are 60x5")
}
