//! From-scratch dense feedforward networks, used as the per-frame uncertainty
//! regressor and as the acoustic senone classifier.
//!
//! Everything is `f64` and strictly deterministic: a fixed seed reproduces
//! initialization, the data split, the shuffle order, and therefore the final
//! parameters bit for bit.

mod io;
mod train;

pub use io::{load_model, save_model};
pub use train::{gradient_check, train, EpochLoss};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has {got} values, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature assembly is missing its {0} component")]
    MissingFeature(&'static str),
    #[error("invalid network spec: {0}")]
    BadSpec(String),
    #[error("model file is corrupt: {0}")]
    BadModelFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenActivation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
    Softmax,
}

/// Network shape: unit counts from the input layer through every hidden layer
/// to the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub rng_seed: u64,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        output_activation: OutputActivation,
        rng_seed: u64,
    ) -> Result<Self, NetError> {
        if layer_sizes.len() < 3 {
            return Err(NetError::BadSpec(
                "need at least one hidden layer (input, hidden, output)".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(NetError::BadSpec("every layer needs at least one unit".into()));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation: HiddenActivation::Tanh,
            output_activation,
            rng_seed,
        })
    }

    /// Scalar regressor with the given hidden layer sizes.
    pub fn regressor(input_dim: usize, hidden: &[usize], rng_seed: u64) -> Result<Self, NetError> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::new(sizes, OutputActivation::Linear, rng_seed)
    }

    /// Softmax classifier over `n_states` senones.
    pub fn classifier(
        input_dim: usize,
        hidden: &[usize],
        n_states: usize,
        rng_seed: u64,
    ) -> Result<Self, NetError> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(n_states);
        Self::new(sizes, OutputActivation::Softmax, rng_seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// One dense layer, weights stored row-major as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    /// `z = W a + b`.
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.out_dim {
            let row = &self.weights[i * self.in_dim..(i + 1) * self.in_dim];
            let mut z = self.biases[i];
            for (w, a) in row.iter().zip(input) {
                z += w * a;
            }
            out.push(z);
        }
    }
}

/// Per-dimension input standardization learned from the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(rows: &[&Vec<f64>], dim: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            for (m, x) in mean.iter_mut().zip(row.iter()) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.std)
                .map(|((x, m), s)| (x - m) / s),
        );
    }
}

/// Final losses recorded when training finished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub epochs_run: u32,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub final_test_loss: f64,
}

/// A trained (or freshly initialized) network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
    pub standardizer: Standardizer,
    pub report: TrainReport,
}

impl MlpModel {
    /// Symmetric fan-in scaled initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(spec: MlpSpec) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(spec.rng_seed);
        let layers = (0..spec.n_weight_layers())
            .map(|l| {
                let in_dim = spec.layer_sizes[l];
                let out_dim = spec.layer_sizes[l + 1];
                let bound = 1.0 / (in_dim as f64).sqrt();
                let mut layer = Layer::zeros(in_dim, out_dim);
                for w in &mut layer.weights {
                    *w = rng.gen_range(-bound..bound);
                }
                layer
            })
            .collect();
        let input_dim = spec.input_dim();
        Self {
            spec,
            layers,
            standardizer: Standardizer::identity(input_dim),
            report: TrainReport {
                epochs_run: 0,
                final_train_loss: f64::NAN,
                final_val_loss: f64::NAN,
                final_test_loss: f64::NAN,
            },
        }
    }

    /// Forward pass; classifier outputs are softmax probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        let logits = self.forward_logits(x)?;
        Ok(match self.spec.output_activation {
            OutputActivation::Linear => logits,
            OutputActivation::Softmax => softmax(&logits),
        })
    }

    /// Pre-activation outputs of the final layer.
    pub fn forward_logits(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.spec.input_dim() {
            return Err(NetError::DimMismatch {
                expected: self.spec.input_dim(),
                got: x.len(),
            });
        }
        let mut a = Vec::new();
        self.standardizer.apply(x, &mut a);
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&a, &mut z);
            if l < last {
                a.clear();
                a.extend(z.iter().map(|v| v.tanh()));
            } else {
                std::mem::swap(&mut a, &mut z);
            }
        }
        Ok(a)
    }

    /// Log-softmax outputs; numerically safe source for pseudo-log-likelihoods.
    pub fn forward_log_posteriors(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        let logits = self.forward_logits(x)?;
        Ok(log_softmax(&logits))
    }

    /// Scalar uncertainty prediction, clamped at zero: variances cannot be
    /// negative even when the linear output dips below.
    pub fn predict_uncertainty(&self, x: &[f64]) -> Result<f64, NetError> {
        Ok(self.forward(x)?[0].max(0.0))
    }

    /// Posterior distribution over senones for one context-window vector.
    pub fn acoustic_posteriors(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        match self.spec.output_activation {
            OutputActivation::Softmax => self.forward(x),
            OutputActivation::Linear => Err(NetError::BadSpec(
                "acoustic posteriors need a softmax classifier".into(),
            )),
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits
        .iter()
        .map(|&z| (z - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    logits.iter().map(|&z| z - log_sum).collect()
}

/// The three regressor input layouts built from one frame of pipeline data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureVariant {
    /// Log-normalized energy + noisy static features.
    F1,
    /// Log-normalized energy + averaged model uncertainty + enhanced statics.
    F2,
    /// Log-normalized energy + enhanced static features.
    F3,
}

impl FeatureVariant {
    pub fn all() -> [FeatureVariant; 3] {
        [FeatureVariant::F1, FeatureVariant::F2, FeatureVariant::F3]
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureVariant::F1 => "f1",
            FeatureVariant::F2 => "f2",
            FeatureVariant::F3 => "f3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f1" => Some(FeatureVariant::F1),
            "f2" => Some(FeatureVariant::F2),
            "f3" => Some(FeatureVariant::F3),
            _ => None,
        }
    }
}

/// A feature variant bound to a filter count, fixing the input dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureAssembly {
    pub variant: FeatureVariant,
    pub n_mel: usize,
}

impl FeatureAssembly {
    pub fn input_dim(&self) -> usize {
        match self.variant {
            FeatureVariant::F1 | FeatureVariant::F3 => 1 + self.n_mel,
            FeatureVariant::F2 => 2 + self.n_mel,
        }
    }
}

/// Per-frame raw material for [`assemble_input`].
#[derive(Debug, Clone, Copy)]
pub struct FrameInputs<'a> {
    pub noisy_statics: Option<&'a [f64]>,
    pub enhanced_statics: Option<&'a [f64]>,
    pub log_norm_energy: f64,
    /// Averaged analytic model uncertainty of the frame.
    pub model_uv: Option<f64>,
}

/// Builds the regressor input vector for one frame.
pub fn assemble_input(
    assembly: FeatureAssembly,
    inputs: &FrameInputs,
) -> Result<Vec<f64>, NetError> {
    let statics = |s: Option<&[f64]>, which: &'static str| -> Result<&[f64], NetError> {
        let s = s.ok_or(NetError::MissingFeature(which))?;
        if s.len() != assembly.n_mel {
            return Err(NetError::DimMismatch {
                expected: assembly.n_mel,
                got: s.len(),
            });
        }
        Ok(s)
    };
    let mut v = Vec::with_capacity(assembly.input_dim());
    v.push(inputs.log_norm_energy);
    match assembly.variant {
        FeatureVariant::F1 => {
            v.extend_from_slice(statics(inputs.noisy_statics, "noisy statics")?);
        }
        FeatureVariant::F2 => {
            v.push(
                inputs
                    .model_uv
                    .ok_or(NetError::MissingFeature("model uncertainty"))?,
            );
            v.extend_from_slice(statics(inputs.enhanced_statics, "enhanced statics")?);
        }
        FeatureVariant::F3 => {
            v.extend_from_slice(statics(inputs.enhanced_statics, "enhanced statics")?);
        }
    }
    Ok(v)
}

/// Relative state frequencies over a set of frame alignments. States that
/// never occur are floored at `1 / (10 * total frames)` and the vector is
/// renormalized to sum to one.
pub fn state_priors(alignments: &[Vec<usize>], n_states: usize) -> Result<Vec<f64>, NetError> {
    let total: usize = alignments.iter().map(Vec::len).sum();
    if total == 0 || n_states == 0 {
        return Err(NetError::EmptyDataset);
    }
    let mut counts = vec![0usize; n_states];
    for alignment in alignments {
        for &s in alignment {
            counts[s] += 1;
        }
    }
    let floor = 1.0 / (10.0 * total as f64);
    let mut priors: Vec<f64> = counts
        .iter()
        .map(|&c| {
            if c == 0 {
                floor
            } else {
                c as f64 / total as f64
            }
        })
        .collect();
    let sum: f64 = priors.iter().sum();
    for p in &mut priors {
        *p /= sum;
    }
    Ok(priors)
}
