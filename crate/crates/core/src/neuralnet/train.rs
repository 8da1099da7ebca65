//! Mini-batch gradient descent with backpropagation, plus the
//! finite-difference gradient oracle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{Layer, MlpModel, MlpSpec, NetError, OutputActivation, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Mse,
    CrossEntropy,
}

impl Loss {
    pub fn name(&self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::CrossEntropy => "cross-entropy",
        }
    }
}

/// Training hyperparameters. Defaults: 20 epochs of plain mini-batch gradient
/// descent, 70/15/15 train/validation/test split, no early stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub split: (f64, f64, f64),
    pub loss: Loss,
    /// When set, stop once validation loss has not improved for three epochs
    /// and keep the best-validation parameters.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.01,
            batch_size: 32,
            split: (0.70, 0.15, 0.15),
            loss: Loss::Mse,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self, spec: &MlpSpec) -> Result<(), NetError> {
        if self.epochs == 0 {
            return Err(NetError::BadSpec("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.learning_rate <= 0.0 {
            return Err(NetError::BadSpec(
                "batch size and learning rate must be positive".into(),
            ));
        }
        let (a, b, c) = self.split;
        if (a + b + c - 1.0).abs() > 1e-9 || a <= 0.0 || b < 0.0 || c < 0.0 {
            return Err(NetError::BadSpec(format!(
                "split fractions ({a}, {b}, {c}) must be non-negative and sum to 1"
            )));
        }
        match (self.loss, spec.output_activation) {
            (Loss::Mse, OutputActivation::Linear) => Ok(()),
            (Loss::CrossEntropy, OutputActivation::Softmax) => Ok(()),
            _ => Err(NetError::BadSpec(
                "MSE pairs with a linear output, cross-entropy with softmax".into(),
            )),
        }
    }
}

/// Loss values measured after one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: u32,
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

/// Deterministic 70/15/15 partition of `0..n` (counts within one sample of
/// the exact fractions).
fn split_indices(n: usize, split: (f64, f64, f64), seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    order.shuffle(&mut rng);
    let n_train = (split.0 * n as f64).round() as usize;
    let n_val = ((split.1 * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let val_end = (n_train + n_val).min(n);
    (
        order[..n_train].to_vec(),
        order[n_train..val_end].to_vec(),
        order[val_end..].to_vec(),
    )
}

/// Activations retained for one backward pass.
struct ForwardTrace {
    /// Standardized input followed by each layer's post-activation output.
    activations: Vec<Vec<f64>>,
}

fn forward_trace(model: &MlpModel, x: &[f64]) -> ForwardTrace {
    let mut activations = Vec::with_capacity(model.layers.len() + 1);
    let mut a = Vec::new();
    model.standardizer.apply(x, &mut a);
    activations.push(a);
    let last = model.layers.len() - 1;
    for (l, layer) in model.layers.iter().enumerate() {
        let mut z = Vec::new();
        layer.affine(activations.last().unwrap(), &mut z);
        if l < last {
            z.iter_mut().for_each(|v| *v = v.tanh());
            activations.push(z);
        } else {
            let out = match model.spec.output_activation {
                OutputActivation::Linear => z,
                OutputActivation::Softmax => super::softmax(&z),
            };
            activations.push(out);
        }
    }
    ForwardTrace { activations }
}

/// Per-sample loss on the already-standardized forward output.
fn sample_loss(loss: Loss, output: &[f64], target: &[f64]) -> f64 {
    match loss {
        Loss::Mse => {
            output
                .iter()
                .zip(target)
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>()
                / output.len() as f64
        }
        Loss::CrossEntropy => -output
            .iter()
            .zip(target)
            .map(|(p, t)| if *t == 0.0 { 0.0 } else { t * p.max(1e-300).ln() })
            .sum::<f64>(),
    }
}

/// Gradient of the loss with respect to the final pre-activation vector.
/// For MSE + linear output: `2 (y - t) / dim`. For cross-entropy + softmax
/// the two chain rules collapse to `p - t`.
fn output_delta(loss: Loss, output: &[f64], target: &[f64]) -> Vec<f64> {
    match loss {
        Loss::Mse => {
            let scale = 2.0 / output.len() as f64;
            output
                .iter()
                .zip(target)
                .map(|(y, t)| scale * (y - t))
                .collect()
        }
        Loss::CrossEntropy => output.iter().zip(target).map(|(p, t)| p - t).collect(),
    }
}

/// Accumulates one sample's parameter gradients into `grads`.
fn backward(
    model: &MlpModel,
    trace: &ForwardTrace,
    target: &[f64],
    loss: Loss,
    grads: &mut [Layer],
) {
    let n_layers = model.layers.len();
    let mut delta = output_delta(loss, trace.activations.last().unwrap(), target);
    for l in (0..n_layers).rev() {
        let layer = &model.layers[l];
        let input = &trace.activations[l];
        let grad = &mut grads[l];
        for i in 0..layer.out_dim {
            let d = delta[i];
            grad.biases[i] += d;
            let row = &mut grad.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
            for (g, a) in row.iter_mut().zip(input) {
                *g += d * a;
            }
        }
        if l > 0 {
            // d/d(input) = W^T delta, then through tanh of the previous layer.
            let mut prev = vec![0.0; layer.in_dim];
            for i in 0..layer.out_dim {
                let d = delta[i];
                let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

fn mean_loss(model: &MlpModel, data: &[(Vec<f64>, Vec<f64>)], idx: &[usize], loss: Loss) -> f64 {
    if idx.is_empty() {
        return f64::NAN;
    }
    idx.iter()
        .map(|&i| {
            let trace = forward_trace(model, &data[i].0);
            sample_loss(loss, trace.activations.last().unwrap(), &data[i].1)
        })
        .sum::<f64>()
        / idx.len() as f64
}

/// Trains a fresh network on `(input, target)` pairs and returns the model
/// together with the per-epoch loss curve.
///
/// Runs exactly `cfg.epochs` full passes (fewer only with early stopping).
/// Everything downstream of `spec.rng_seed` is deterministic: two calls with
/// identical inputs produce bit-identical parameters.
pub fn train(
    spec: MlpSpec,
    data: &[(Vec<f64>, Vec<f64>)],
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochLoss>), NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    cfg.validate(&spec)?;
    for (x, t) in data {
        if x.len() != spec.input_dim() {
            return Err(NetError::DimMismatch {
                expected: spec.input_dim(),
                got: x.len(),
            });
        }
        if t.len() != spec.output_dim() {
            return Err(NetError::DimMismatch {
                expected: spec.output_dim(),
                got: t.len(),
            });
        }
    }

    let seed = spec.rng_seed;
    let (train_idx, val_idx, test_idx) = split_indices(data.len(), cfg.split, seed);
    let mut model = MlpModel::init(spec);
    let train_rows: Vec<&Vec<f64>> = train_idx.iter().map(|&i| &data[i].0).collect();
    model.standardizer = super::Standardizer::fit(&train_rows, model.spec.input_dim());

    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let mut order = train_idx.clone();
    let mut grads: Vec<Layer> = model
        .layers
        .iter()
        .map(|l| Layer::zeros(l.in_dim, l.out_dim))
        .collect();

    let mut curve = Vec::with_capacity(cfg.epochs as usize);
    let mut best: Option<(f64, Vec<Layer>)> = None;
    let mut epochs_since_best = 0u32;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            for g in &mut grads {
                g.weights.iter_mut().for_each(|w| *w = 0.0);
                g.biases.iter_mut().for_each(|b| *b = 0.0);
            }
            for &i in batch {
                let trace = forward_trace(&model, &data[i].0);
                backward(&model, &trace, &data[i].1, cfg.loss, &mut grads);
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (layer, grad) in model.layers.iter_mut().zip(&grads) {
                for (w, g) in layer.weights.iter_mut().zip(&grad.weights) {
                    *w -= step * g;
                }
                for (b, g) in layer.biases.iter_mut().zip(&grad.biases) {
                    *b -= step * g;
                }
            }
        }

        let losses = EpochLoss {
            epoch,
            train: mean_loss(&model, data, &train_idx, cfg.loss),
            val: mean_loss(&model, data, &val_idx, cfg.loss),
            test: mean_loss(&model, data, &test_idx, cfg.loss),
        };
        curve.push(losses);

        if cfg.early_stop && !val_idx.is_empty() {
            let improved = best.as_ref().map_or(true, |(v, _)| losses.val < *v);
            if improved {
                best = Some((losses.val, model.layers.clone()));
                epochs_since_best = 0;
            } else {
                epochs_since_best += 1;
                if epochs_since_best >= 3 {
                    break;
                }
            }
        }
    }

    if let Some((_, layers)) = best {
        model.layers = layers;
    }
    let last = *curve.last().unwrap();
    model.report = TrainReport {
        epochs_run: curve.len() as u32,
        final_train_loss: last.train,
        final_val_loss: last.val,
        final_test_loss: last.test,
    };
    Ok((model, curve))
}

/// Maximum relative disagreement between backprop gradients and central
/// finite differences with step `1e-6`, over every parameter.
pub fn gradient_check(model: &MlpModel, x: &[f64], target: &[f64], loss: Loss) -> f64 {
    const STEP: f64 = 1e-6;
    let trace = forward_trace(model, x);
    let mut grads: Vec<Layer> = model
        .layers
        .iter()
        .map(|l| Layer::zeros(l.in_dim, l.out_dim))
        .collect();
    backward(model, &trace, target, loss, &mut grads);

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for l in 0..model.layers.len() {
        let n_w = model.layers[l].weights.len();
        let n_b = model.layers[l].biases.len();
        for p in 0..n_w + n_b {
            let read = |m: &MlpModel| {
                if p < n_w {
                    m.layers[l].weights[p]
                } else {
                    m.layers[l].biases[p - n_w]
                }
            };
            let write = |m: &mut MlpModel, v: f64| {
                if p < n_w {
                    m.layers[l].weights[p] = v;
                } else {
                    m.layers[l].biases[p - n_w] = v;
                }
            };
            let orig = read(model);
            write(&mut probe, orig + STEP);
            let up = sample_loss(
                loss,
                forward_trace(&probe, x).activations.last().unwrap(),
                target,
            );
            write(&mut probe, orig - STEP);
            let down = sample_loss(
                loss,
                forward_trace(&probe, x).activations.last().unwrap(),
                target,
            );
            write(&mut probe, orig);
            let fd = (up - down) / (2.0 * STEP);
            let bp = if p < n_w {
                grads[l].weights[p]
            } else {
                grads[l].biases[p - n_w]
            };
            let rel = (bp - fd).abs() / (bp.abs() + fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn line_data(n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = rng.gen_range(-1.0..1.0);
                (vec![x], vec![2.0 * x + 1.0])
            })
            .collect()
    }

    #[test]
    fn fits_a_line_to_under_1e3() {
        let data = line_data(500, 11);
        let cfg = TrainConfig {
            epochs: 300,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let (model, curve) = train(MlpSpec::regressor(1, &[8], 3).unwrap(), &data, &cfg).unwrap();
        assert_eq!(curve.len(), 300);
        assert!(
            model.report.final_train_loss < 1e-3,
            "train mse {}",
            model.report.final_train_loss
        );
        assert!(curve.last().unwrap().train <= curve[0].train);
    }

    #[test]
    fn constant_targets_collapse_to_bias() {
        let data: Vec<_> = (0..200)
            .map(|i| (vec![(i as f64) / 100.0 - 1.0], vec![0.7]))
            .collect();
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let (model, _) = train(MlpSpec::regressor(1, &[4], 5).unwrap(), &data, &cfg).unwrap();
        assert!(model.report.final_train_loss < 1e-4);
        let y = model.forward(&[0.33]).unwrap()[0];
        assert!((y - 0.7).abs() < 0.05);
    }

    #[test]
    fn separable_blobs_reach_99_percent() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let mut data = Vec::new();
        for _ in 0..250 {
            let x = rng.gen_range(-1.0..-0.2);
            let y = rng.gen_range(-1.0..1.0);
            data.push((vec![x, y], vec![1.0, 0.0]));
            let x = rng.gen_range(0.2..1.0);
            let y = rng.gen_range(-1.0..1.0);
            data.push((vec![x, y], vec![0.0, 1.0]));
        }
        let cfg = TrainConfig {
            epochs: 60,
            learning_rate: 0.3,
            loss: Loss::CrossEntropy,
            ..TrainConfig::default()
        };
        let (model, _) = train(MlpSpec::classifier(2, &[8], 2, 7).unwrap(), &data, &cfg).unwrap();
        let correct = data
            .iter()
            .filter(|(x, t)| {
                let p = model.forward(x).unwrap();
                let pred = if p[0] > p[1] { 0 } else { 1 };
                let truth = if t[0] > t[1] { 0 } else { 1 };
                pred == truth
            })
            .count();
        assert!(correct as f64 / data.len() as f64 >= 0.99);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = line_data(120, 23);
        let cfg = TrainConfig {
            epochs: 15,
            ..TrainConfig::default()
        };
        let spec = MlpSpec::regressor(1, &[6, 4], 99).unwrap();
        let (a, curve_a) = train(spec.clone(), &data, &cfg).unwrap();
        let (b, curve_b) = train(spec, &data, &cfg).unwrap();
        assert_eq!(a.layers, b.layers);
        assert_eq!(a.standardizer, b.standardizer);
        assert_eq!(curve_a, curve_b);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(MlpSpec::regressor(1, &[2], 0).unwrap(), &[], &cfg),
            Err(NetError::EmptyDataset)
        ));
    }

    #[test]
    fn mismatched_loss_and_output_is_an_error() {
        let cfg = TrainConfig {
            loss: Loss::CrossEntropy,
            ..TrainConfig::default()
        };
        let data = line_data(10, 1);
        assert!(train(MlpSpec::regressor(1, &[2], 0).unwrap(), &data, &cfg).is_err());
    }

    #[test]
    fn split_is_a_partition_within_one_sample() {
        for n in [20usize, 97, 100, 1001] {
            let (tr, va, te) = split_indices(n, (0.70, 0.15, 0.15), 42);
            assert_eq!(tr.len() + va.len() + te.len(), n);
            let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert!((tr.len() as f64 - 0.70 * n as f64).abs() <= 1.0);
            assert!((va.len() as f64 - 0.15 * n as f64).abs() <= 1.0);
            assert!((te.len() as f64 - 0.15 * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn gradient_check_small_nets() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for seed in 0..5u64 {
            let model = MlpModel::init(MlpSpec::regressor(4, &[5, 3], seed).unwrap());
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let err = gradient_check(&model, &x, &[0.37], Loss::Mse);
            assert!(err < 1e-4, "mse gradient error {err}");

            let model = MlpModel::init(MlpSpec::classifier(4, &[5], 3, seed).unwrap());
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let err = gradient_check(&model, &x, &[0.0, 1.0, 0.0], Loss::CrossEntropy);
            assert!(err < 1e-4, "ce gradient error {err}");
        }
    }

    #[test]
    fn gradient_check_zero_net_bias_gradients() {
        let mut model = MlpModel::init(MlpSpec::regressor(2, &[3], 0).unwrap());
        for layer in &mut model.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
            layer.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        // All-zero parameters still produce matching (zero or bias-driven)
        // gradients on both routes.
        let err = gradient_check(&model, &[0.5, -0.5], &[1.0], Loss::Mse);
        assert!(err < 1e-6, "zero net error {err}");
    }

    #[test]
    fn early_stop_restores_best_validation_params() {
        let data = line_data(200, 31);
        let cfg = TrainConfig {
            epochs: 100,
            learning_rate: 0.5, // deliberately twitchy so validation wobbles
            early_stop: true,
            ..TrainConfig::default()
        };
        let (model, curve) = train(MlpSpec::regressor(1, &[8], 13).unwrap(), &data, &cfg).unwrap();
        assert!(model.report.epochs_run as usize == curve.len());
    }
}
