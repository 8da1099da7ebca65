//! Versioned binary model files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        8 bytes  "UWSRMLP1"
//! n_sizes      u32      number of layer sizes (input .. output)
//! sizes        u32 * n
//! hidden act   u8       0 = tanh
//! output act   u8       0 = linear, 1 = softmax
//! rng_seed     u64
//! mean         f64 * input_dim   standardization means
//! std          f64 * input_dim   standardization deviations
//! layers       per weight layer: f64 * (out*in) row-major weights,
//!                                f64 * out biases
//! epochs_run   u32
//! losses       f64 * 3  final train/val/test loss
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{
    HiddenActivation, Layer, MlpModel, MlpSpec, NetError, OutputActivation, Standardizer,
    TrainReport,
};

const MAGIC: &[u8; 8] = b"UWSRMLP1";

pub fn save_model(path: &Path, model: &MlpModel) -> Result<(), NetError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(model.spec.layer_sizes.len() as u32).to_le_bytes())?;
    for &s in &model.spec.layer_sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    w.write_all(&[0u8])?; // tanh
    w.write_all(&[match model.spec.output_activation {
        OutputActivation::Linear => 0u8,
        OutputActivation::Softmax => 1u8,
    }])?;
    w.write_all(&model.spec.rng_seed.to_le_bytes())?;
    for &v in model.standardizer.mean.iter().chain(&model.standardizer.std) {
        w.write_all(&v.to_le_bytes())?;
    }
    for layer in &model.layers {
        for &v in layer.weights.iter().chain(&layer.biases) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.write_all(&model.report.epochs_run.to_le_bytes())?;
    for v in [
        model.report.final_train_loss,
        model.report.final_val_loss,
        model.report.final_test_loss,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], NetError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, NetError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>, NetError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn load_model(path: &Path) -> Result<MlpModel, NetError> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    let magic: [u8; 8] = r.bytes()?;
    if &magic != MAGIC {
        return Err(NetError::BadModelFile("bad magic".into()));
    }
    let n_sizes = r.u32()? as usize;
    if !(3..=64).contains(&n_sizes) {
        return Err(NetError::BadModelFile(format!("{n_sizes} layer sizes")));
    }
    let mut layer_sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        let s = r.u32()? as usize;
        if s == 0 || s > 1_000_000 {
            return Err(NetError::BadModelFile(format!("layer size {s}")));
        }
        layer_sizes.push(s);
    }
    let hidden = r.bytes::<1>()?[0];
    if hidden != 0 {
        return Err(NetError::BadModelFile(format!(
            "unknown hidden activation {hidden}"
        )));
    }
    let output_activation = match r.bytes::<1>()?[0] {
        0 => OutputActivation::Linear,
        1 => OutputActivation::Softmax,
        other => {
            return Err(NetError::BadModelFile(format!(
                "unknown output activation {other}"
            )))
        }
    };
    let rng_seed = r.u64()?;
    let input_dim = layer_sizes[0];
    let mean = r.f64_vec(input_dim)?;
    let std = r.f64_vec(input_dim)?;

    let mut layers = Vec::with_capacity(n_sizes - 1);
    for l in 0..n_sizes - 1 {
        let in_dim = layer_sizes[l];
        let out_dim = layer_sizes[l + 1];
        let weights = r.f64_vec(in_dim * out_dim)?;
        let biases = r.f64_vec(out_dim)?;
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(NetError::BadModelFile("non-finite parameter".into()));
        }
        layers.push(Layer {
            weights,
            biases,
            in_dim,
            out_dim,
        });
    }
    let epochs_run = r.u32()?;
    let final_train_loss = r.f64()?;
    let final_val_loss = r.f64()?;
    let final_test_loss = r.f64()?;

    Ok(MlpModel {
        spec: MlpSpec {
            layer_sizes,
            hidden_activation: HiddenActivation::Tanh,
            output_activation,
            rng_seed,
        },
        layers,
        standardizer: Standardizer { mean, std },
        report: TrainReport {
            epochs_run,
            final_train_loss,
            final_val_loss,
            final_test_loss,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{train, Loss, TrainConfig};
    use rand::{Rng, SeedableRng};

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let data: Vec<_> = (0..60)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y = x.iter().sum::<f64>();
                (x, vec![y])
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 5,
            loss: Loss::Mse,
            ..TrainConfig::default()
        };
        let (model, _) = train(MlpSpec::regressor(3, &[4, 2], 9).unwrap(), &data, &cfg).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mlp");
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn load_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mlp");
        std::fs::write(&path, b"NOTAMODEL").unwrap();
        assert!(matches!(
            load_model(&path),
            Err(NetError::BadModelFile(_)) | Err(NetError::Io(_))
        ));
    }

    #[test]
    fn load_rejects_truncated_file() {
        let model = MlpModel::init(MlpSpec::regressor(2, &[3], 1).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.mlp");
        save_model(&path, &model).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_model(&path).is_err());
    }
}
