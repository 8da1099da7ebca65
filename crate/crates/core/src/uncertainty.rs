//! Noise-cancelling uncertainty: the analytic additive-noise variance, the
//! oracle MSE against the clean twin, windowed averaging over the decoder
//! context, and the mapping from uncertainty to the per-frame decoding weight.

use thiserror::Error;

use crate::frontend::{MelFrame, NoiseEstimate};

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("vectors of length {a} and {b} cannot be compared")]
    DimMismatch { a: usize, b: usize },
    #[error("invalid weighting params: {0}")]
    BadParams(String),
}

/// Parameters of the uncertainty-to-weight mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingParams {
    pub th: f64,
    pub k: f64,
}

impl WeightingParams {
    pub fn new(th: f64, k: f64) -> Result<Self, UncertaintyError> {
        if !(th > 0.0 && k > 0.0) {
            return Err(UncertaintyError::BadParams(format!(
                "Th and K must be positive, got Th={th}, K={k}"
            )));
        }
        Ok(Self { th, k })
    }
}

/// Configuration of the analytic additive-noise uncertainty model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelUncertaintyConfig {
    /// Correction coefficient, shared across filters.
    pub c: f64,
    /// Cap on the variance; the else-branch maximum.
    pub max_var: f64,
}

impl Default for ModelUncertaintyConfig {
    fn default() -> Self {
        Self {
            c: 0.15,
            max_var: 0.4,
        }
    }
}

/// Per-frame uncertainty variances and their windowed average.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyTrack {
    /// One scalar variance per frame.
    pub uv: Vec<f64>,
    /// Windowed average of `uv` over the decoder context.
    pub uv_window: Vec<f64>,
}

impl UncertaintyTrack {
    pub fn from_uv(uv: Vec<f64>, half_window: usize) -> Self {
        let uv_window = window_uv(&uv, half_window);
        Self { uv, uv_window }
    }

    /// Per-frame decoding weights for this track.
    pub fn weights(&self, params: &WeightingParams) -> Vec<f64> {
        self.uv_window
            .iter()
            .map(|&uv| uncertainty_weight(uv, params))
            .collect()
    }
}

/// Analytic uncertainty variance of noise cancelling per filter.
///
/// With `d = max(noisy - en2, 0)` and `r = d / (10 c en2)` the variance is
/// `2 c en2 / d` when `r >= 1` and `-d / (50 c en2) + 0.4` otherwise. A filter
/// with zero estimated noise contributes zero variance. Both branches meet at
/// exactly 0.2 when `r = 1`.
pub fn model_uncertainty(
    noisy: &MelFrame,
    noise: &NoiseEstimate,
    cfg: &ModelUncertaintyConfig,
) -> Result<Vec<f64>, UncertaintyError> {
    if noisy.fe.len() != noise.en2.len() {
        return Err(UncertaintyError::DimMismatch {
            a: noisy.fe.len(),
            b: noise.en2.len(),
        });
    }
    Ok(noisy
        .fe
        .iter()
        .zip(&noise.en2)
        .map(|(&y2, &en2)| {
            if en2 <= 0.0 {
                return 0.0;
            }
            let d = (y2 - en2).max(0.0);
            if d >= 10.0 * cfg.c * en2 {
                2.0 * cfg.c * en2 / d
            } else {
                (-d / (50.0 * cfg.c * en2) + 0.4).min(cfg.max_var)
            }
        })
        .collect())
}

/// Mean of a per-filter variance vector; the scalar uncertainty of a frame
/// under the analytic model.
pub fn model_uv_scalar(per_filter: &[f64]) -> f64 {
    if per_filter.is_empty() {
        return 0.0;
    }
    per_filter.iter().sum::<f64>() / per_filter.len() as f64
}

/// Propagates static variances through the delta regression, treating frames
/// as independent:
/// `var(delta_t) = sum_n n^2 (var_{t+n} + var_{t-n}) / (2 sum_n n^2)^2`,
/// with replicated edges. Apply twice for delta-delta variances.
pub fn delta_uncertainty(static_var: &[f64], window: usize) -> Vec<f64> {
    if static_var.is_empty() || window == 0 {
        return vec![0.0; static_var.len()];
    }
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let denom2 = denom * denom;
    let clamp = |i: isize| -> usize { i.clamp(0, static_var.len() as isize - 1) as usize };
    (0..static_var.len())
        .map(|t| {
            (1..=window)
                .map(|n| {
                    let fwd = static_var[clamp(t as isize + n as isize)];
                    let bwd = static_var[clamp(t as isize - n as isize)];
                    (n * n) as f64 * (fwd + bwd)
                })
                .sum::<f64>()
                / denom2
        })
        .collect()
}

/// Mean square error between the clean and enhanced static observation
/// vectors of one frame.
pub fn mse_uncertainty(clean: &[f64], enhanced: &[f64]) -> Result<f64, UncertaintyError> {
    if clean.len() != enhanced.len() || clean.is_empty() {
        return Err(UncertaintyError::DimMismatch {
            a: clean.len(),
            b: enhanced.len(),
        });
    }
    Ok(clean
        .iter()
        .zip(enhanced)
        .map(|(c, e)| (c - e) * (c - e))
        .sum::<f64>()
        / clean.len() as f64)
}

/// MSE uncertainty for every frame of a clean/enhanced pair.
pub fn mse_uncertainty_track(
    clean: &[Vec<f64>],
    enhanced: &[Vec<f64>],
) -> Result<Vec<f64>, UncertaintyError> {
    if clean.len() != enhanced.len() {
        return Err(UncertaintyError::DimMismatch {
            a: clean.len(),
            b: enhanced.len(),
        });
    }
    clean
        .iter()
        .zip(enhanced)
        .map(|(c, e)| mse_uncertainty(c, e))
        .collect()
}

/// Averages the per-frame uncertainty over the `2L + 1` decoder context
/// window, replicating boundary values at the edges.
pub fn window_uv(uv: &[f64], half_window: usize) -> Vec<f64> {
    if uv.is_empty() {
        return Vec::new();
    }
    let clamp = |i: isize| -> usize { i.clamp(0, uv.len() as isize - 1) as usize };
    let width = (2 * half_window + 1) as f64;
    (0..uv.len())
        .map(|t| {
            let lo = t as isize - half_window as isize;
            let hi = t as isize + half_window as isize;
            (lo..=hi).map(|i| uv[clamp(i)]).sum::<f64>() / width
        })
        .collect()
}

/// The uncertainty weighting function: 1 up to the threshold, then
/// `Th / (K (uv - Th) + Th)`, continuous at the threshold and decaying
/// towards zero.
pub fn uncertainty_weight(uv: f64, params: &WeightingParams) -> f64 {
    if uv <= params.th {
        1.0
    } else {
        params.th / (params.k * (uv - params.th) + params.th)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::NoiseSource;
    use proptest::prelude::*;

    fn noise(en2: Vec<f64>) -> NoiseEstimate {
        NoiseEstimate {
            en2,
            source: NoiseSource::Oracle,
        }
    }

    #[test]
    fn model_uncertainty_hand_values() {
        let cfg = ModelUncertaintyConfig::default();
        // en2 = 1, y2 = 2.5: d = 1.5, r = 1 -> first branch = 0.3 / 1.5 = 0.2.
        let v = model_uncertainty(&MelFrame { fe: vec![2.5] }, &noise(vec![1.0]), &cfg).unwrap();
        assert!((v[0] - 0.2).abs() < 1e-12);
        // en2 = 1, y2 = 1.5: d = 0.5, r < 1 -> -0.5/7.5 + 0.4 = 1/3.
        let v = model_uncertainty(&MelFrame { fe: vec![1.5] }, &noise(vec![1.0]), &cfg).unwrap();
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-12);
        // No noise, no uncertainty.
        let v = model_uncertainty(&MelFrame { fe: vec![5.0] }, &noise(vec![0.0]), &cfg).unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn model_uncertainty_clamps_to_else_branch_cap() {
        let cfg = ModelUncertaintyConfig::default();
        // Noisy energy below the noise estimate clamps d to 0: cap 0.4.
        let v = model_uncertainty(&MelFrame { fe: vec![0.5] }, &noise(vec![1.0]), &cfg).unwrap();
        assert_eq!(v[0], 0.4);
    }

    #[test]
    fn model_uncertainty_rejects_dim_mismatch() {
        let cfg = ModelUncertaintyConfig::default();
        assert!(matches!(
            model_uncertainty(&MelFrame { fe: vec![1.0] }, &noise(vec![1.0, 2.0]), &cfg),
            Err(UncertaintyError::DimMismatch { .. })
        ));
    }

    #[test]
    fn delta_uncertainty_hand_values() {
        // All static variances v: var(delta) = 10 v / 100 = v / 10.
        let v = delta_uncertainty(&[2.0; 9], 2);
        assert!(v.iter().all(|&x| (x - 0.2).abs() < 1e-12));

        let z = delta_uncertainty(&[0.0; 5], 2);
        assert!(z.iter().all(|&x| x == 0.0));

        // A single nonzero variance at t = 4 contributes n^2 v / 100 at
        // offsets +-n from it.
        let mut spike = vec![0.0; 9];
        spike[4] = 1.0;
        let v = delta_uncertainty(&spike, 2);
        assert!((v[2] - 4.0 / 100.0).abs() < 1e-12);
        assert!((v[3] - 1.0 / 100.0).abs() < 1e-12);
        assert_eq!(v[4], 0.0);
        assert!((v[5] - 1.0 / 100.0).abs() < 1e-12);
        assert!((v[6] - 4.0 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn mse_uncertainty_hand_values() {
        assert_eq!(mse_uncertainty(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let uv = mse_uncertainty(&[1.0, 3.0], &[2.0, 1.0]).unwrap();
        assert!((uv - 2.5).abs() < 1e-12);
        assert!(matches!(
            mse_uncertainty(&[1.0], &[1.0, 2.0]),
            Err(UncertaintyError::DimMismatch { .. })
        ));
    }

    #[test]
    fn window_uv_hand_values() {
        let w = window_uv(&[1.0, 2.0, 3.0], 1);
        assert!((w[1] - 2.0).abs() < 1e-12);
        // Edges replicate: frame 0 averages (1, 1, 2).
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-12);

        let constant = window_uv(&[5.0; 7], 3);
        assert!(constant.iter().all(|&x| (x - 5.0).abs() < 1e-12));

        let identity = window_uv(&[1.0, 9.0, 4.0], 0);
        assert_eq!(identity, vec![1.0, 9.0, 4.0]);
    }

    #[test]
    fn weight_hand_values() {
        let p = WeightingParams::new(1.0, 1.0).unwrap();
        assert!((uncertainty_weight(2.0, &p) - 0.5).abs() < 1e-12);
        assert_eq!(uncertainty_weight(0.3, &p), 1.0);
        assert_eq!(uncertainty_weight(1.0, &p), 1.0);

        let p = WeightingParams::new(8.0, 5.0).unwrap();
        assert!((uncertainty_weight(10.0, &p) - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn weight_rejects_bad_params() {
        assert!(WeightingParams::new(0.0, 1.0).is_err());
        assert!(WeightingParams::new(1.0, -2.0).is_err());
    }

    #[test]
    fn model_uv_scalar_hand_values() {
        assert_eq!(model_uv_scalar(&[0.2, 0.2, 0.2]), 0.2);
        assert!((model_uv_scalar(&[0.2, 0.4]) - 0.3).abs() < 1e-15);
        assert_eq!(model_uv_scalar(&[0.0, 0.0]), 0.0);
        assert_eq!(model_uv_scalar(&[]), 0.0);
    }

    proptest! {
        // Both branches of the analytic model meet at exactly 0.2 where
        // d = 10 c en2.
        #[test]
        fn model_branches_meet(c in 0.01f64..2.0, en2 in 1e-6f64..100.0) {
            let d = 10.0 * c * en2;
            let first = 2.0 * c * en2 / d;
            let second = -d / (50.0 * c * en2) + 0.4;
            prop_assert!((first - 0.2).abs() < 1e-12);
            prop_assert!((second - 0.2).abs() < 1e-12);
        }

        // On the first branch the variance strictly decreases in d.
        #[test]
        fn model_variance_decreases_with_cleaner_signal(
            en2 in 0.1f64..10.0,
            d1 in 1.0f64..50.0,
            extra in 0.1f64..10.0,
        ) {
            let cfg = ModelUncertaintyConfig::default();
            let d1 = d1.max(10.0 * cfg.c * en2);
            let d2 = d1 + extra;
            let v1 = model_uncertainty(&MelFrame { fe: vec![en2 + d1] }, &noise(vec![en2]), &cfg).unwrap()[0];
            let v2 = model_uncertainty(&MelFrame { fe: vec![en2 + d2] }, &noise(vec![en2]), &cfg).unwrap()[0];
            prop_assert!(v2 < v1);
        }

        // Output always lands in [0, 0.4] under the clamping rules.
        #[test]
        fn model_variance_is_bounded(y2 in 0.0f64..1000.0, en2 in 0.0f64..1000.0) {
            let cfg = ModelUncertaintyConfig::default();
            let v = model_uncertainty(&MelFrame { fe: vec![y2] }, &noise(vec![en2]), &cfg).unwrap()[0];
            prop_assert!((0.0..=0.4).contains(&v));
        }

        // The weighting function is 1 on [0, Th], continuous at Th, and
        // non-increasing everywhere.
        #[test]
        fn weight_shape(th in 0.1f64..20.0, k in 0.1f64..20.0, uv in 0.0f64..100.0) {
            let p = WeightingParams::new(th, k).unwrap();
            let w = uncertainty_weight(uv, &p);
            prop_assert!(w > 0.0 && w <= 1.0);
            if uv <= th {
                prop_assert_eq!(w, 1.0);
            } else {
                prop_assert!(w < 1.0);
                let closer = uncertainty_weight((uv + th) / 2.0, &p);
                prop_assert!(closer >= w);
            }
            prop_assert!((uncertainty_weight(th + 1e-13, &p) - 1.0).abs() < 1e-12);
        }

        // MSE is permutation invariant and quadratic in the difference scale.
        #[test]
        fn mse_permutation_and_scale(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..20),
            g in 0.1f64..10.0,
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let clean: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let enhanced: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let base = mse_uncertainty(&clean, &enhanced).unwrap();

            let mut order: Vec<usize> = (0..pairs.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pc: Vec<f64> = order.iter().map(|&i| clean[i]).collect();
            let pe: Vec<f64> = order.iter().map(|&i| enhanced[i]).collect();
            prop_assert!((mse_uncertainty(&pc, &pe).unwrap() - base).abs() < 1e-9);

            // Scale the difference by g: MSE scales by g^2.
            let stretched: Vec<f64> = clean.iter().zip(&enhanced)
                .map(|(c, e)| c + g * (e - c)).collect();
            let scaled = mse_uncertainty(&clean, &stretched).unwrap();
            prop_assert!((scaled - g * g * base).abs() < 1e-9 * (1.0 + scaled.abs()));
        }

        // Windowed averaging commutes with adding a constant.
        #[test]
        fn window_commutes_with_shift(
            uv in proptest::collection::vec(0.0f64..10.0, 1..40),
            c in -5.0f64..5.0,
            half in 0usize..6,
        ) {
            let shifted: Vec<f64> = uv.iter().map(|&x| x + c).collect();
            let a = window_uv(&shifted, half);
            let b: Vec<f64> = window_uv(&uv, half).iter().map(|&x| x + c).collect();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
