//! Spectral subtraction in the Mel filter-energy domain with SNR-dependent
//! oversubtraction and a spectral floor.

use thiserror::Error;

use crate::frontend::{MelFrame, NoiseEstimate};

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("mel frame has {got} filters but noise estimate has {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid spectral subtraction config: {0}")]
    BadConfig(String),
}

/// Spectral subtraction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsConfig {
    /// Oversubtraction factor at 0 dB.
    pub alpha0: f64,
    /// Spectral floor as a fraction of the unsubtracted energy.
    pub beta: f64,
    /// SNR in dB at which the oversubtraction factor reaches 1.
    pub snr_knee: f64,
}

impl Default for SsConfig {
    fn default() -> Self {
        Self {
            alpha0: 2.0,
            beta: 0.1,
            snr_knee: 18.0,
        }
    }
}

impl SsConfig {
    pub fn validate(&self) -> Result<(), EnhanceError> {
        if self.alpha0 < 1.0 {
            return Err(EnhanceError::BadConfig(format!(
                "alpha0 {} must be >= 1",
                self.alpha0
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(EnhanceError::BadConfig(format!(
                "beta {} must be in (0, 1)",
                self.beta
            )));
        }
        if self.snr_knee <= 0.0 {
            return Err(EnhanceError::BadConfig("snr_knee must be positive".into()));
        }
        Ok(())
    }
}

/// Oversubtraction factor as a function of the (already clamped, >= 0 dB)
/// segmental SNR: `alpha0` at 0 dB, linear down to 1 at the knee, 1 beyond.
pub fn oversubtraction_factor(snr_db: f64, cfg: &SsConfig) -> f64 {
    if snr_db >= cfg.snr_knee {
        1.0
    } else {
        cfg.alpha0 - (cfg.alpha0 - 1.0) * snr_db / cfg.snr_knee
    }
}

/// Compensated Mel energies:
/// `fe_ss = max(beta * fe, fe - alpha(snr) * en2)` per filter.
///
/// `snr_db` must come from [`crate::frontend::segmental_snr`] on the same
/// frame, so each filter sees its own clamped SNR.
pub fn spectral_subtract(
    mel: &MelFrame,
    noise: &NoiseEstimate,
    snr_db: &[f64],
    cfg: &SsConfig,
) -> Result<MelFrame, EnhanceError> {
    if mel.fe.len() != noise.en2.len() || mel.fe.len() != snr_db.len() {
        return Err(EnhanceError::DimMismatch {
            expected: noise.en2.len(),
            got: mel.fe.len(),
        });
    }
    let fe = mel
        .fe
        .iter()
        .zip(&noise.en2)
        .zip(snr_db)
        .map(|((&fe, &en2), &snr)| {
            let alpha = oversubtraction_factor(snr, cfg);
            (cfg.beta * fe).max(fe - alpha * en2)
        })
        .collect();
    Ok(MelFrame { fe })
}

/// Enhances a whole utterance against one noise estimate, deriving the
/// per-frame, per-filter SNR internally.
pub fn enhance_sequence(
    mel_seq: &[MelFrame],
    noise: &NoiseEstimate,
    cfg: &SsConfig,
    energy_floor: f64,
) -> Result<Vec<MelFrame>, EnhanceError> {
    mel_seq
        .iter()
        .map(|mel| {
            let snr = crate::frontend::segmental_snr(mel, noise, energy_floor).map_err(|_| {
                EnhanceError::DimMismatch {
                    expected: noise.en2.len(),
                    got: mel.fe.len(),
                }
            })?;
            spectral_subtract(mel, noise, &snr, cfg)
        })
        .collect()
}
