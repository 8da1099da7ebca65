//! Mel filter-bank front end: framing, windowing, filter energies, log
//! features with dynamic coefficients, noise estimation, and segmental SNR.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::AudioSignal;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("signal has {got} samples, shorter than one frame ({need})")]
    SignalTooShort { got: usize, need: usize },
    #[error("signal sample rate {got} does not match front end rate {expected}")]
    SampleRateMismatch { got: u32, expected: u32 },
    #[error("noise window of {n_lead} frames invalid for a {n_frames}-frame sequence")]
    InvalidNoiseWindow { n_lead: usize, n_frames: usize },
    #[error("utterance has no frame with energy above the floor")]
    AllSilent,
    #[error("expected {expected} filters, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid front end config: {0}")]
    BadConfig(String),
}

/// Front-end parameters. Defaults give the standard 25 ms / 10 ms analysis
/// with 40 Mel filters.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub frame_len_ms: f64,
    pub frame_shift_ms: f64,
    /// Power of two, at least the frame length in samples.
    pub fft_size: usize,
    pub n_mel: usize,
    pub mel_fmin: f64,
    /// Upper filter edge in Hz; `None` means Nyquist.
    pub mel_fmax: Option<f64>,
    /// Small positive floor applied to energies before logs.
    pub energy_floor: f64,
    /// Half-width of the delta regression window.
    pub delta_window: usize,
    pub preemphasis: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            frame_len_ms: 25.0,
            frame_shift_ms: 10.0,
            fft_size: 512,
            n_mel: 40,
            mel_fmin: 0.0,
            mel_fmax: None,
            energy_floor: 1e-10,
            delta_window: 2,
            preemphasis: 0.97,
        }
    }
}

/// One frame of Mel filter energies in the power domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFrame {
    pub fe: Vec<f64>,
}

/// Static log filter energies plus dynamic coefficients and the
/// log-normalized frame energy.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub statics: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta2: Vec<f64>,
    /// Log of the frame energy normalized by the utterance peak; `<= 0`.
    pub log_norm_energy: f64,
}

impl FeatureFrame {
    /// Static, delta and delta-delta coefficients concatenated (3 * n_mel).
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.statics.len());
        v.extend_from_slice(&self.statics);
        v.extend_from_slice(&self.delta);
        v.extend_from_slice(&self.delta2);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSource {
    LeadingFrames,
    Oracle,
}

/// Expected noise energy per Mel filter.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub en2: Vec<f64>,
    pub source: NoiseSource,
}

/// Precomputed analysis front end for one sample rate.
pub struct Frontend {
    cfg: FrontendConfig,
    sample_rate: u32,
    frame_len: usize,
    frame_shift: usize,
    window: Vec<f64>,
    /// Per filter: (first FFT bin, triangle weights).
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl Frontend {
    pub fn new(cfg: FrontendConfig, sample_rate: u32) -> Result<Self, FrontendError> {
        let bad = |msg: String| Err(FrontendError::BadConfig(msg));
        if sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        if cfg.n_mel == 0 {
            return bad("n_mel must be at least 1".into());
        }
        if cfg.energy_floor <= 0.0 {
            return bad("energy_floor must be positive".into());
        }
        if !(0.0..1.0).contains(&cfg.preemphasis) {
            return bad(format!("preemphasis {} outside [0, 1)", cfg.preemphasis));
        }
        let frame_len = (cfg.frame_len_ms * sample_rate as f64 / 1000.0).round() as usize;
        let frame_shift = (cfg.frame_shift_ms * sample_rate as f64 / 1000.0).round() as usize;
        if frame_len == 0 || frame_shift == 0 {
            return bad("frame length and shift must be at least one sample".into());
        }
        if !cfg.fft_size.is_power_of_two() || cfg.fft_size < frame_len {
            return bad(format!(
                "fft_size {} must be a power of two >= frame length {}",
                cfg.fft_size, frame_len
            ));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let fmax = cfg.mel_fmax.unwrap_or(nyquist);
        if !(cfg.mel_fmin < fmax && fmax <= nyquist) {
            return bad(format!(
                "need mel_fmin < mel_fmax <= {nyquist}, got [{}, {fmax}]",
                cfg.mel_fmin
            ));
        }

        let window: Vec<f64> = (0..frame_len)
            .map(|n| {
                0.54 - 0.46
                    * (2.0 * std::f64::consts::PI * n as f64 / (frame_len - 1).max(1) as f64).cos()
            })
            .collect();

        let filters = Self::build_filterbank(cfg.n_mel, cfg.fft_size, sample_rate, cfg.mel_fmin, fmax);
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);

        Ok(Self {
            cfg,
            sample_rate,
            frame_len,
            frame_shift,
            window,
            filters,
            fft,
        })
    }

    /// Unit-peak triangular filters with Mel-spaced centers. Triangle weights
    /// are evaluated at the continuous bin frequencies so narrow filters never
    /// collapse to zero.
    fn build_filterbank(
        n_mel: usize,
        fft_size: usize,
        sample_rate: u32,
        fmin: f64,
        fmax: f64,
    ) -> Vec<(usize, Vec<f64>)> {
        let mel_lo = hz_to_mel(fmin);
        let mel_hi = hz_to_mel(fmax);
        let edges: Vec<f64> = (0..n_mel + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mel + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let n_bins = fft_size / 2 + 1;

        (0..n_mel)
            .map(|m| {
                let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
                let first_bin = (left / bin_hz).ceil() as usize;
                let mut weights = Vec::new();
                for k in first_bin..n_bins {
                    let f = k as f64 * bin_hz;
                    if f > right {
                        break;
                    }
                    let w = if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    };
                    weights.push(w.max(0.0));
                }
                (first_bin, weights)
            })
            .collect()
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn frame_shift(&self) -> usize {
        self.frame_shift
    }

    /// Frame count for a signal of `len` samples:
    /// `floor((len - frame_len) / shift) + 1`.
    pub fn frame_count(&self, len: usize) -> Result<usize, FrontendError> {
        if len < self.frame_len {
            return Err(FrontendError::SignalTooShort {
                got: len,
                need: self.frame_len,
            });
        }
        Ok((len - self.frame_len) / self.frame_shift + 1)
    }

    /// Slices the signal into Hamming-windowed frames, preemphasized first.
    pub fn frame_signal(&self, signal: &AudioSignal) -> Result<Vec<Vec<f64>>, FrontendError> {
        if signal.sample_rate != self.sample_rate {
            return Err(FrontendError::SampleRateMismatch {
                got: signal.sample_rate,
                expected: self.sample_rate,
            });
        }
        let n_frames = self.frame_count(signal.len())?;
        let k = self.cfg.preemphasis;
        let pre: Vec<f64> = signal
            .samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if i == 0 {
                    x - k * x
                } else {
                    x - k * signal.samples[i - 1]
                }
            })
            .collect();

        Ok((0..n_frames)
            .map(|t| {
                let start = t * self.frame_shift;
                pre[start..start + self.frame_len]
                    .iter()
                    .zip(&self.window)
                    .map(|(x, w)| x * w)
                    .collect()
            })
            .collect())
    }

    /// Mel filter energies of one windowed frame: `|DFT|^2` projected through
    /// the triangular filterbank.
    pub fn mel_energies(&self, frame: &[f64]) -> MelFrame {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.cfg.fft_size)
            .collect();
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[..self.cfg.fft_size / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        let fe = self
            .filters
            .iter()
            .map(|(first_bin, weights)| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * power[first_bin + i])
                    .sum::<f64>()
            })
            .collect();
        MelFrame { fe }
    }

    /// Full analysis to Mel energies for every frame.
    pub fn mel_sequence(&self, signal: &AudioSignal) -> Result<Vec<MelFrame>, FrontendError> {
        Ok(self
            .frame_signal(signal)?
            .iter()
            .map(|f| self.mel_energies(f))
            .collect())
    }

    /// Turns a Mel energy sequence into feature frames: log energies, deltas,
    /// delta-deltas, and the per-frame log-normalized energy.
    pub fn features_from_mel(
        &self,
        mel_seq: &[MelFrame],
    ) -> Result<Vec<FeatureFrame>, FrontendError> {
        let statics = log_features(mel_seq, self.cfg.energy_floor);
        let delta = compute_deltas(&statics, self.cfg.delta_window);
        let delta2 = compute_deltas(&delta, self.cfg.delta_window);
        let energy = log_norm_energy(mel_seq, self.cfg.energy_floor)?;
        Ok(statics
            .into_iter()
            .zip(delta)
            .zip(delta2)
            .zip(energy)
            .map(|(((statics, delta), delta2), log_norm_energy)| FeatureFrame {
                statics,
                delta,
                delta2,
                log_norm_energy,
            })
            .collect())
    }

    /// Convenience: signal straight to feature frames.
    pub fn analyze(&self, signal: &AudioSignal) -> Result<Vec<FeatureFrame>, FrontendError> {
        let mel = self.mel_sequence(signal)?;
        self.features_from_mel(&mel)
    }

    /// Per-filter segmental SNR in dB, clamped below at 0 dB:
    /// `10 log10(max(fe - en2, eps) / max(en2, eps))`.
    pub fn segmental_snr(
        &self,
        mel: &MelFrame,
        noise: &NoiseEstimate,
    ) -> Result<Vec<f64>, FrontendError> {
        segmental_snr(mel, noise, self.cfg.energy_floor)
    }
}

/// `ln(max(fe, floor))` per filter and frame.
pub fn log_features(mel_seq: &[MelFrame], energy_floor: f64) -> Vec<Vec<f64>> {
    mel_seq
        .iter()
        .map(|m| m.fe.iter().map(|&fe| fe.max(energy_floor).ln()).collect())
        .collect()
}

/// Regression deltas with replicated edges:
/// `delta_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)`.
pub fn compute_deltas(seq: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    if seq.is_empty() || window == 0 {
        return vec![vec![0.0; seq.first().map_or(0, Vec::len)]; seq.len()];
    }
    let norm = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let clamp = |i: isize| -> usize { i.clamp(0, seq.len() as isize - 1) as usize };
    (0..seq.len())
        .map(|t| {
            let dim = seq[t].len();
            let mut d = vec![0.0; dim];
            for n in 1..=window {
                let fwd = &seq[clamp(t as isize + n as isize)];
                let bwd = &seq[clamp(t as isize - n as isize)];
                for j in 0..dim {
                    d[j] += n as f64 * (fwd[j] - bwd[j]);
                }
            }
            for v in &mut d {
                *v /= norm;
            }
            d
        })
        .collect()
}

/// Per-frame log energy relative to the utterance peak; the peak frame maps
/// to exactly 0 and everything else is negative.
pub fn log_norm_energy(
    mel_seq: &[MelFrame],
    energy_floor: f64,
) -> Result<Vec<f64>, FrontendError> {
    let energies: Vec<f64> = mel_seq
        .iter()
        .map(|m| m.fe.iter().sum::<f64>().max(energy_floor))
        .collect();
    let peak = energies.iter().cloned().fold(f64::MIN, f64::max);
    if energies.is_empty() || peak <= energy_floor {
        return Err(FrontendError::AllSilent);
    }
    Ok(energies.iter().map(|&e| (e / peak).ln()).collect())
}

/// Mean Mel energy over the first `n_lead` frames, the leading-frames
/// non-speech convention.
pub fn estimate_noise(mel_seq: &[MelFrame], n_lead: usize) -> Result<NoiseEstimate, FrontendError> {
    if n_lead == 0 || n_lead > mel_seq.len() {
        return Err(FrontendError::InvalidNoiseWindow {
            n_lead,
            n_frames: mel_seq.len(),
        });
    }
    Ok(NoiseEstimate {
        en2: mean_energy(&mel_seq[..n_lead]),
        source: NoiseSource::LeadingFrames,
    })
}

/// Mean Mel energy over an entire pure-noise sequence.
pub fn estimate_noise_oracle(noise_mel_seq: &[MelFrame]) -> Result<NoiseEstimate, FrontendError> {
    if noise_mel_seq.is_empty() {
        return Err(FrontendError::InvalidNoiseWindow {
            n_lead: 0,
            n_frames: 0,
        });
    }
    Ok(NoiseEstimate {
        en2: mean_energy(noise_mel_seq),
        source: NoiseSource::Oracle,
    })
}

fn mean_energy(frames: &[MelFrame]) -> Vec<f64> {
    let n_mel = frames[0].fe.len();
    let mut mean = vec![0.0; n_mel];
    for f in frames {
        for (m, &fe) in f.fe.iter().enumerate() {
            mean[m] += fe;
        }
    }
    for v in &mut mean {
        *v /= frames.len() as f64;
    }
    mean
}

/// Free-function form of the per-filter segmental SNR.
pub fn segmental_snr(
    mel: &MelFrame,
    noise: &NoiseEstimate,
    energy_floor: f64,
) -> Result<Vec<f64>, FrontendError> {
    if mel.fe.len() != noise.en2.len() {
        return Err(FrontendError::DimMismatch {
            expected: noise.en2.len(),
            got: mel.fe.len(),
        });
    }
    Ok(mel
        .fe
        .iter()
        .zip(&noise.en2)
        .map(|(&fe, &en2)| {
            let snr = 10.0 * ((fe - en2).max(energy_floor) / en2.max(energy_floor)).log10();
            snr.max(0.0)
        })
        .collect())
}
