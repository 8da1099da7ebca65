//! Audio container and mono 16-bit PCM WAV I/O.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("signal contains a non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("sample at index {index} is {value}, outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("wav file is not mono 16-bit PCM: {0}")]
    UnsupportedWav(String),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

/// A mono audio signal with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    /// Builds a signal, checking that every sample is finite and in `[-1, 1]`.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(AudioError::NonFiniteSample(index));
            }
            if !(-1.0..=1.0).contains(&value) {
                return Err(AudioError::SampleOutOfRange { index, value });
            }
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared amplitude over the whole signal.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Reads a mono 16-bit PCM WAV file, scaling samples to `[-1, 1]`.
pub fn read_wav(path: &Path) -> Result<AudioSignal, AudioError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedWav(format!(
            "{} channels",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedWav(format!(
            "{:?} {} bits",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples: Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples?
        .into_iter()
        .map(|s| f64::from(s) / 32768.0)
        .collect();
    AudioSignal::new(samples, spec.sample_rate)
}

/// Writes a signal as mono 16-bit PCM WAV, rounding and clamping amplitudes.
pub fn write_wav(path: &Path, signal: &AudioSignal) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &signal.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_samples() {
        let err = AudioSignal::new(vec![0.0, 1.5], 16000).unwrap_err();
        assert!(matches!(err, AudioError::SampleOutOfRange { index: 1, .. }));
    }

    #[test]
    fn rejects_non_finite_samples() {
        let err = AudioSignal::new(vec![f64::NAN], 16000).unwrap_err();
        assert!(matches!(err, AudioError::NonFiniteSample(0)));
    }

    #[test]
    fn wav_round_trip_is_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..1600)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin())
            .collect();
        let signal = AudioSignal::new(samples, 16000).unwrap();
        write_wav(&path, &signal).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.len(), signal.len());
        for (a, b) in signal.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn read_rejects_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..64 {
            writer.write_sample(0i16).unwrap();
            writer.write_sample(0i16).unwrap();
        }
        writer.finalize().unwrap();
        assert!(matches!(
            read_wav(&path),
            Err(AudioError::UnsupportedWav(_))
        ));
    }
}
