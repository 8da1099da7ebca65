//! Robust speech recognition toolkit built around uncertainty-weighted
//! Viterbi decoding for hybrid DNN-HMM systems.
//!
//! The pipeline, end to end:
//!
//! 1. [`frontend`] — Mel filter-bank log-energy features with delta and
//!    delta-delta coefficients, per-filter noise estimation and segmental SNR.
//! 2. [`enhancement`] — spectral subtraction in the Mel energy domain with
//!    SNR-dependent oversubtraction and a spectral floor.
//! 3. [`uncertainty`] — per-frame noise-cancelling uncertainty variances
//!    (analytic additive-noise model, oracle MSE against the clean twin, or a
//!    trained neural regressor) mapped to a decoding weight in (0, 1].
//! 4. [`neuralnet`] — from-scratch dense feedforward networks used both as the
//!    uncertainty regressor and as the acoustic senone classifier.
//! 5. [`decoder`] — exact Viterbi search over a word lexicon with a bigram
//!    language model, weighting acoustic evidence per frame, plus a
//!    brute-force reference decoder and WER scoring.
//! 6. [`corpus`] — a synthetic paired clean/noisy corpus with known
//!    transcripts, frame alignments, and injected noise.
//! 7. [`experiments`] — the batch harness wiring everything together: system
//!    comparisons, oracle (Th, K) grids, and regressor topology grids.

pub mod archive;
pub mod audio;
pub mod corpus;
pub mod decoder;
pub mod enhancement;
pub mod experiments;
pub mod frontend;
pub mod neuralnet;
pub mod uncertainty;

pub use audio::AudioSignal;
pub use corpus::{Corpus, CorpusConfig, StateTemplate, UtteranceRecord};
pub use decoder::{DecodeTask, Hypothesis, LanguageModel, Lexicon, WerBreakdown};
pub use enhancement::SsConfig;
pub use frontend::{
    FeatureFrame, Frontend, FrontendConfig, MelFrame, NoiseEstimate, NoiseSource,
};
pub use neuralnet::{FeatureAssembly, FeatureVariant, MlpModel, MlpSpec, TrainConfig};
pub use uncertainty::{ModelUncertaintyConfig, UncertaintyTrack, WeightingParams};
