//! Caption-paired bioacoustic corpora, contrastive audio/text training,
//! exact cosine search and retrieval evaluation.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices. Storage formats are always `f32`.

pub mod caption;
pub mod dsp;
pub mod encoder;
pub mod eval;
pub mod index;
pub mod ingest;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use scalar::Scalar;

pub type AudioClip32 = dsp::AudioClip<f32>;
pub type AudioClip64 = dsp::AudioClip<f64>;
pub type MelSpectrogram32 = dsp::MelSpectrogram<f32>;
pub type MelSpectrogram64 = dsp::MelSpectrogram<f64>;
pub type Embedding32 = encoder::Embedding<f32>;
pub type Embedding64 = encoder::Embedding<f64>;
pub type Model32 = encoder::ContrastiveModel<f32>;
pub type Model64 = encoder::ContrastiveModel<f64>;
pub type Batch32 = trainer::Batch<f32>;
pub type Batch64 = trainer::Batch<f64>;
