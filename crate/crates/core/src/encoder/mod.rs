//! Audio/text encoders, projection heads and the embedding container.
//!
//! The reference encoders are deliberately small: the audio side averages a
//! mel spectrogram over time and applies one affine+ReLU layer, the text side
//! hashes a bag of tokens into fixed buckets and does the same. Each is
//! followed by a two-layer projection head into the shared `D`-dimensional
//! space. [`ContrastiveModel`] bundles all of it with the learnable
//! temperature.

mod container;
mod layers;
mod model;
mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use container::{load_embeddings, save_embeddings, EmbeddingSet, EMBEDDING_MAGIC, EMBEDDING_VERSION};
pub use layers::{relu, Dense, ProjectionHead};
pub use model::{AudioEncoder, ContrastiveModel, ParamTensor, TextEncoder};
pub use text::{fnv1a64, hash_tokens, tokenize};

use crate::scalar::{l2_norm_f64, Scalar};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("corrupt embedding container: {0}")]
    CorruptContainer(String),
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EncoderError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EncoderConfig {
    /// Shared embedding dimension `D`.
    pub embed_dim: usize,
    /// Mel bins expected by the audio encoder.
    pub mel_bins: usize,
    pub audio_feature_dim: usize,
    pub text_feature_dim: usize,
    /// Hidden width of both projection heads.
    pub hidden_dim: usize,
    pub vocab_hash_buckets: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embed_dim: 512,
            mel_bins: 64,
            audio_feature_dim: 128,
            text_feature_dim: 128,
            hidden_dim: 256,
            vocab_hash_buckets: 4096,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embedDim", self.embed_dim),
            ("melBins", self.mel_bins),
            ("audioFeatureDim", self.audio_feature_dim),
            ("textFeatureDim", self.text_feature_dim),
            ("hiddenDim", self.hidden_dim),
            ("vocabHashBuckets", self.vocab_hash_buckets),
        ];
        match dims.iter().find(|(_, d)| *d == 0) {
            Some((name, _)) => Err(EncoderError::InvalidConfig(format!("{name} must be >= 1"))),
            None => Ok(()),
        }
    }
}

/// A vector in the shared audio/text space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding<F = f32> {
    pub values: Vec<F>,
    pub normalized: bool,
}

impl<F: Scalar> Embedding<F> {
    pub fn raw(values: Vec<F>) -> Self {
        Embedding { values, normalized: false }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm_f64(&self.values)
    }

    /// Unit-length copy. Normalizing an already-normalized embedding is a no-op.
    pub fn normalize(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EncoderError::ZeroVector);
        }
        Ok(Embedding {
            values: self.values.iter().map(|&v| F::of(v.as_f64() / norm)).collect(),
            normalized: true,
        })
    }

    pub fn cast<G: Scalar>(&self) -> Embedding<G> {
        Embedding {
            values: self.values.iter().map(|v| G::of(v.as_f64())).collect(),
            normalized: self.normalized,
        }
    }
}

/// Cosine similarity accumulated in 64-bit; zero if either side is zero.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> f64 {
    let (na, nb) = (l2_norm_f64(a), l2_norm_f64(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    crate::scalar::dot_f64(a, b) / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_vector_rejected() {
        assert!(matches!(
            Embedding::raw(vec![0.0f32; 4]).normalize(),
            Err(EncoderError::ZeroVector)
        ));
    }

    #[test]
    fn config_dims_positive() {
        let c = EncoderConfig { hidden_dim: 0, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(EncoderConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn normalize_idempotent_and_unit(v in prop::collection::vec(-100.0f64..100.0, 1..32)) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let once = Embedding::raw(v).normalize().unwrap();
            prop_assert!((once.norm() - 1.0).abs() < 1e-6);
            let mut again = once.clone();
            again.normalized = false;
            let twice = again.normalize().unwrap();
            for (a, b) in once.values.iter().zip(&twice.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_with_positive_multiple_is_one(
            v in prop::collection::vec(-10.0f64..10.0, 1..32),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert!((cosine(&v, &scaled) - 1.0).abs() < 1e-9);
        }
    }
}
