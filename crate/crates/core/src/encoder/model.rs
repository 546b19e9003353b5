use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{relu, Dense, ProjectionHead};
use super::text::hash_tokens;
use super::{Embedding, EncoderConfig, EncoderError, Result};
use crate::dsp::MelSpectrogram;
use crate::scalar::Scalar;

/// Time-mean of the mel frames → affine → ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioEncoder<F> {
    pub layer: Dense<F>,
}

impl<F: Scalar> AudioEncoder<F> {
    pub fn mel_bins(&self) -> usize {
        self.layer.inputs()
    }

    pub fn encode(&self, mel: &MelSpectrogram<F>) -> Result<Array1<F>> {
        if mel.mel_bins() != self.mel_bins() {
            return Err(EncoderError::DimensionMismatch {
                expected: self.mel_bins(),
                actual: mel.mel_bins(),
            });
        }
        Ok(self.encode_mean(mel.time_mean().view()))
    }

    /// Encoder applied to an already time-averaged mel vector.
    pub fn encode_mean(&self, mean: ArrayView1<'_, F>) -> Array1<F> {
        self.layer.forward(mean).mapv(relu)
    }

    pub fn encode_batch(&self, means: ArrayView2<'_, F>) -> Array2<F> {
        self.layer.forward_batch(means).mapv(relu)
    }
}

/// Hashed bag of tokens → affine → ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder<F> {
    pub layer: Dense<F>,
}

impl<F: Scalar> TextEncoder<F> {
    pub fn buckets(&self) -> usize {
        self.layer.inputs()
    }

    pub fn counts(&self, text: &str) -> Array1<F> {
        hash_tokens(text, self.buckets())
            .into_iter()
            .map(|c| F::of(c as f64))
            .collect()
    }

    pub fn encode(&self, text: &str) -> Array1<F> {
        self.encode_counts(self.counts(text).view())
    }

    pub fn encode_counts(&self, counts: ArrayView1<'_, F>) -> Array1<F> {
        self.layer.forward(counts).mapv(relu)
    }

    pub fn encode_batch(&self, counts: ArrayView2<'_, F>) -> Array2<F> {
        self.layer.forward_batch(counts).mapv(relu)
    }
}

/// Named view of one parameter tensor.
#[derive(Debug)]
pub struct ParamTensor<'a, F> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [F],
}

/// Both towers, both projection heads and the log-temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveModel<F> {
    pub config: EncoderConfig,
    pub audio_encoder: AudioEncoder<F>,
    pub text_encoder: TextEncoder<F>,
    pub audio_head: ProjectionHead<F>,
    pub text_head: ProjectionHead<F>,
    /// `tau = exp(log_tau)`.
    pub log_tau: F,
}

pub const INITIAL_TAU: f64 = 0.07;

impl<F: Scalar> ContrastiveModel<F> {
    /// Glorot-initialized model with `tau = 0.07`.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(ContrastiveModel {
            audio_encoder: AudioEncoder {
                layer: Dense::glorot(config.mel_bins, config.audio_feature_dim, &mut rng),
            },
            text_encoder: TextEncoder {
                layer: Dense::glorot(config.vocab_hash_buckets, config.text_feature_dim, &mut rng),
            },
            audio_head: ProjectionHead::glorot(
                config.audio_feature_dim,
                config.hidden_dim,
                config.embed_dim,
                &mut rng,
            ),
            text_head: ProjectionHead::glorot(
                config.text_feature_dim,
                config.hidden_dim,
                config.embed_dim,
                &mut rng,
            ),
            log_tau: F::of(INITIAL_TAU.ln()),
            config,
        })
    }

    /// Same shapes, every parameter zero (including `log_tau`).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, data) in z.params_mut() {
            data.fill(F::zero());
        }
        z
    }

    pub fn tau(&self) -> F {
        self.log_tau.exp()
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn embed_audio(&self, mel: &MelSpectrogram<F>) -> Result<Embedding<F>> {
        let feature = self.audio_encoder.encode(mel)?;
        Embedding::raw(self.audio_head.project(feature.view()).to_vec()).normalize()
    }

    pub fn embed_audio_mean(&self, mean: ArrayView1<'_, F>) -> Result<Embedding<F>> {
        if mean.len() != self.audio_encoder.mel_bins() {
            return Err(EncoderError::DimensionMismatch {
                expected: self.audio_encoder.mel_bins(),
                actual: mean.len(),
            });
        }
        let feature = self.audio_encoder.encode_mean(mean);
        Embedding::raw(self.audio_head.project(feature.view()).to_vec()).normalize()
    }

    pub fn embed_text(&self, text: &str) -> Result<Embedding<F>> {
        let feature = self.text_encoder.encode(text);
        Embedding::raw(self.text_head.project(feature.view()).to_vec()).normalize()
    }

    /// All parameters in a fixed order.
    pub fn params(&self) -> Vec<ParamTensor<'_, F>> {
        fn dense<'a, F: Scalar>(
            out: &mut Vec<ParamTensor<'a, F>>,
            w: &'static str,
            b: &'static str,
            d: &'a Dense<F>,
        ) {
            out.push(ParamTensor {
                name: w,
                shape: d.weight.shape().to_vec(),
                data: d.weight.as_slice().expect("standard layout"),
            });
            out.push(ParamTensor {
                name: b,
                shape: d.bias.shape().to_vec(),
                data: d.bias.as_slice().expect("standard layout"),
            });
        }
        let mut out = Vec::with_capacity(13);
        dense(&mut out, "audio_encoder.weight", "audio_encoder.bias", &self.audio_encoder.layer);
        dense(&mut out, "text_encoder.weight", "text_encoder.bias", &self.text_encoder.layer);
        dense(&mut out, "audio_head.first.weight", "audio_head.first.bias", &self.audio_head.first);
        dense(&mut out, "audio_head.second.weight", "audio_head.second.bias", &self.audio_head.second);
        dense(&mut out, "text_head.first.weight", "text_head.first.bias", &self.text_head.first);
        dense(&mut out, "text_head.second.weight", "text_head.second.bias", &self.text_head.second);
        out.push(ParamTensor {
            name: "log_tau",
            shape: vec![1],
            data: std::slice::from_ref(&self.log_tau),
        });
        out
    }

    /// Mutable counterpart of [`params`](Self::params), same order.
    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut [F])> {
        let ContrastiveModel {
            audio_encoder,
            text_encoder,
            audio_head,
            text_head,
            log_tau,
            ..
        } = self;
        fn s<F, D: ndarray::Dimension>(a: &mut ndarray::Array<F, D>) -> &mut [F] {
            a.as_slice_mut().expect("standard layout")
        }
        vec![
            ("audio_encoder.weight", s(&mut audio_encoder.layer.weight)),
            ("audio_encoder.bias", s(&mut audio_encoder.layer.bias)),
            ("text_encoder.weight", s(&mut text_encoder.layer.weight)),
            ("text_encoder.bias", s(&mut text_encoder.layer.bias)),
            ("audio_head.first.weight", s(&mut audio_head.first.weight)),
            ("audio_head.first.bias", s(&mut audio_head.first.bias)),
            ("audio_head.second.weight", s(&mut audio_head.second.weight)),
            ("audio_head.second.bias", s(&mut audio_head.second.bias)),
            ("text_head.first.weight", s(&mut text_head.first.weight)),
            ("text_head.first.bias", s(&mut text_head.first.bias)),
            ("text_head.second.weight", s(&mut text_head.second.weight)),
            ("text_head.second.bias", s(&mut text_head.second.bias)),
            ("log_tau", std::slice::from_mut(log_tau)),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> ContrastiveModel<G> {
        ContrastiveModel {
            config: self.config,
            audio_encoder: AudioEncoder { layer: self.audio_encoder.layer.cast() },
            text_encoder: TextEncoder { layer: self.text_encoder.layer.cast() },
            audio_head: self.audio_head.cast(),
            text_head: self.text_head.cast(),
            log_tau: G::of(self.log_tau.as_f64()),
        }
    }
}
