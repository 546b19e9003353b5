//! Audio decoding, resampling, fixed-length clips, chunking and mel features.

mod cache;
mod mel;
mod resample;
mod wav;

use thiserror::Error;

pub use cache::{read_mel_cache, write_mel_cache, MEL_CACHE_MAGIC, MEL_CACHE_VERSION};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelConfig, MelExtractor, MelSpectrogram};
pub use resample::resample;
pub use wav::{decode_wav, encode_wav, load_wav};

use crate::scalar::Scalar;

pub const CANONICAL_RATE: u32 = 48_000;
pub const CLIP_SECONDS: f64 = 10.0;
/// Upper bound on chunks taken from one long recording of a rare species.
pub const MAX_CHUNKS: usize = 5;
/// Species with fewer corpus examples than this get their long recordings chunked.
pub const RARE_SPECIES_THRESHOLD: usize = 40;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("corrupt audio file: {0}")]
    CorruptFile(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("corrupt feature cache: {0}")]
    CorruptCache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DspError> = std::result::Result<T, E>;

/// Mono PCM in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<F = f32> {
    pub samples: Vec<F>,
    pub sample_rate: u32,
    pub source_recording_id: String,
    pub chunk_index: usize,
}

impl<F: Scalar> AudioClip<F> {
    pub fn new(samples: Vec<F>, sample_rate: u32) -> Self {
        AudioClip {
            samples,
            sample_rate,
            source_recording_id: String::new(),
            chunk_index: 0,
        }
    }

    pub fn with_source(mut self, recording_id: impl Into<String>) -> Self {
        self.source_recording_id = recording_id.into();
        self
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Stable identifier of this clip: `{recording id}:{chunk index}`.
    pub fn clip_id(&self) -> String {
        clip_id(&self.source_recording_id, self.chunk_index)
    }
}

pub fn clip_id(recording_id: &str, chunk_index: usize) -> String {
    format!("{recording_id}:{chunk_index}")
}

fn target_len(sample_rate: u32, seconds: f64) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

/// Crops from the start or zero-pads at the end to exactly `seconds`.
pub fn fix_length<F: Scalar>(mut clip: AudioClip<F>, seconds: f64) -> AudioClip<F> {
    clip.samples.resize(target_len(clip.sample_rate, seconds), F::zero());
    clip
}

/// How many 10-second chunks to cut from a recording.
///
/// Only recordings longer than one clip whose species has fewer than
/// [`RARE_SPECIES_THRESHOLD`] corpus examples are chunked, into enough
/// consecutive windows to cover the audio, capped at [`MAX_CHUNKS`].
pub fn chunk_plan(clip_seconds: f64, species_corpus_count: usize) -> usize {
    if clip_seconds > CLIP_SECONDS && species_corpus_count < RARE_SPECIES_THRESHOLD {
        let windows = (clip_seconds / CLIP_SECONDS).ceil() as usize;
        windows.clamp(1, MAX_CHUNKS)
    } else {
        1
    }
}

/// Cuts `chunks` consecutive non-overlapping windows from t=0, each fixed to
/// `seconds` (the trailing partial window is zero-padded).
pub fn chunk_clip<F: Scalar>(clip: &AudioClip<F>, chunks: usize, seconds: f64) -> Vec<AudioClip<F>> {
    let window = target_len(clip.sample_rate, seconds);
    (0..chunks.max(1))
        .map(|i| {
            let start = (i * window).min(clip.samples.len());
            let end = ((i + 1) * window).min(clip.samples.len());
            let piece = AudioClip {
                samples: clip.samples[start..end].to_vec(),
                sample_rate: clip.sample_rate,
                source_recording_id: clip.source_recording_id.clone(),
                chunk_index: i,
            };
            fix_length(piece, seconds)
        })
        .collect()
}

/// Full clip preparation for one recording: resample to the canonical rate,
/// then either fix to one clip or chunk per [`chunk_plan`].
pub fn prepare_clips<F: Scalar>(raw: AudioClip<F>, species_corpus_count: usize) -> Vec<AudioClip<F>> {
    let clip = resample(raw, CANONICAL_RATE);
    let chunks = chunk_plan(clip.duration_seconds(), species_corpus_count);
    chunk_clip(&clip, chunks, CLIP_SECONDS)
}
