use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grads, sample_caption, save_checkpoint, Adam, AdamConfig, Checkpoint, Result, TrainError};
use crate::caption::Caption;
use crate::encoder::{hash_tokens, ContrastiveModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-3,
            epochs: 50,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    // `!(x > 0.0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_size < 2 {
            return bad("batchSize must be >= 2");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learningRate must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be > 0");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// One training clip: its time-averaged mel vector and the captions of its recording.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub clip_id: String,
    pub recording_id: String,
    pub mel_mean: Vec<f32>,
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCorpus {
    pub examples: Vec<TrainExample>,
}

impl TrainingCorpus {
    /// Joins clip features to captions by recording id, so every chunk of a
    /// recording shares its captions. Returns the clip ids left without a caption.
    pub fn assemble(
        features: impl IntoIterator<Item = (String, String, Vec<f32>)>,
        captions: &[Caption],
    ) -> (Self, Vec<String>) {
        let mut by_recording: HashMap<&str, Vec<String>> = HashMap::new();
        for c in captions {
            by_recording.entry(c.recording_id.as_str()).or_default().push(c.text.clone());
        }
        let mut corpus = TrainingCorpus::default();
        let mut missing = Vec::new();
        for (clip_id, recording_id, mel_mean) in features {
            match by_recording.get(recording_id.as_str()) {
                Some(caps) => corpus.examples.push(TrainExample {
                    clip_id,
                    recording_id,
                    mel_mean,
                    captions: caps.clone(),
                }),
                None => missing.push(clip_id),
            }
        }
        (corpus, missing)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: ContrastiveModel<f32>,
    pub optimizer: Adam,
    /// Completed epochs.
    pub epoch: usize,
}

impl TrainState {
    pub fn new(model: ContrastiveModel<f32>, config: &TrainConfig) -> Self {
        let optimizer = Adam::new(config.adam(), &model);
        TrainState { model, optimizer, epoch: 0 }
    }

    pub fn from_checkpoint(ckpt: Checkpoint, config: &TrainConfig) -> Self {
        let optimizer = ckpt.optimizer.unwrap_or_else(|| Adam::new(config.adam(), &ckpt.model));
        TrainState { model: ckpt.model, optimizer, epoch: ckpt.epoch }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            epoch: self.epoch,
            model: self.model.clone(),
            optimizer: Some(self.optimizer.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<EpochLog>,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    order
}

/// Consecutive slices of `batch_size`; a trailing singleton joins the previous batch.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

fn assemble_batch(
    corpus: &TrainingCorpus,
    idx: &[usize],
    mel_bins: usize,
    buckets: usize,
    epoch: usize,
    seed: u64,
) -> Result<(Array2<f32>, Array2<f32>)> {
    let mut audio = Array2::<f32>::zeros((idx.len(), mel_bins));
    let mut text = Array2::<f32>::zeros((idx.len(), buckets));
    for (row, &i) in idx.iter().enumerate() {
        let ex = &corpus.examples[i];
        if ex.mel_mean.len() != mel_bins {
            return Err(TrainError::Encoder(crate::encoder::EncoderError::DimensionMismatch {
                expected: mel_bins,
                actual: ex.mel_mean.len(),
            }));
        }
        audio.row_mut(row).assign(&ndarray::ArrayView1::from(&ex.mel_mean[..]));
        let caption = sample_caption(&ex.captions, &ex.recording_id, epoch, seed)
            .ok_or_else(|| TrainError::InvalidBatch(format!("{} has no captions", ex.clip_id)))?;
        for (b, c) in hash_tokens(caption, buckets).into_iter().enumerate() {
            text[[row, b]] = c as f32;
        }
    }
    Ok((audio, text))
}

/// Runs epochs `state.epoch + 1 ..= config.epochs`. With a checkpoint
/// directory, `epoch-NNNN.ckpt` and `loss.csv` are written after every epoch.
/// A non-finite loss aborts with [`TrainError::Divergence`] carrying the state
/// at the end of the last completed epoch.
pub fn train(
    mut state: TrainState,
    corpus: &TrainingCorpus,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.len() < 2 {
        return Err(TrainError::InvalidConfig(format!(
            "need at least 2 training examples, have {}",
            corpus.len()
        )));
    }
    state.optimizer.config = config.adam();
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mel_bins = state.model.audio_encoder.mel_bins();
    let buckets = state.model.text_encoder.buckets();
    let mut log = Vec::new();

    while state.epoch < config.epochs {
        let epoch = state.epoch + 1;
        let last_good = state.clone();
        let order = epoch_order(corpus.len(), config.seed, epoch);
        let mut total = 0.0;
        for idx in batches(&order, config.batch_size) {
            let (audio, text) = assemble_batch(corpus, idx, mel_bins, buckets, epoch, config.seed)?;
            let (loss, grads) = match loss_and_grads(&state.model, audio.view(), text.view()) {
                Ok(v) => v,
                Err(TrainError::NonFiniteLoss) => {
                    return Err(TrainError::Divergence { epoch, last_good: Box::new(last_good) })
                }
                Err(e) => return Err(e),
            };
            total += loss * idx.len() as f64;
            state.optimizer.step(&mut state.model, &grads);
        }
        state.epoch = epoch;
        let entry = EpochLog {
            epoch,
            train_loss: total / corpus.len() as f64,
            tau: state.model.tau() as f64,
        };
        log::info!("epoch {epoch}: loss {:.5}, tau {:.4}", entry.train_loss, entry.tau);
        log.push(entry);
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(&state.checkpoint(), &dir.join(format!("epoch-{epoch:04}.ckpt")))?;
            write_loss_log(&log, &dir.join("loss.csv"))?;
        }
    }
    Ok(TrainOutcome { state, log })
}

pub fn write_loss_log(log: &[EpochLog], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for entry in log {
        w.serialize(entry)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
