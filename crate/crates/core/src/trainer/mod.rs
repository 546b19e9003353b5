//! Symmetric contrastive objective, its gradients, and the training loop.
//!
//! The loss over a batch of `N` matched (audio, text) pairs with similarity
//! matrix `S` and temperature `tau` is the mean of the row-wise and
//! column-wise cross-entropies of `softmax(S / tau)` against the diagonal.
//! Softmaxes and the loss are always evaluated in 64-bit.

mod adam;
mod backprop;
mod checkpoint;
mod sampling;
mod train;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use backprop::{loss_and_grads, Gradients};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use sampling::sample_caption;
pub use train::{
    read_loss_log, train, write_loss_log, EpochLog, TrainConfig, TrainExample, TrainOutcome, TrainState,
    TrainingCorpus,
};

use crate::encoder::EncoderError;
use crate::scalar::Scalar;

pub const TAU_MIN: f64 = 0.01;
pub const TAU_MAX: f64 = 100.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize, last_good: Box<TrainState> },
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

/// `N` matched pairs of normalized embeddings; row `i` of each side forms pair `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<F> {
    pub audio: Array2<F>,
    pub text: Array2<F>,
}

impl<F: Scalar> Batch<F> {
    pub fn new(audio: Array2<F>, text: Array2<F>) -> Result<Self> {
        if audio.dim() != text.dim() {
            return Err(TrainError::InvalidBatch(format!(
                "audio {:?} vs text {:?}",
                audio.dim(),
                text.dim()
            )));
        }
        if audio.nrows() == 0 {
            return Err(TrainError::InvalidBatch("empty batch".into()));
        }
        Ok(Batch { audio, text })
    }

    pub fn len(&self) -> usize {
        self.audio.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.audio.nrows() == 0
    }
}

/// `S[i][j] = audio_i · text_j`.
pub fn similarity_matrix<F: Scalar>(batch: &Batch<F>) -> Array2<F> {
    batch.audio.dot(&batch.text.t())
}

/// Loss and its gradient with respect to the (normalized) batch embeddings and `log tau`.
#[derive(Debug, Clone)]
pub struct LossGrad<F> {
    pub loss: f64,
    pub d_audio: Array2<F>,
    pub d_text: Array2<F>,
    pub d_log_tau: f64,
}

/// Softmax pieces shared by the loss and its gradient.
struct Softmaxes {
    loss: f64,
    /// `dL/dZ` for logits `Z = S / tau`.
    d_logits: Array2<f64>,
    logits: Array2<f64>,
}

fn softmaxes<F: Scalar>(sim: ArrayView2<'_, F>, tau: f64) -> Result<Softmaxes> {
    let n = sim.nrows();
    let logits = sim.mapv(|s| s.as_f64() / tau);
    let mut row = Array2::<f64>::zeros((n, n));
    let mut col = Array2::<f64>::zeros((n, n));
    let mut loss = 0.0;
    for i in 0..n {
        let r = logits.row(i);
        let max = r.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = r.iter().map(|&v| (v - max).exp()).sum();
        for j in 0..n {
            row[[i, j]] = (r[j] - max).exp() / sum;
        }
        loss += max + sum.ln() - logits[[i, i]];

        let c = logits.column(i);
        let max = c.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = c.iter().map(|&v| (v - max).exp()).sum();
        for k in 0..n {
            col[[k, i]] = (c[k] - max).exp() / sum;
        }
        loss += max + sum.ln() - logits[[i, i]];
    }
    let scale = 1.0 / (2.0 * n as f64);
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    let mut d_logits = (row + col) * scale;
    for i in 0..n {
        d_logits[[i, i]] -= 2.0 * scale;
    }
    Ok(Softmaxes { loss, d_logits, logits })
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(TrainError::InvalidConfig(format!("tau must be positive, got {tau}")))
    }
}

/// Symmetric cross-entropy loss of `batch` at temperature `tau`. Non-negative.
pub fn contrastive_loss<F: Scalar>(batch: &Batch<F>, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(softmaxes(similarity_matrix(batch).view(), tau)?.loss)
}

/// Loss plus gradients with respect to the batch embeddings and `log tau`, at `tau = exp(log_tau)`.
pub fn contrastive_loss_grad<F: Scalar>(batch: &Batch<F>, log_tau: f64) -> Result<LossGrad<F>> {
    let tau = log_tau.exp();
    check_tau(tau)?;
    let sm = softmaxes(similarity_matrix(batch).view(), tau)?;
    // Z = S / tau: dL/dS = dL/dZ / tau, dL/dlog_tau = -sum(dL/dZ * Z).
    let d_log_tau = -(&sm.d_logits * &sm.logits).sum();
    let d_sim = sm.d_logits.mapv(|v| F::of(v / tau));
    Ok(LossGrad {
        loss: sm.loss,
        d_audio: d_sim.dot(&batch.text),
        d_text: d_sim.t().dot(&batch.audio),
        d_log_tau,
    })
}
