use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport, Result};
use crate::encoder::{cosine, ContrastiveModel, Embedding};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabelPrompt {
    pub label_id: String,
    pub prompt_text: String,
}

/// Labels with their prompt embeddings (`L × D`, one row per label, label order kept).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPromptSet<F = f32> {
    pub labels: Vec<LabelPrompt>,
    pub embeddings: Array2<F>,
}

impl<F: Scalar> LabelPromptSet<F> {
    /// Embeds one prompt per label. `template` may contain `{label}`; without
    /// one the label text is the prompt.
    pub fn embed(labels: &[String], model: &ContrastiveModel<F>, template: Option<&str>) -> Result<Self> {
        if labels.is_empty() {
            return Err(EvalError::InvalidLabels("empty label list".into()));
        }
        let d = model.embed_dim();
        let mut embeddings = Array2::zeros((labels.len(), d));
        let mut prompts = Vec::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            let prompt_text = match template {
                Some(t) => t.replace("{label}", label),
                None => label.clone(),
            };
            let e = model.embed_text(&prompt_text)?;
            embeddings.row_mut(i).assign(&ndarray::ArrayView1::from(&e.values[..]));
            prompts.push(LabelPrompt { label_id: label.clone(), prompt_text });
        }
        Ok(LabelPromptSet { labels: prompts, embeddings })
    }

    /// Prompt set from precomputed vectors (rows in label order).
    pub fn from_embeddings(labels: Vec<LabelPrompt>, embeddings: Array2<F>) -> Result<Self> {
        if labels.is_empty() || labels.len() != embeddings.nrows() {
            return Err(EvalError::InvalidLabels(format!(
                "{} labels for {} prompt embeddings",
                labels.len(),
                embeddings.nrows()
            )));
        }
        Ok(LabelPromptSet { labels, embeddings })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Cosine similarity of the audio embedding to every label prompt, in label order.
pub fn zero_shot_detection_scores<F: Scalar>(audio: &Embedding<F>, set: &LabelPromptSet<F>) -> Result<Vec<f64>> {
    if audio.dim() != set.embeddings.ncols() {
        return Err(EvalError::DimensionMismatch {
            expected: set.embeddings.ncols(),
            actual: audio.dim(),
        });
    }
    Ok(set
        .embeddings
        .rows()
        .into_iter()
        .map(|row| cosine(&audio.values, row.as_slice().expect("standard layout")))
        .collect())
}

/// Index of the most similar label; the earliest label wins ties.
pub fn zero_shot_classify<F: Scalar>(audio: &Embedding<F>, set: &LabelPromptSet<F>) -> Result<usize> {
    let scores = zero_shot_detection_scores(audio, set)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Top-1 accuracy over `(audio embedding, true label id)` pairs.
pub fn zero_shot_accuracy<F: Scalar>(items: &[(Embedding<F>, String)], set: &LabelPromptSet<F>) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut correct = 0;
    for (emb, truth) in items {
        if set.labels[zero_shot_classify(emb, set)?].label_id == *truth {
            correct += 1;
        }
    }
    Ok(EvalReport {
        metric_name: "zeroShotAccuracy".into(),
        value: correct as f64 / items.len() as f64,
        n: None,
        query_count: items.len(),
        skipped_classes: 0,
    })
}
