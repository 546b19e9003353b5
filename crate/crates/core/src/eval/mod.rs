//! Retrieval metrics, the species-oracle baseline, zero-shot prediction and
//! linear probes.

mod probe;
mod retrieval;
mod zeroshot;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use probe::{
    average_precision, eval_probe, read_task_manifest, train_probe, ProbeConfig, ProbeHead, ProbeMetric,
    ProbeTargets, TaskItem, TaskType,
};
pub use retrieval::{evaluate_retrieval, write_query_diagnostics, QueryDiagnostic, RetrievalEval};
pub use zeroshot::{
    zero_shot_accuracy, zero_shot_classify, zero_shot_detection_scores, LabelPrompt, LabelPromptSet,
};

use crate::encoder::EncoderError;
use crate::index::IndexError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("query has no relevant items (m = 0)")]
    NoRelevant,
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid labels: {0}")]
    InvalidLabels(String),
    #[error("malformed task manifest line {line}: {reason}")]
    MalformedTask { line: usize, reason: String },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Removes one leading "The sound of a " / "The sound of an " and trailing whitespace.
pub fn strip_dedup_prefix(caption: &str) -> &str {
    let rest = ["The sound of an ", "The sound of a "]
        .iter()
        .find_map(|p| caption.strip_prefix(p))
        .unwrap_or(caption);
    rest.trim_end()
}

/// Ranked results for one query with relevance flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: String,
    pub items: Vec<(String, f64)>,
    pub relevant: Vec<bool>,
    /// Relevant items in the whole corpus.
    pub m: usize,
}

/// `(1 / min(m, n)) * sum_{k <= n} P(k) rel(k)`.
pub fn ap_at_n(relevant: &[bool], m: usize, n: usize) -> Result<f64> {
    if m == 0 {
        return Err(EvalError::NoRelevant);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevant.iter().take(n).enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / m.min(n) as f64)
}

impl RankedList {
    pub fn ap_at_n(&self, n: usize) -> Result<f64> {
        ap_at_n(&self.relevant, self.m, n)
    }
}

pub fn map_at_n(lists: &[RankedList], n: usize) -> Result<f64> {
    if lists.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let total: f64 = lists.iter().map(|l| l.ap_at_n(n)).sum::<Result<f64>>()?;
    Ok(total / lists.len() as f64)
}

pub fn precision_at_1(lists: &[RankedList]) -> Result<f64> {
    if lists.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = lists.iter().filter(|l| l.relevant.first() == Some(&true)).count();
    Ok(hits as f64 / lists.len() as f64)
}

/// Expected precision@1 of a retriever that recovers a query's species
/// exactly and picks uniformly among that species' clips.
///
/// `clips` holds `(species, caption)` per clip; each clip is one query.
pub fn oracle_precision_at_1<S: AsRef<str>, C: AsRef<str>>(clips: &[(S, C)]) -> Result<f64> {
    use std::collections::HashMap;
    if clips.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut species: HashMap<&str, usize> = HashMap::new();
    let mut same: HashMap<(&str, &str), usize> = HashMap::new();
    for (s, c) in clips {
        let s = s.as_ref();
        *species.entry(s).or_default() += 1;
        *same.entry((s, strip_dedup_prefix(c.as_ref()))).or_default() += 1;
    }
    let total: f64 = clips
        .iter()
        .map(|(s, c)| {
            let s = s.as_ref();
            same[&(s, strip_dedup_prefix(c.as_ref()))] as f64 / species[s] as f64
        })
        .sum();
    Ok(total / clips.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub metric_name: String,
    pub value: f64,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub query_count: usize,
    #[serde(default)]
    pub skipped_classes: usize,
}

pub fn write_reports(reports: &[EvalReport], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(reports)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dedup_prefix() {
        assert_eq!(strip_dedup_prefix("The sound of a Wood Thrush"), "Wood Thrush");
        assert_eq!(strip_dedup_prefix("The sound of an Eastern Whipbird"), "Eastern Whipbird");
        assert_eq!(strip_dedup_prefix("A whale clicking steadily"), "A whale clicking steadily");
        assert_eq!(strip_dedup_prefix("The sound of a The sound of a x"), "The sound of a x");
        assert_eq!(strip_dedup_prefix("the sound of a wren"), "the sound of a wren");
        assert_eq!(strip_dedup_prefix("The sound of a wren  "), "wren");
    }

    #[test]
    fn ap_hand_cases() {
        assert_eq!(ap_at_n(&[true, false, false], 1, 10).unwrap(), 1.0);
        let v = ap_at_n(&[true, false, true, false], 2, 10).unwrap();
        assert!((v - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(ap_at_n(&[true; 10], 12, 10).unwrap(), 1.0);
        assert!(matches!(ap_at_n(&[false], 0, 10), Err(EvalError::NoRelevant)));
    }

    #[test]
    fn ranks_beyond_n_ignored() {
        let mut rel = vec![false; 10];
        rel.push(true);
        assert_eq!(ap_at_n(&rel, 1, 10).unwrap(), 0.0);
    }

    #[test]
    fn oracle_cases() {
        let clips = [
            ("A", "The sound of a Alpha"),
            ("A", "The sound of a Alpha"),
            ("A", "The sound of a Alpha"),
            ("A", "The sound of a Alpha"),
            ("B", "The sound of a Beta calling"),
            ("B", "The sound of a Beta singing"),
        ];
        assert!((oracle_precision_at_1(&clips).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(oracle_precision_at_1(&[("x", "y")]).unwrap(), 1.0);
        let unique = [("A", "1"), ("A", "2"), ("B", "3"), ("B", "4"), ("B", "5")];
        let expected = (2.0 * 0.5 + 3.0 / 3.0) / 5.0;
        assert!((oracle_precision_at_1(&unique).unwrap() - expected).abs() < 1e-12);
        assert!(oracle_precision_at_1::<&str, &str>(&[]).is_err());
    }

    #[test]
    fn map_and_p1() {
        let list = |rel: Vec<bool>, m| RankedList { query: "q".into(), items: vec![], relevant: rel, m };
        let lists = vec![list(vec![true, false], 1), list(vec![false, true], 1)];
        assert!((map_at_n(&lists, 10).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(precision_at_1(&lists).unwrap(), 0.5);
        assert!(map_at_n(&[], 10).is_err());
    }

    #[test]
    fn report_json_shape() {
        let r = EvalReport {
            metric_name: "mAP@10".into(),
            value: 0.5,
            n: Some(10),
            query_count: 3,
            skipped_classes: 0,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["metricName"], "mAP@10");
        assert_eq!(v["N"], 10);
        assert_eq!(v["queryCount"], 3);
        assert_eq!(v["skippedClasses"], 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn ap_is_one_iff_top_min_m_n_relevant(
            rel in prop::collection::vec(any::<bool>(), 1..30),
            extra in 0usize..5,
            n in 1usize..15,
        ) {
            let m = rel.iter().filter(|&&r| r).count() + extra;
            prop_assume!(m >= 1);
            let ap = ap_at_n(&rel, m, n).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
            let need = m.min(n);
            let top_ok = rel.len() >= need && rel[..need].iter().all(|&r| r);
            prop_assert_eq!((ap - 1.0).abs() < 1e-12, top_ok);
        }

        #[test]
        fn map_of_identical_lists_is_ap(rel in prop::collection::vec(any::<bool>(), 1..20), copies in 1usize..5) {
            let m = rel.iter().filter(|&&r| r).count().max(1);
            let l = RankedList { query: "q".into(), items: vec![], relevant: rel, m };
            let lists = vec![l.clone(); copies];
            prop_assert!((map_at_n(&lists, 10).unwrap() - l.ap_at_n(10).unwrap()).abs() < 1e-12);
        }
    }
}
