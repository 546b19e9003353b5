use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{map_at_n, precision_at_1, strip_dedup_prefix, EvalError, EvalReport, RankedList, Result};
use crate::encoder::ContrastiveModel;
use crate::index::VectorIndex;

/// Per-query row of the diagnostics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryDiagnostic {
    pub query_clip_id: String,
    pub query: String,
    pub m: usize,
    pub ap: f64,
    pub hit_at_1: bool,
    pub top_clip_id: String,
}

#[derive(Debug, Clone)]
pub struct RetrievalEval {
    pub lists: Vec<RankedList>,
    pub diagnostics: Vec<QueryDiagnostic>,
    pub reports: Vec<EvalReport>,
}

/// Text-to-audio retrieval over every clip in `index`.
///
/// Each clip's common-name caption is one query. A retrieved clip is relevant
/// when its common-name caption matches the query after
/// [`strip_dedup_prefix`]; the query's own clip counts.
pub fn evaluate_retrieval(index: &VectorIndex, model: &ContrastiveModel<f32>, n: usize) -> Result<RetrievalEval> {
    if index.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut m_by_key: HashMap<&str, usize> = HashMap::new();
    for (meta, _) in index.entries() {
        *m_by_key.entry(strip_dedup_prefix(&meta.caption_common)).or_default() += 1;
    }
    // Identical captions give identical rankings; embed and search each once.
    let mut unique: Vec<&str> = index.entries().map(|(m, _)| m.caption_common.as_str()).collect();
    unique.sort_unstable();
    unique.dedup();
    let ranked: HashMap<&str, Vec<(String, f64)>> = unique
        .par_iter()
        .map(|&q| {
            let emb = model.embed_text(q)?;
            let hits = index.search_topk(&emb, n)?;
            Ok((q, hits.into_iter().map(|r| (r.clip_id, r.score)).collect()))
        })
        .collect::<Result<_>>()?;

    let mut lists = Vec::with_capacity(index.len());
    let mut diagnostics = Vec::with_capacity(index.len());
    for (meta, _) in index.entries() {
        let q = meta.caption_common.as_str();
        let key = strip_dedup_prefix(q);
        let items = ranked[q].clone();
        let relevant: Vec<bool> = items
            .iter()
            .map(|(id, _)| {
                index
                    .get(id)
                    .is_some_and(|(m, _)| strip_dedup_prefix(&m.caption_common) == key)
            })
            .collect();
        let list = RankedList { query: q.to_string(), items, relevant, m: m_by_key[key] };
        diagnostics.push(QueryDiagnostic {
            query_clip_id: meta.clip_id.clone(),
            query: q.to_string(),
            m: list.m,
            ap: list.ap_at_n(n)?,
            hit_at_1: list.relevant.first() == Some(&true),
            top_clip_id: list.items.first().map(|i| i.0.clone()).unwrap_or_default(),
        });
        lists.push(list);
    }
    let reports = vec![
        EvalReport {
            metric_name: format!("mAP@{n}"),
            value: map_at_n(&lists, n)?,
            n: Some(n),
            query_count: lists.len(),
            skipped_classes: 0,
        },
        EvalReport {
            metric_name: "precision@1".into(),
            value: precision_at_1(&lists)?,
            n: Some(1),
            query_count: lists.len(),
            skipped_classes: 0,
        },
    ];
    Ok(RetrievalEval { lists, diagnostics, reports })
}

pub fn write_query_diagnostics(rows: &[QueryDiagnostic], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::index::{EntryMeta, IndexEntry};

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            embed_dim: 8,
            mel_bins: 4,
            audio_feature_dim: 4,
            text_feature_dim: 6,
            hidden_dim: 8,
            vocab_hash_buckets: 32,
        }
    }

    /// Index whose audio vectors are the text embeddings of their own captions,
    /// so every query's top hit is a clip with the same caption.
    fn aligned_index(model: &ContrastiveModel<f32>, captions: &[&str]) -> VectorIndex {
        let mut idx = VectorIndex::new(8);
        for (i, c) in captions.iter().enumerate() {
            idx.add(IndexEntry {
                meta: EntryMeta {
                    clip_id: format!("c{i}"),
                    caption_common: c.to_string(),
                    species_common: None,
                    species_scientific: None,
                    audio_path: String::new(),
                    chunk_index: 0,
                },
                embedding: model.embed_text(c).unwrap(),
            })
            .unwrap();
        }
        idx
    }

    #[test]
    fn aligned_embeddings_give_perfect_scores() {
        let model = ContrastiveModel::<f32>::new(cfg(), 4).unwrap();
        let caps = ["The sound of a wren", "The sound of a wren", "The sound of an owl", "whale clicks"];
        let eval = evaluate_retrieval(&aligned_index(&model, &caps), &model, 10).unwrap();
        assert_eq!(eval.reports[1].value, 1.0);
        assert_eq!(eval.lists.len(), 4);
        assert_eq!(eval.lists[0].m, 2);
        assert!((eval.reports[0].value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dedup_prefix_merges_relevance() {
        let model = ContrastiveModel::<f32>::new(cfg(), 5).unwrap();
        let caps = ["The sound of a Robin", "The sound of an Robin", "Robin"];
        let eval = evaluate_retrieval(&aligned_index(&model, &caps), &model, 10).unwrap();
        assert!(eval.lists.iter().all(|l| l.m == 3));
        assert!(eval.lists.iter().all(|l| l.relevant.iter().all(|&r| r)));
    }

    #[test]
    fn diagnostics_csv() {
        let model = ContrastiveModel::<f32>::new(cfg(), 4).unwrap();
        let eval = evaluate_retrieval(&aligned_index(&model, &["a b", "c d"]), &model, 10).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.csv");
        write_query_diagnostics(&eval.diagnostics, &p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("queryClipId,query,m,ap,hitAt1,topClipId"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn empty_index() {
        let model = ContrastiveModel::<f32>::new(cfg(), 6).unwrap();
        assert!(matches!(evaluate_retrieval(&VectorIndex::new(8), &model, 10), Err(EvalError::EmptyInput)));
    }
}
