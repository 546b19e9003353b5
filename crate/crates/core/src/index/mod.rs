//! Exact top-k cosine search over normalized clip embeddings.
//!
//! On disk an index is an embedding container plus a `<path>.meta.jsonl`
//! sidecar with one [`EntryMeta`] line per clip.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{load_embeddings, save_embeddings, Embedding, EmbeddingSet, EncoderError};
use crate::scalar::dot_f64;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("clip id {0} is already indexed")]
    DuplicateId(String),
    #[error("dimension mismatch: index has {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("k must be >= 1")]
    InvalidK,
    #[error("index is empty")]
    EmptyIndex,
    #[error("index metadata: {0}")]
    CorruptMetadata(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = IndexError> = std::result::Result<T, E>;

/// Everything stored about a clip except its vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntryMeta {
    pub clip_id: String,
    pub caption_common: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species_common: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species_scientific: Option<String>,
    pub audio_path: String,
    #[serde(default)]
    pub chunk_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub meta: EntryMeta,
    pub embedding: Embedding<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchResult {
    pub clip_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: usize,
    /// Row-major `len × dim`, unit rows.
    vectors: Vec<f32>,
    meta: Vec<EntryMeta>,
    by_id: HashMap<String, usize>,
}

/// Score descending, then clip id ascending.
fn rank_order(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        VectorIndex { dim, ..Default::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    /// Adds a clip; the embedding is normalized if it is not already.
    pub fn add(&mut self, entry: IndexEntry) -> Result<()> {
        if entry.embedding.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: entry.embedding.dim(),
            });
        }
        if self.by_id.contains_key(&entry.meta.clip_id) {
            return Err(IndexError::DuplicateId(entry.meta.clip_id));
        }
        let unit = entry.embedding.normalize()?;
        self.by_id.insert(entry.meta.clip_id.clone(), self.meta.len());
        self.vectors.extend_from_slice(&unit.values);
        self.meta.push(entry.meta);
        Ok(())
    }

    pub fn get(&self, clip_id: &str) -> Option<(&EntryMeta, &[f32])> {
        self.by_id.get(clip_id).map(|&i| (&self.meta[i], self.vector(i)))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&EntryMeta, &[f32])> {
        self.meta.iter().enumerate().map(|(i, m)| (m, self.vector(i)))
    }

    fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// The `k` entries most cosine-similar to `query`, best first. `k` larger
    /// than the index returns every entry.
    pub fn search_topk(&self, query: &Embedding<f32>, k: usize) -> Result<Vec<SearchResult>> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, actual: query.dim() });
        }
        let q = query.normalize()?;
        let mut scored: Vec<(f64, &str)> = self
            .vectors
            .par_chunks(self.dim)
            .zip(self.meta.par_iter())
            .map(|(v, m)| (dot_f64(&q.values, v), m.clip_id.as_str()))
            .collect();
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank_order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(rank_order);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, id))| SearchResult { clip_id: id.to_string(), score, rank: i + 1 })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut set = EmbeddingSet::new(self.dim);
        for (m, v) in self.entries() {
            let mut e = Embedding::raw(v.to_vec());
            e.normalized = true;
            set.push(m.clip_id.clone(), e)?;
        }
        save_embeddings(&set, path)?;
        let mut w = BufWriter::new(File::create(meta_path(path))?);
        for m in &self.meta {
            serde_json::to_writer(&mut w, m)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set = load_embeddings(path)?;
        let mut meta: HashMap<String, EntryMeta> = HashMap::new();
        for (n, line) in BufReader::new(File::open(meta_path(path))?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let m: EntryMeta = serde_json::from_str(&line)
                .map_err(|e| IndexError::CorruptMetadata(format!("line {}: {e}", n + 1)))?;
            meta.insert(m.clip_id.clone(), m);
        }
        let mut index = VectorIndex::new(set.dim);
        for (id, emb) in set.entries {
            let m = meta
                .remove(&id)
                .ok_or_else(|| IndexError::CorruptMetadata(format!("no metadata for {id}")))?;
            if index.by_id.contains_key(&id) {
                return Err(IndexError::DuplicateId(id));
            }
            // Stored vectors are taken as-is so reloaded scores are bit-identical.
            index.by_id.insert(id, index.meta.len());
            index.vectors.extend_from_slice(&emb.values);
            index.meta.push(m);
        }
        Ok(index)
    }
}

pub fn meta_path(index_path: &Path) -> PathBuf {
    let mut s = index_path.as_os_str().to_owned();
    s.push(".meta.jsonl");
    PathBuf::from(s)
}

/// Atomically swappable, read-mostly handle to the current index snapshot.
#[derive(Debug, Default)]
pub struct SharedIndex {
    current: RwLock<Option<Arc<VectorIndex>>>,
}

impl SharedIndex {
    pub fn new(index: Option<VectorIndex>) -> Self {
        SharedIndex { current: RwLock::new(index.map(Arc::new)) }
    }

    pub fn snapshot(&self) -> Option<Arc<VectorIndex>> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn publish(&self, index: VectorIndex) {
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(index));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta(id: &str) -> EntryMeta {
        EntryMeta {
            clip_id: id.into(),
            caption_common: format!("The sound of {id}"),
            species_common: None,
            species_scientific: None,
            audio_path: format!("{id}.wav"),
            chunk_index: 0,
        }
    }

    fn entry(id: &str, v: Vec<f32>) -> IndexEntry {
        IndexEntry { meta: meta(id), embedding: Embedding::raw(v) }
    }

    fn random_index(n: usize, d: usize, seed: u64) -> VectorIndex {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = VectorIndex::new(d);
        for i in 0..n {
            let v: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            idx.add(entry(&format!("c{i:04}"), v)).unwrap();
        }
        idx
    }

    fn brute_force(idx: &VectorIndex, q: &[f32], k: usize) -> Vec<(String, f64)> {
        let qn: f64 = q.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        let q: Vec<f32> = q.iter().map(|&x| (x as f64 / qn) as f32).collect();
        let mut all: Vec<(String, f64)> = idx
            .entries()
            .map(|(m, v)| {
                let mut s = 0.0f64;
                for j in 0..v.len() {
                    s += q[j] as f64 * v[j] as f64;
                }
                (m.clip_id.clone(), s)
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn self_query_ranks_first() {
        let idx = random_index(50, 8, 1);
        let (_, v) = idx.get("c0017").unwrap();
        let res = idx.search_topk(&Embedding::raw(v.to_vec()), 3).unwrap();
        assert_eq!(res[0].clip_id, "c0017");
        assert_eq!(res[0].rank, 1);
        assert!((res[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let mut idx = random_index(300, 6, 2);
        // Exact duplicates force tie-breaking by id.
        let (_, v) = idx.get("c0005").unwrap();
        let v = v.to_vec();
        idx.add(entry("a-dup", v.clone())).unwrap();
        idx.add(entry("z-dup", v.clone())).unwrap();
        for k in [1, 2, 3, 10, 100, 1000] {
            let got: Vec<_> = idx
                .search_topk(&Embedding::raw(v.clone()), k)
                .unwrap()
                .into_iter()
                .map(|r| (r.clip_id, r.score))
                .collect();
            assert_eq!(got, brute_force(&idx, &v, k));
        }
        let top = idx.search_topk(&Embedding::raw(v), 3).unwrap();
        let ids: Vec<_> = top.iter().map(|r| r.clip_id.as_str()).collect();
        assert_eq!(ids, ["a-dup", "c0005", "z-dup"]);
    }

    #[test]
    fn k_beyond_size_returns_all() {
        let idx = random_index(7, 4, 3);
        let res = idx.search_topk(&Embedding::raw(vec![1.0, 0.0, 0.0, 0.0]), 50).unwrap();
        assert_eq!(res.len(), 7);
    }

    #[test]
    fn errors() {
        let mut idx = VectorIndex::new(3);
        assert!(matches!(
            idx.search_topk(&Embedding::raw(vec![1.0, 0.0, 0.0]), 1),
            Err(IndexError::EmptyIndex)
        ));
        idx.add(entry("a", vec![1.0, 0.0, 0.0])).unwrap();
        assert!(matches!(idx.add(entry("a", vec![0.0, 1.0, 0.0])), Err(IndexError::DuplicateId(_))));
        assert!(matches!(
            idx.add(entry("b", vec![1.0, 0.0])),
            Err(IndexError::DimensionMismatch { expected: 3, actual: 2 })
        ));
        assert!(matches!(idx.search_topk(&Embedding::raw(vec![1.0, 0.0, 0.0]), 0), Err(IndexError::InvalidK)));
        assert!(matches!(
            idx.add(entry("z", vec![0.0; 3])),
            Err(IndexError::Encoder(EncoderError::ZeroVector))
        ));
    }

    #[test]
    fn save_load_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clips.idx");
        let mut idx = random_index(120, 16, 4);
        idx.add(IndexEntry {
            meta: EntryMeta {
                species_common: Some("Wood Thrush".into()),
                species_scientific: Some("Hylocichla mustelina".into()),
                chunk_index: 2,
                ..meta("wt:2")
            },
            embedding: Embedding::raw(vec![0.25; 16]),
        })
        .unwrap();
        idx.save(&path).unwrap();
        assert!(meta_path(&path).exists());
        let loaded = VectorIndex::load(&path).unwrap();
        assert_eq!(loaded.get("wt:2").unwrap().0.species_common.as_deref(), Some("Wood Thrush"));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let q: Vec<f32> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = idx.search_topk(&Embedding::raw(q.clone()), 25).unwrap();
            let b = loaded.search_topk(&Embedding::raw(q), 25).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.clip_id, y.clip_id);
                assert_eq!(x.score.to_bits(), y.score.to_bits());
            }
        }
    }

    #[test]
    fn missing_metadata_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.idx");
        random_index(3, 4, 5).save(&path).unwrap();
        std::fs::write(meta_path(&path), "").unwrap();
        assert!(matches!(VectorIndex::load(&path), Err(IndexError::CorruptMetadata(_))));
    }

    #[test]
    fn shared_snapshot_swap() {
        let shared = SharedIndex::new(None);
        assert!(shared.snapshot().is_none());
        shared.publish(random_index(3, 2, 0));
        let old = shared.snapshot().unwrap();
        shared.publish(random_index(5, 2, 1));
        assert_eq!(old.len(), 3);
        assert_eq!(shared.snapshot().unwrap().len(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scores_non_increasing_and_bounded(seed in any::<u64>(), n in 1usize..200, k in 1usize..50) {
            let idx = random_index(n, 5, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let q: Vec<f32> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let res = idx.search_topk(&Embedding::raw(q), k).unwrap();
            prop_assert_eq!(res.len(), k.min(n));
            for w in res.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            prop_assert!(res.iter().all(|r| r.score.abs() <= 1.0 + 1e-6));
        }

        #[test]
        fn adding_preserves_relative_order(seed in any::<u64>(), extra in 1usize..20) {
            let mut idx = random_index(60, 4, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
            let q: Vec<f32> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let before: Vec<String> = idx.search_topk(&Embedding::raw(q.clone()), 10).unwrap().into_iter().map(|r| r.clip_id).collect();
            for i in 0..extra {
                let v: Vec<f32> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                idx.add(entry(&format!("new{i}"), v)).unwrap();
            }
            let after: Vec<String> = idx.search_topk(&Embedding::raw(q), 10).unwrap().into_iter().map(|r| r.clip_id).collect();
            let kept: Vec<&String> = after.iter().filter(|id| before.contains(id)).collect();
            let expected: Vec<&String> = before.iter().filter(|id| after.contains(id)).collect();
            prop_assert_eq!(kept, expected);
        }
    }
}
