//! On-disk artifacts shared by the CLI and the HTTP service.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sonotext_core::dsp::{
    chunk_clip, decode_wav, encode_wav, fix_length, load_wav, resample, MelConfig, MelExtractor, CANONICAL_RATE,
    CLIP_SECONDS,
};
use sonotext_core::encoder::{ContrastiveModel, EncoderConfig, Embedding};
use sonotext_core::index::{EntryMeta, VectorIndex};
use sonotext_core::ingest::CorpusSplit;
use sonotext_core::trainer::{load_checkpoint, TrainConfig};

/// Time-averaged mel features of one clip, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureRow {
    pub clip_id: String,
    pub recording_id: String,
    pub chunk_index: usize,
    pub mel_mean: Vec<f32>,
}

/// Optional `[encoder]` and `[train]` tables of a training config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_split(path: &Path) -> Result<CorpusSplit> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Which side of a split to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subset {
    Train,
    Test,
    All,
}

impl Subset {
    pub fn filter(self, split: Option<&CorpusSplit>) -> Result<Option<HashSet<String>>> {
        match (self, split) {
            (Subset::All, _) => Ok(None),
            (_, None) => bail!("--subset {self:?} needs --split"),
            (Subset::Train, Some(s)) => Ok(Some(s.train_ids.iter().cloned().collect())),
            (Subset::Test, Some(s)) => Ok(Some(s.test_ids.iter().cloned().collect())),
        }
    }
}

/// `<index>.ckpt`, the checkpoint published next to an index.
pub fn default_checkpoint_path(index: &Path) -> PathBuf {
    let mut s = index.as_os_str().to_owned();
    s.push(".ckpt");
    PathBuf::from(s)
}

pub fn load_model(path: &Path) -> Result<ContrastiveModel<f32>> {
    Ok(load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?.model)
}

/// A loaded index with the model that embeds queries against it.
#[derive(Debug)]
pub struct Snapshot {
    pub index: VectorIndex,
    pub model: ContrastiveModel<f32>,
}

impl Snapshot {
    pub fn load(index_path: &Path, checkpoint: Option<&Path>) -> Result<Self> {
        let index = VectorIndex::load(index_path).with_context(|| format!("loading index {}", index_path.display()))?;
        let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| default_checkpoint_path(index_path));
        let model = load_model(&ckpt)?;
        if model.embed_dim() != index.dim() {
            bail!("checkpoint embeds to {} dims but the index holds {}", model.embed_dim(), index.dim());
        }
        Ok(Snapshot { index, model })
    }

    /// Ranked hits for a free-text query.
    pub fn search(&self, text: &str, k: usize) -> Result<Vec<Hit>> {
        let query = self.model.embed_text(text)?;
        let results = self.index.search_topk(&query, k)?;
        Ok(results
            .into_iter()
            .map(|r| {
                let (meta, _) = self.index.get(&r.clip_id).expect("search returns indexed ids");
                Hit {
                    rank: r.rank,
                    score: r.score,
                    clip_id: r.clip_id,
                    caption: meta.caption_common.clone(),
                    species_common: meta.species_common.clone(),
                }
            })
            .collect())
    }

    /// Embeds a WAV upload the same way stored clips were embedded.
    pub fn embed_wav(&self, bytes: &[u8]) -> Result<Embedding<f32>> {
        let clip = decode_wav::<f32, _>(bytes)?;
        let clip = fix_length(resample(clip, CANONICAL_RATE), CLIP_SECONDS);
        let extractor = MelExtractor::<f32>::new(mel_config(&self.model))?;
        let mel = extractor.extract(&clip)?;
        Ok(self.model.embed_audio(&mel)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Hit {
    pub rank: usize,
    pub score: f64,
    pub clip_id: String,
    pub caption: String,
    pub species_common: Option<String>,
}

pub fn mel_config(model: &ContrastiveModel<f32>) -> MelConfig {
    MelConfig { mel_bins: model.config.mel_bins, ..MelConfig::default() }
}

/// The 10-second clip behind an index entry, as WAV bytes at the canonical rate.
pub fn clip_wav(corpus_root: &Path, meta: &EntryMeta) -> Result<Vec<u8>> {
    let path = corpus_root.join(&meta.audio_path);
    let clip = resample(load_wav::<f32>(&path).with_context(|| format!("reading {}", path.display()))?, CANONICAL_RATE);
    let chunk = chunk_clip(&clip, meta.chunk_index + 1, CLIP_SECONDS)
        .into_iter()
        .nth(meta.chunk_index)
        .ok_or_else(|| anyhow!("no chunk {} in {}", meta.chunk_index, path.display()))?;
    Ok(encode_wav(&chunk))
}
