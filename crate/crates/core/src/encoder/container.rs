use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Embedding, EncoderError, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMBD";
pub const EMBEDDING_VERSION: u32 = 1;

/// Id-keyed embeddings sharing one dimension, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub entries: Vec<(String, Embedding<f32>)>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        EmbeddingSet { dim, entries: Vec::new() }
    }

    pub fn push(&mut self, id: impl Into<String>, embedding: Embedding<f32>) -> Result<()> {
        if embedding.dim() != self.dim {
            return Err(EncoderError::DimensionMismatch {
                expected: self.dim,
                actual: embedding.dim(),
            });
        }
        self.entries.push((id.into(), embedding));
        Ok(())
    }

    pub fn into_map(self) -> BTreeMap<String, Embedding<f32>> {
        self.entries.into_iter().collect()
    }
}

/// Layout: `magic | version u32 | D u32 | count u32`, then per entry
/// `idLength u32 | id bytes (UTF-8) | D × f32`, all little-endian.
pub fn save_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_embeddings<W: Write>(set: &EmbeddingSet, w: &mut W) -> Result<()> {
    w.write_all(&EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    w.write_all(&(set.dim as u32).to_le_bytes())?;
    w.write_all(&(set.entries.len() as u32).to_le_bytes())?;
    for (id, emb) in &set.entries {
        if emb.dim() != set.dim {
            return Err(EncoderError::DimensionMismatch {
                expected: set.dim,
                actual: emb.dim(),
            });
        }
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        for v in &emb.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Loads a container. Entries are flagged normalized when their norm is 1 ± 1e-6.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    parse_embeddings(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            EncoderError::CorruptContainer(format!("truncated at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub(crate) fn parse_embeddings(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != EMBEDDING_MAGIC {
        return Err(EncoderError::CorruptContainer("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != EMBEDDING_VERSION {
        return Err(EncoderError::CorruptContainer(format!("unsupported version {version}")));
    }
    let dim = cur.u32()? as usize;
    let count = cur.u32()? as usize;
    let mut set = EmbeddingSet::new(dim);
    for _ in 0..count {
        let id_len = cur.u32()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|e| EncoderError::CorruptContainer(e.to_string()))?
            .to_string();
        let values: Vec<f32> = cur
            .take(dim * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut emb = Embedding::raw(values);
        emb.normalized = (emb.norm() - 1.0).abs() <= 1e-6;
        set.entries.push((id, emb));
    }
    if cur.pos != bytes.len() {
        return Err(EncoderError::CorruptContainer(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    Ok(set)
}
