use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, Result, TrainError};
use crate::encoder::{ContrastiveModel, EncoderConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"STCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Model parameters, configuration and (optionally) optimizer state after `epoch` epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub model: ContrastiveModel<f32>,
    pub optimizer: Option<Adam>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    encoder: EncoderConfig,
    adam: Option<AdamConfig>,
}

/// Layout (little-endian): `magic | version u32 | epoch u32 | adamStep u64 |
/// configLen u32 | config JSON | tensorCount u32`, then per tensor
/// `nameLen u32 | name | ndim u32 | dims u32… | f32 values`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(ckpt)?)?;
    w.flush()?;
    Ok(())
}

fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        encoder: ckpt.model.config,
        adam: ckpt.optimizer.as_ref().map(|o| o.config),
    })?;
    let params = ckpt.model.params();
    let mut tensors: Vec<(String, Vec<usize>, &[f32])> = params
        .iter()
        .map(|p| (p.name.to_string(), p.shape.clone(), p.data))
        .collect();
    if let Some(opt) = &ckpt.optimizer {
        for (k, p) in params.iter().enumerate() {
            tensors.push((format!("adam.m.{}", p.name), p.shape.clone(), &opt.m[k]));
            tensors.push((format!("adam.v.{}", p.name), p.shape.clone(), &opt.v[k]));
        }
    }

    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ckpt.epoch as u32).to_le_bytes());
    out.extend_from_slice(&ckpt.optimizer.as_ref().map_or(0, |o| o.step).to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, shape, data) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode(&std::fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TrainError::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let corrupt = |msg: String| TrainError::CorruptCheckpoint(msg);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let epoch = r.u32()? as usize;
    let step = r.u64()?;
    let header_len = r.u32()? as usize;
    let header: Header =
        serde_json::from_slice(r.take(header_len)?).map_err(|e| corrupt(format!("config: {e}")))?;
    let count = r.u32()? as usize;
    let mut tensors: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| corrupt(e.to_string()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = r
            .take(len.checked_mul(4).ok_or_else(|| corrupt("tensor too large".into()))?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(name, (shape, data));
    }
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut model = ContrastiveModel::<f32>::new(header.encoder, 0)
        .map_err(|e| corrupt(format!("config: {e}")))?;
    let mut take_tensor = |name: &str, shape: &[usize]| -> Result<Vec<f32>> {
        let (s, data) = tensors
            .remove(name)
            .ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if s != shape {
            return Err(corrupt(format!("tensor {name} has shape {s:?}, expected {shape:?}")));
        }
        Ok(data)
    };
    let layout: Vec<(&'static str, Vec<usize>)> =
        model.params().iter().map(|p| (p.name, p.shape.clone())).collect();
    for ((name, shape), (_, dst)) in layout.iter().zip(model.params_mut()) {
        dst.copy_from_slice(&take_tensor(name, shape)?);
    }
    let optimizer = match header.adam {
        Some(config) => {
            let mut m = Vec::with_capacity(layout.len());
            let mut v = Vec::with_capacity(layout.len());
            for (name, shape) in &layout {
                m.push(take_tensor(&format!("adam.m.{name}"), shape)?);
                v.push(take_tensor(&format!("adam.v.{name}"), shape)?);
            }
            Some(Adam { config, step, m, v })
        }
        None => None,
    };
    Ok(Checkpoint { epoch, model, optimizer })
}
