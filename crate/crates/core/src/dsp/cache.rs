use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{DspError, MelSpectrogram, Result};

pub const MEL_CACHE_MAGIC: [u8; 4] = *b"MELF";
pub const MEL_CACHE_VERSION: u32 = 1;

/// Writes `magic | frames u32 | melBins u32 | version u32` followed by
/// row-major little-endian f32 values.
pub fn write_mel_cache(mel: &MelSpectrogram<f32>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MEL_CACHE_MAGIC)?;
    w.write_all(&(mel.frames() as u32).to_le_bytes())?;
    w.write_all(&(mel.mel_bins() as u32).to_le_bytes())?;
    w.write_all(&MEL_CACHE_VERSION.to_le_bytes())?;
    for v in mel.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a cache file. `hop`/`window` are not stored and must come from the
/// corpus configuration.
pub fn read_mel_cache(path: &Path, hop: usize, window: usize) -> Result<MelSpectrogram<f32>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 16 || bytes[..4] != MEL_CACHE_MAGIC {
        return Err(DspError::CorruptCache(format!("{}: bad header", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (frames, bins, version) = (word(4), word(8), word(12) as u32);
    if version != MEL_CACHE_VERSION {
        return Err(DspError::CorruptCache(format!("unsupported version {version}")));
    }
    let body = &bytes[16..];
    if body.len() != frames * bins * 4 {
        return Err(DspError::CorruptCache(format!(
            "{}: expected {} values, found {} bytes",
            path.display(),
            frames * bins,
            body.len()
        )));
    }
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Array2::from_shape_vec((frames, bins), data)
        .map_err(|e| DspError::CorruptCache(e.to_string()))?;
    Ok(MelSpectrogram { values, hop, window })
}
