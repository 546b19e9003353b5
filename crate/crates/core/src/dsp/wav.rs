use std::io::{Cursor, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, DspError, Result};
use crate::scalar::Scalar;

fn map_hound(e: hound::Error) -> DspError {
    match e {
        hound::Error::Unsupported => DspError::UnsupportedEncoding("unsupported WAV variant".into()),
        hound::Error::FormatError(msg) => DspError::CorruptFile(msg.into()),
        hound::Error::IoError(io) => DspError::CorruptFile(io.to_string()),
        other => DspError::CorruptFile(other.to_string()),
    }
}

/// Reads a PCM WAV file at its native rate, downmixed to mono.
pub fn load_wav<F: Scalar>(path: &Path) -> Result<AudioClip<F>> {
    let file = std::fs::File::open(path)?;
    decode_wav(std::io::BufReader::new(file))
}

/// Decodes 16/24/32-bit integer or 32-bit float PCM; channels are averaged.
pub fn decode_wav<F: Scalar, R: Read>(reader: R) -> Result<AudioClip<F>> {
    let reader = WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(map_hound)?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(DspError::UnsupportedEncoding(format!("{fmt:?} {bits}-bit")));
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(DspError::CorruptFile("partial sample frame".into()));
    }
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| F::of(frame.iter().sum::<f64>() / channels as f64))
        .collect();
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// 16-bit mono PCM WAV bytes; samples outside [-1, 1] are clipped.
pub fn encode_wav<F: Scalar>(clip: &AudioClip<F>) -> Vec<u8> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for s in &clip.samples {
            let v = (s.as_f64().clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
            w.write_sample(v).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}
