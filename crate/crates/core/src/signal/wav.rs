use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

/// Reads a PCM WAV file, averaging channels to mono and scaling integer
/// samples to [-1, 1].
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "zero channels".into(),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| classify(path, e))?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedCodec {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {format:?}"),
            })
        }
    };
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(mono, spec.sample_rate, path.to_string_lossy()).map_err(|e| match e {
        Error::InvalidWaveform(reason) => Error::MalformedHeader {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

fn classify(path: &Path, err: hound::Error) -> Error {
    let path = path.to_path_buf();
    match err {
        hound::Error::Unsupported => Error::UnsupportedCodec {
            path,
            reason: "non-PCM or unsupported sample layout".into(),
        },
        hound::Error::FormatError(reason) => Error::MalformedHeader {
            path,
            reason: reason.into(),
        },
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::MalformedHeader {
                path,
                reason: "truncated file".into(),
            }
        }
        hound::Error::IoError(e) => Error::Io(e),
        other => Error::MalformedHeader {
            path,
            reason: other.to_string(),
        },
    }
}

/// Writes a mono 16-bit PCM file. Samples are clipped to [-1, 1].
pub fn write_wav_16bit(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec).map_err(|e| classify(path.as_ref(), e))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| classify(path.as_ref(), e))?;
    }
    writer.finalize().map_err(|e| classify(path.as_ref(), e))?;
    Ok(())
}
