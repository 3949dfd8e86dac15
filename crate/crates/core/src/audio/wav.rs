//! RIFF/WAV reading and writing.
//!
//! Supported encodings: 16-bit integer PCM (format 1) and 32-bit IEEE
//! float (format 3), mono or multi-channel. Multi-channel audio is
//! averaged to mono. Anything else is an explicit error rather than a
//! silent guess.

use std::path::Path;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedHeader(msg.into())
}

fn read_u16(bytes: &[u8], off: usize) -> Result<u16> {
    bytes
        .get(off..off + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| malformed("unexpected end of file"))
}

fn read_u32(bytes: &[u8], off: usize) -> Result<u32> {
    bytes
        .get(off..off + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| malformed("unexpected end of file"))
}

struct Format {
    audio_format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

/// Decodes a WAV file to mono samples in [-1, 1] plus the sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

pub(crate) fn decode_wav(bytes: &[u8]) -> Result<(Vec<f64>, u32)> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("not a RIFF/WAVE file"));
    }
    let mut fmt: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off < bytes.len() {
        if off + 8 > bytes.len() {
            return Err(malformed("truncated chunk header"));
        }
        let id = &bytes[off..off + 4];
        let size = read_u32(bytes, off + 4)? as usize;
        let body_start = off + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| malformed("chunk size overflow"))?;
        if body_end > bytes.len() {
            return Err(malformed(format!(
                "truncated {} chunk: declares {} bytes",
                String::from_utf8_lossy(id),
                size
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed("fmt chunk too small"));
                }
                fmt = Some(Format {
                    audio_format: read_u16(bytes, body_start)?,
                    channels: read_u16(bytes, body_start + 2)?,
                    sample_rate: read_u32(bytes, body_start + 4)?,
                    bits_per_sample: read_u16(bytes, body_start + 14)?,
                });
            }
            b"data" => data = Some(&bytes[body_start..body_end]),
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry a pad byte.
        off = body_end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| malformed("missing fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("missing data chunk"))?;
    if fmt.channels == 0 {
        return Err(malformed("zero channels"));
    }
    if fmt.sample_rate == 0 {
        return Err(malformed("zero sample rate"));
    }
    let decode_frame: fn(&[u8]) -> f64 = match (fmt.audio_format, fmt.bits_per_sample) {
        (1, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (3, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        (f, b) => {
            return Err(Error::UnsupportedEncoding(format!(
                "format {f} with {b} bits per sample"
            )))
        }
    };
    let bytes_per_sample = fmt.bits_per_sample as usize / 8;
    let frame_size = bytes_per_sample * fmt.channels as usize;
    if data.len() % frame_size != 0 {
        return Err(malformed("data chunk is not a whole number of frames"));
    }
    if data.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let mut samples = Vec::with_capacity(data.len() / frame_size);
    for frame in data.chunks_exact(frame_size) {
        let sum: f64 = frame
            .chunks_exact(bytes_per_sample)
            .map(decode_frame)
            .sum();
        samples.push((sum / fmt.channels as f64).clamp(-1.0, 1.0));
    }
    Ok((samples, fmt.sample_rate))
}

/// Loads a WAV as an unlabeled clip; source_id is the file stem.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let (samples, sample_rate) = read_wav(path)?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioClip {
        samples,
        sample_rate,
        label: None,
        source_id,
    })
}

/// Writes mono 32-bit float WAV. Values are stored as f32, so a sample
/// already on the f32 grid round-trips bit-identically.
pub fn write_wav_f32(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let data_len = samples.len() * 4;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&3u16.to_le_bytes()); // IEEE float
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&(*s as f32).to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
