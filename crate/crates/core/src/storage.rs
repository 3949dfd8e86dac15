//! Binary model container ("DCGH") and matrix dumps ("DCSG").
//!
//! Container layout: magic, u16 format version, u16 record count, the
//! records, a standardization block (mean and std, 1024 f32 each), the
//! spectrogram compression constant (f32), and a CRC32 of every preceding
//! byte. Each record is a layer-kind tag (u8), a tensor count (u8), and
//! per tensor a rank (u8), u32 dims, and little-endian f32 values.
//!
//! Matrix dump layout: magic "DCSG", u16 rows, u16 cols, row-major f32.

use std::path::Path;

use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"DCGH";
pub const MATRIX_MAGIC: [u8; 4] = *b"DCSG";
pub const FORMAT_VERSION: u16 = 1;
/// Cells in the standardization mean/std blocks (64 x 16).
pub const STATS_LEN: usize = 1024;

/// Record kind tags. 1..=6 mirror the network layer kinds; 16+ are the
/// baseline models sharing the container.
pub mod record_kind {
    pub const CONV2D: u8 = 1;
    pub const RELU: u8 = 2;
    pub const MAX_POOL: u8 = 3;
    pub const DENSE: u8 = 4;
    pub const DROPOUT: u8 = 5;
    pub const SOFTMAX: u8 = 6;
    pub const LINEAR_SOFTMAX: u8 = 16;
    pub const LINEAR_SVM: u8 = 17;
    pub const HMM_TRANSITIONS: u8 = 18;
    pub const HMM_GMM_STATE: u8 = 19;
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordTensor {
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

impl RecordTensor {
    pub fn new(dims: Vec<u32>, values: Vec<f32>) -> Self {
        let n: u64 = dims.iter().map(|d| *d as u64).product();
        assert_eq!(n as usize, values.len(), "dims/values mismatch");
        RecordTensor { dims, values }
    }

    pub fn from_f64(dims: Vec<u32>, values: &[f64]) -> Self {
        Self::new(dims, values.iter().map(|v| *v as f32).collect())
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| *v as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub kind: u8,
    pub tensors: Vec<RecordTensor>,
}

/// Everything a model file holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub records: Vec<Record>,
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    pub log_eps: f32,
}

impl Container {
    pub fn new(records: Vec<Record>, mean: Vec<f32>, std: Vec<f32>, log_eps: f32) -> Self {
        assert_eq!(mean.len(), STATS_LEN);
        assert_eq!(std.len(), STATS_LEN);
        Container {
            records,
            mean,
            std,
            log_eps,
        }
    }

    /// Container without standardization (identity stats).
    pub fn bare(records: Vec<Record>) -> Self {
        Container::new(records, vec![0.0; STATS_LEN], vec![1.0; STATS_LEN], 0.0)
    }
}

pub fn encode_container(c: &Container) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(c.records.len() as u16).to_le_bytes());
    for record in &c.records {
        out.push(record.kind);
        out.push(record.tensors.len() as u8);
        for tensor in &record.tensors {
            out.push(tensor.dims.len() as u8);
            for d in &tensor.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &tensor.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    for v in c.mean.iter().chain(&c.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.log_eps.to_le_bytes());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    std::fs::write(path, encode_container(c)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::TruncatedFile(self.path.to_path_buf()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let b = self.take(n * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn decode_container(bytes: &[u8], path: &Path) -> Result<Container> {
    if bytes.len() < 12 {
        return Err(Error::TruncatedFile(path.to_path_buf()));
    }
    let mut cur = Cursor {
        bytes,
        pos: 0,
        path,
    };
    if cur.take(4)? != MODEL_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    // Validate the checksum before trusting any payload structure.
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().expect("4 bytes"));
    if crc32fast::hash(&bytes[..body_len]) != stored {
        return Err(Error::ChecksumMismatch(path.to_path_buf()));
    }
    let n_records = cur.u16()? as usize;
    let mut records = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        let kind = cur.u8()?;
        let n_tensors = cur.u8()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let rank = cur.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u32()?);
            }
            let n: u64 = dims.iter().map(|d| *d as u64).product();
            let values = cur.f32_vec(n as usize)?;
            tensors.push(RecordTensor { dims, values });
        }
        records.push(Record { kind, tensors });
    }
    let mean = cur.f32_vec(STATS_LEN)?;
    let std = cur.f32_vec(STATS_LEN)?;
    let log_eps = cur.f32()?;
    if cur.pos != body_len {
        return Err(Error::MalformedHeader(format!(
            "{}: {} unexpected bytes after model payload",
            path.display(),
            body_len - cur.pos
        )));
    }
    Ok(Container {
        records,
        mean,
        std,
        log_eps,
    })
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(&bytes, path)
}

/// Writes a matrix dump: magic, u16 rows, u16 cols, row-major f32.
pub fn write_matrix(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    assert_eq!(rows * cols, values.len(), "matrix shape mismatch");
    assert!(rows <= u16::MAX as usize && cols <= u16::MAX as usize);
    let mut out = Vec::with_capacity(8 + values.len() * 4);
    out.extend_from_slice(&MATRIX_MAGIC);
    out.extend_from_slice(&(rows as u16).to_le_bytes());
    out.extend_from_slice(&(cols as u16).to_le_bytes());
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::TruncatedFile(path.to_path_buf()));
    }
    if bytes[0..4] != MATRIX_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let rows = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let cols = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let expect = 8 + rows * cols * 4;
    if bytes.len() < expect {
        return Err(Error::TruncatedFile(path.to_path_buf()));
    }
    if bytes.len() > expect {
        return Err(Error::MalformedHeader(format!(
            "{}: matrix dump has trailing bytes",
            path.display()
        )));
    }
    let values = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((rows, cols, values))
}
