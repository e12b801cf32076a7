//! Binary loss-curve file format.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PACV"
//! 4       4     version (u32, currently 1)
//! 8       8     N (u64, sample count)
//! 16      4     T (u32, epoch count)
//! 20      4     label bits (u32, 16)
//! 24      8     FNV-1a 64 checksum of the payload
//! 32      N*T*4 losses (f32, row-major)
//! ...     N*8   sample ids (u64)
//! ...     N*2   observed labels (u16)
//! ```
//!
//! A round trip is bitwise lossless. Loads verify the magic, version, exact
//! file length, and payload checksum before constructing the matrix.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use probeweight_core::probe::LossCurveMatrix;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"PACV";
pub const VERSION: u32 = 1;
pub const LABEL_BITS: u32 = 16;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CurveFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes: expected \"PACV\"")]
    BadMagic,
    #[error("unsupported curve file version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, file has {got}")]
    Truncated { expected: u64, got: u64 },
    #[error("checksum mismatch: header {header:#018x}, payload {payload:#018x}")]
    ChecksumMismatch { header: u64, payload: u64 },
    #[error("invalid curve data: {0}")]
    Invalid(String),
}

/// Expected file size for `n` samples over `t` epochs.
pub fn file_size(n: u64, t: u32) -> u64 {
    HEADER_LEN as u64 + n * t as u64 * 4 + n * 8 + n * 2
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn payload_bytes(matrix: &LossCurveMatrix) -> Vec<u8> {
    let n = matrix.num_samples();
    let t = matrix.epochs();
    let mut payload = Vec::with_capacity(n * t * 4 + n * 8 + n * 2);
    for &v in matrix.losses() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for &id in matrix.sample_ids() {
        payload.extend_from_slice(&id.to_le_bytes());
    }
    for &label in matrix.observed_labels() {
        payload.extend_from_slice(&label.to_le_bytes());
    }
    payload
}

pub fn save(matrix: &LossCurveMatrix, path: &Path) -> Result<(), CurveFileError> {
    let payload = payload_bytes(matrix);
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&(matrix.num_samples() as u64).to_le_bytes());
    header[16..20].copy_from_slice(&(matrix.epochs() as u32).to_le_bytes());
    header[20..24].copy_from_slice(&LABEL_BITS.to_le_bytes());
    header[24..32].copy_from_slice(&fnv1a64(&payload).to_le_bytes());

    let mut file = fs::File::create(path)?;
    file.write_all(&header)?;
    file.write_all(&payload)?;
    file.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<LossCurveMatrix, CurveFileError> {
    let mut file = fs::File::open(path)?;
    let mut header = [0u8; HEADER_LEN];
    file.read_exact(&mut header)
        .map_err(|_| CurveFileError::Truncated {
            expected: HEADER_LEN as u64,
            got: fs::metadata(path).map(|m| m.len()).unwrap_or(0),
        })?;
    if &header[0..4] != MAGIC {
        return Err(CurveFileError::BadMagic);
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CurveFileError::UnsupportedVersion(version));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let t = u32::from_le_bytes(header[16..20].try_into().unwrap());
    let expected_size = file_size(n, t);
    let actual_size = fs::metadata(path)?.len();
    if actual_size != expected_size {
        return Err(CurveFileError::Truncated {
            expected: expected_size,
            got: actual_size,
        });
    }
    let declared = u64::from_le_bytes(header[24..32].try_into().unwrap());

    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    let computed = fnv1a64(&payload);
    if computed != declared {
        return Err(CurveFileError::ChecksumMismatch {
            header: declared,
            payload: computed,
        });
    }

    let n = n as usize;
    let t = t as usize;
    let mut cursor = 0;
    let mut losses = Vec::with_capacity(n * t);
    for _ in 0..n * t {
        losses.push(f32::from_le_bytes(
            payload[cursor..cursor + 4].try_into().unwrap(),
        ));
        cursor += 4;
    }
    let mut sample_ids = Vec::with_capacity(n);
    for _ in 0..n {
        sample_ids.push(u64::from_le_bytes(
            payload[cursor..cursor + 8].try_into().unwrap(),
        ));
        cursor += 8;
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(u16::from_le_bytes(
            payload[cursor..cursor + 2].try_into().unwrap(),
        ));
        cursor += 2;
    }
    LossCurveMatrix::new(losses, sample_ids, labels, t)
        .map_err(|e| CurveFileError::Invalid(e.to_string()))
}
