//! Trained-model files. Binary little-endian layout:
//! magic `WSDLM\x01`, u32 version, u32 V/p/h, u64 seed, 32-byte vocabulary
//! digest, then E, W_x, W_h, b, W_c, O, b_o as row-major f64, then a CRC32
//! of everything before it.

use super::{LstmParams, ModelConfig};
use crate::numeric::{Matrix, NumericError};
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 6] = b"WSDLM\x01";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("bad magic: not a model checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("checkpoint was trained against a different vocabulary (digest mismatch)")]
    DigestMismatch,
    #[error("truncated checkpoint: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint checksum mismatch: file is corrupt")]
    ChecksumMismatch,
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Header of a checkpoint file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub vocab_digest: [u8; 32],
}

fn header_len() -> usize {
    MAGIC.len() + 4 + 3 * 4 + 8 + 32
}

fn body_len(v: usize, p: usize, h: usize) -> usize {
    // E, W_x, W_h, b, W_c, O, b_o
    8 * (v * p + p * 4 * h + h * 4 * h + 4 * h + h * p + v * p + v)
}

/// Serializes the parameters (dimensions taken from the matrices, seed from
/// the config) and writes the file in one shot.
pub fn save_checkpoint(
    params: &LstmParams,
    config: &ModelConfig,
    vocab_digest: [u8; 32],
    path: &Path,
) -> Result<(), CheckpointError> {
    let bytes = encode(params, config.seed, vocab_digest);
    fs::write(path, bytes).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub(crate) fn encode(params: &LstmParams, seed: u64, vocab_digest: [u8; 32]) -> Vec<u8> {
    let (v, p, h) = (params.vocab_size(), params.embed_dim(), params.hidden_dim());
    let mut buf = Vec::with_capacity(header_len() + body_len(v, p, h) + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(v as u32).to_le_bytes());
    buf.extend_from_slice(&(p as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&vocab_digest);
    for t in params.tensors() {
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// Loads and verifies a checkpoint. `expected_digest` is the digest of the
/// vocabulary the caller intends to use with this model.
pub fn load_checkpoint(
    path: &Path,
    expected_digest: [u8; 32],
) -> Result<(LstmParams, CheckpointMeta), CheckpointError> {
    let bytes = fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    decode(&bytes, expected_digest)
}

pub(crate) fn decode(
    bytes: &[u8],
    expected_digest: [u8; 32],
) -> Result<(LstmParams, CheckpointMeta), CheckpointError> {
    if bytes.len() < MAGIC.len() {
        return Err(CheckpointError::Truncated {
            expected: header_len() + 4,
            found: bytes.len(),
        });
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < header_len() + 4 {
        return Err(CheckpointError::Truncated {
            expected: header_len() + 4,
            found: bytes.len(),
        });
    }
    let mut at = MAGIC.len();
    let mut take_u32 = |bytes: &[u8]| {
        let x = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        at += 4;
        x
    };
    let version = take_u32(bytes);
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    let v = take_u32(bytes) as usize;
    let p = take_u32(bytes) as usize;
    let h = take_u32(bytes) as usize;
    let seed = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    at += 8;
    let mut vocab_digest = [0u8; 32];
    vocab_digest.copy_from_slice(&bytes[at..at + 32]);
    at += 32;

    let expected_total = header_len() + body_len(v, p, h) + 4;
    if bytes.len() != expected_total {
        return Err(CheckpointError::Truncated {
            expected: expected_total,
            found: bytes.len(),
        });
    }
    let crc = crc32fast::hash(&bytes[..bytes.len() - 4]);
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc != stored {
        return Err(CheckpointError::ChecksumMismatch);
    }
    if vocab_digest != expected_digest {
        return Err(CheckpointError::DigestMismatch);
    }

    let mut read_matrix = |rows: usize, cols: usize| -> Result<Matrix, CheckpointError> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()));
            at += 8;
        }
        Ok(Matrix::from_vec(rows, cols, data)?)
    };
    let params = LstmParams {
        e: read_matrix(v, p)?,
        w_x: read_matrix(p, 4 * h)?,
        w_h: read_matrix(h, 4 * h)?,
        b: read_matrix(1, 4 * h)?,
        w_c: read_matrix(h, p)?,
        o: read_matrix(v, p)?,
        b_o: read_matrix(1, v)?,
    };
    let meta = CheckpointMeta {
        vocab_size: v,
        embed_dim: p,
        hidden_dim: h,
        seed,
        vocab_digest,
    };
    Ok((params, meta))
}
