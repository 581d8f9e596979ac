//! Binary snapshot files for parameter vectors.
//!
//! Layout: 8-byte magic `AIMPVEC1`, `u32` dimension, `u32` reserved (zero),
//! then `dim` little-endian `f64` values.

use std::fs;
use std::path::Path;

use aimmerge_core::ParamVector;

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"AIMPVEC1";
pub const HEADER_LEN: usize = 16;

pub fn encode(theta: &ParamVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * theta.dim());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(theta.dim() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in theta.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ParamVector, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if &bytes[..8] != MAGIC {
        return Err("bad magic".into());
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != dim * 8 {
        return Err(format!(
            "expected {} payload bytes for dim {dim}, found {}",
            dim * 8,
            body.len()
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ParamVector::new(values).map_err(|e| e.to_string())
}

pub fn write(path: &Path, theta: &ParamVector) -> Result<()> {
    fs::write(path, encode(theta)).map_err(|e| HarnessError::io(path, e))
}

pub fn read(path: &Path) -> Result<ParamVector> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes).map_err(|reason| HarnessError::Format {
        path: path.to_path_buf(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let theta = ParamVector::new(vec![1.0, -2.5]).unwrap();
        let bytes = encode(&theta);
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..8], b"AIMPVEC1");
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[0, 0, 0, 0]);
        assert_eq!(&bytes[16..24], &1.0f64.to_le_bytes());
        assert_eq!(decode(&bytes).unwrap(), theta);
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut bytes = encode(&ParamVector::new(vec![3.0]).unwrap());
        assert!(decode(&bytes[..10]).is_err());
        assert!(decode(&bytes[..20]).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
        let mut nan = encode(&ParamVector::new(vec![3.0]).unwrap());
        nan[16..24].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode(&nan).is_err());
    }
}
