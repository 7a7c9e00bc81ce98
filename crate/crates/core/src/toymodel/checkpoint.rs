//! Binary checkpoint: `"SOLD"`, u32 LE version, u64 LE header length, a UTF-8
//! JSON header, then every tensor as row-major f64 LE in layout order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{DecoderConfig, DecoderParams};
use super::secured::SecuredSet;
use super::{ModelError, Result};
use crate::numcore::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SOLD";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: DecoderConfig,
    pub tensors: Vec<TensorEntry>,
    /// SHA-256 over the configuration and tensor list.
    pub architecture_hash: String,
    pub securing: Option<SecuredSet>,
    /// SHA-256 of the payload bytes.
    pub checksum: String,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn entries(config: &DecoderConfig) -> Vec<TensorEntry> {
    DecoderParams::layout(config)
        .into_iter()
        .map(|(id, (rows, cols))| TensorEntry { name: id.name(), rows, cols })
        .collect()
}

fn architecture_hash(config: &DecoderConfig, tensors: &[TensorEntry]) -> String {
    let desc = serde_json::to_vec(&(config, tensors)).expect("plain data serializes");
    hex(&Sha256::digest(&desc))
}

pub fn write_checkpoint(params: &DecoderParams, securing: Option<&SecuredSet>) -> Vec<u8> {
    let mut payload = Vec::with_capacity(params.param_count() * 8);
    for t in params.tensors() {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tensors = entries(params.config());
    let header = CheckpointHeader {
        config: *params.config(),
        architecture_hash: architecture_hash(params.config(), &tensors),
        tensors,
        securing: securing.cloned(),
        checksum: hex(&Sha256::digest(&payload)),
    };
    let header = serde_json::to_vec(&header).expect("plain data serializes");
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<(DecoderParams, CheckpointHeader)> {
    if bytes.len() < 4 {
        return Err(ModelError::Truncated("missing magic".into()));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(ModelError::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(ModelError::Truncated("missing version or header length".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() < header_len {
        return Err(ModelError::Truncated(format!(
            "header declares {header_len} bytes, {} present",
            body.len()
        )));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..header_len]).map_err(|e| ModelError::Header(e.to_string()))?;
    let expected_entries = entries(&header.config);
    if header.tensors != expected_entries {
        return Err(ModelError::Header("tensor list disagrees with the declared dimensions".into()));
    }
    if header.architecture_hash != architecture_hash(&header.config, &header.tensors) {
        return Err(ModelError::Header("architecture hash mismatch".into()));
    }
    let payload = &body[header_len..];
    let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols * 8).sum();
    if payload.len() != expected {
        return Err(ModelError::PayloadLength {
            expected,
            actual: payload.len(),
        });
    }
    if hex(&Sha256::digest(payload)) != header.checksum {
        return Err(ModelError::ChecksumMismatch);
    }
    let mut offset = 0;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let n = t.rows * t.cols;
        let data = payload[offset..offset + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        offset += 8 * n;
        tensors.push(Matrix::new(t.rows, t.cols, data).map_err(|e| ModelError::Header(e.to_string()))?);
    }
    if let Some(s) = &header.securing {
        s.validate(header.config.layers)?;
    }
    let params = DecoderParams::from_tensors(header.config, tensors)?;
    Ok((params, header))
}

pub fn save_checkpoint(params: &DecoderParams, securing: Option<&SecuredSet>, path: &Path) -> Result<()> {
    std::fs::write(path, write_checkpoint(params, securing)).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<(DecoderParams, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    read_checkpoint(&bytes)
}
