//! Parameter checkpoints: a `u64` little-endian byte length, the
//! [`NetworkSpec`] as UTF-8 JSON of that length, then every parameter tensor
//! in declaration order as little-endian `f32`.

use std::path::Path;

use super::network::NetworkParams;
use super::NetworkSpec;
use crate::error::{Error, Result};
use crate::io::atomic_write;

pub fn encode_checkpoint(spec: &NetworkSpec, params: &NetworkParams) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(spec)?;
    let mut out = Vec::with_capacity(8 + header.len() + 4 * params.len());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in params.flatten() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(NetworkSpec, NetworkParams)> {
    let bad = |message: String| Error::Format { path: path.to_path_buf(), message };
    let len_bytes: [u8; 8] = bytes.get(..8).and_then(|b| b.try_into().ok()).ok_or_else(|| bad("truncated header length".into()))?;
    let header_len = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| bad("header length overflows".into()))?;
    let header = bytes.get(8..8 + header_len).ok_or_else(|| bad("truncated JSON header".into()))?;
    let spec: NetworkSpec = serde_json::from_slice(header)?;
    let mut params = NetworkParams::init(&spec)?;
    let payload = &bytes[8 + header_len..];
    if payload.len() != 4 * params.len() {
        return Err(bad(format!("payload holds {} bytes, spec needs {}", payload.len(), 4 * params.len())));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of four bytes")) as f64)
        .collect();
    params.assign_flat(&values)?;
    Ok((spec, params))
}

pub fn write_checkpoint(path: &Path, spec: &NetworkSpec, params: &NetworkParams) -> Result<()> {
    atomic_write(path, &encode_checkpoint(spec, params)?)
}

pub fn read_checkpoint(path: &Path) -> Result<(NetworkSpec, NetworkParams)> {
    decode_checkpoint(&std::fs::read(path)?, path)
}
