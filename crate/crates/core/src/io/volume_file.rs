//! Raw little-endian `f32` payload with a JSON sidecar at `<path>.json`:
//!
//! ```json
//! {"dims": [D, H, W], "dtype": "f32", "order": "row-major", "kind": "prob"}
//! ```
//!
//! Labels are stored as `0.0` / `1.0`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::volume::{Dims, LabelVolume, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Intensity,
    Prob,
    Label,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: Dims,
    pub dtype: String,
    pub order: String,
    pub kind: VolumeKind,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn check_values(kind: VolumeKind, data: impl Iterator<Item = f64>) -> std::result::Result<(), String> {
    for (i, v) in data.enumerate() {
        let ok = match kind {
            VolumeKind::Intensity => v.is_finite(),
            VolumeKind::Prob => (0.0..=1.0).contains(&v),
            VolumeKind::Label => v == 0.0 || v == 1.0,
        };
        if !ok {
            return Err(format!("voxel {i} holds {v}, not a valid {kind:?} value"));
        }
    }
    Ok(())
}

/// Writes payload and sidecar, each atomically. Values are narrowed to `f32`.
pub fn write_volume(path: &Path, volume: &Volume, kind: VolumeKind) -> Result<()> {
    let narrowed = volume.data().iter().map(|&v| v as f32);
    check_values(kind, narrowed.clone().map(f64::from)).map_err(|message| Error::Format { path: path.into(), message })?;
    let payload: Vec<u8> = narrowed.flat_map(f32::to_le_bytes).collect();
    let header = VolumeHeader { dims: volume.dims(), dtype: "f32".into(), order: "row-major".into(), kind };
    atomic_write(path, &payload)?;
    atomic_write(&sidecar_path(path), &serde_json::to_vec_pretty(&header)?)
}

pub fn write_labels(path: &Path, labels: &LabelVolume) -> Result<()> {
    write_volume(path, &labels.to_volume(), VolumeKind::Label)
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let sidecar = sidecar_path(path);
    let header: VolumeHeader = serde_json::from_slice(&std::fs::read(&sidecar)?)
        .map_err(|e| Error::Format { path: sidecar.clone(), message: e.to_string() })?;
    if header.dtype != "f32" || header.order != "row-major" {
        return Err(Error::Format {
            path: sidecar,
            message: format!("unsupported layout {} / {}", header.dtype, header.order),
        });
    }
    Ok(header)
}

pub fn read_volume(path: &Path) -> Result<(Volume, VolumeKind)> {
    let header = read_header(path)?;
    let bytes = std::fs::read(path)?;
    let voxels: usize = header.dims.iter().product();
    if bytes.len() != 4 * voxels {
        return Err(Error::Format {
            path: path.into(),
            message: format!("payload has {} bytes, dims {:?} need {}", bytes.len(), header.dims, 4 * voxels),
        });
    }
    let data: Vec<f64> =
        bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4")))).collect();
    check_values(header.kind, data.iter().copied()).map_err(|message| Error::Format { path: path.into(), message })?;
    Ok((Volume::new(header.dims, data)?, header.kind))
}

/// Reads a volume and insists on its kind.
pub fn read_kind(path: &Path, kind: VolumeKind) -> Result<Volume> {
    let (volume, found) = read_volume(path)?;
    if found != kind {
        return Err(Error::Format { path: path.into(), message: format!("expected a {kind:?} volume, found {found:?}") });
    }
    Ok(volume)
}

pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    LabelVolume::from_volume(&read_kind(path, VolumeKind::Label)?)
}
