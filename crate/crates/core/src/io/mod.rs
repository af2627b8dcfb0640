//! On-disk formats, synthetic scenes and pipeline configuration.

pub mod config;
pub mod synth;
pub mod volume_file;

pub use config::{PipelineConfig, Seeds, UnitRates};
pub use volume_file::{read_kind, read_labels, read_volume, write_labels, write_volume, VolumeKind};

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
