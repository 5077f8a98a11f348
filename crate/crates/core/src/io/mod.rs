//! File formats and the dataset loader. Every writer goes through
//! `atomic_write` so readers never observe a half-written file.

pub mod cameras;
pub mod dataset;
pub mod flow;
pub mod image_io;
pub mod ply;

pub use cameras::{read_cameras, write_cameras, CameraRecord};
pub use dataset::{load_dataset, Dataset, FrameRecord};
pub use flow::{read_dpfl, write_dpfl};
pub use image_io::{read_png_mask, read_png_rgb, read_pfm, write_pfm, write_png_mask, write_png_rgb};
pub use ply::{read_ply, write_ply};

use crate::error::Result;
use std::path::Path;

/// Write `bytes` to `path` via a temp file in the same directory plus a
/// rename, so concurrent readers see either the old file or the new one.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
