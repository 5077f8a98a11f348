//! Optical-flow rasters: "DPFL" magic, height and width as u32, then
//! row-major (u, v) float32 pairs, all little-endian.

use crate::error::{Error, Result};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DPFL";

/// `flow` is pixel-major (u, v), length 2*w*h, in pixels per frame.
pub fn write_dpfl(path: &Path, width: usize, height: usize, flow: &[f64]) -> Result<()> {
    if flow.len() != 2 * width * height {
        return Err(Error::invalid("flow buffer does not match dimensions"));
    }
    let mut out = Vec::with_capacity(12 + flow.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    for &v in flow {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    super::atomic_write(path, &out)
}

pub fn read_dpfl(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path)?;
    let bad = |msg: &str| Error::format(format!("{}: {}", path.display(), msg));
    if bytes.len() < 12 {
        return Err(bad("file shorter than the header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic, expected DPFL"));
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let need = 12 + 2 * width * height * 4;
    if bytes.len() != need {
        return Err(bad("payload size does not match the header"));
    }
    let flow = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((width, height, flow))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.dpfl");
        let flow: Vec<f64> = (0..2 * 3 * 2).map(|i| i as f64 * -0.25 + 0.1).collect();
        write_dpfl(&path, 3, 2, &flow).unwrap();
        let (w, h, back) = read_dpfl(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        for (a, b) in flow.iter().zip(&back) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }

    #[test]
    fn rejects_bad_magic_and_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.dpfl");
        write_dpfl(&path, 2, 2, &[0.0; 8]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_dpfl(&path), Err(Error::Format(_))));
        bytes[0] = b'D';
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_dpfl(&path), Err(Error::Format(_))));
    }
}
