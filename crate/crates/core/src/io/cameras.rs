//! cameras.json: a JSON array with one record per frame, carrying pinhole
//! intrinsics and the 4x4 world-to-camera matrix in row-major order.

use crate::error::{Error, Result};
use crate::types::PinholeCamera;
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: [f64; 16],
}

impl CameraRecord {
    pub fn from_camera(cam: &PinholeCamera) -> CameraRecord {
        let mut m = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                m[r * 4 + c] = cam.world_to_camera[(r, c)];
            }
        }
        CameraRecord {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            world_to_camera: m,
        }
    }

    pub fn to_camera(&self) -> Result<PinholeCamera> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::format("camera focal lengths must be positive"));
        }
        let mut m = Matrix4::zeros();
        for r in 0..4 {
            for c in 0..4 {
                m[(r, c)] = self.world_to_camera[r * 4 + c];
            }
        }
        let cam = PinholeCamera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            world_to_camera: m,
        };
        let r = cam.rotation();
        let should_be_i = r * r.transpose();
        let mut err = (should_be_i - nalgebra::Matrix3::identity()).abs().max();
        err = err.max((r.determinant() - 1.0).abs());
        if err > 1e-6 {
            return Err(Error::format("camera rotation is not orthonormal with det +1"));
        }
        Ok(cam)
    }
}

pub fn write_cameras(path: &Path, cams: &[PinholeCamera]) -> Result<()> {
    let records: Vec<CameraRecord> = cams.iter().map(CameraRecord::from_camera).collect();
    let json = serde_json::to_string_pretty(&records)
        .map_err(|e| Error::format(format!("camera serialization: {e}")))?;
    super::atomic_write(path, json.as_bytes())
}

pub fn read_cameras(path: &Path) -> Result<Vec<PinholeCamera>> {
    let text = std::fs::read_to_string(path)?;
    let records: Vec<CameraRecord> = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    records.iter().map(CameraRecord::to_camera).collect()
}
