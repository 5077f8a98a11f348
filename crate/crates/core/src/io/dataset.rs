//! Dataset directory layout:
//!   frames/%05d.png, masks_hand/%05d.png, masks_obj/%05d.png,
//!   flow/%05d.dpfl, cameras.json, init.ply, labels.txt
//! Frame count and raster size come from cameras.json; every file must
//! agree. Timestamps are the frame index normalized to [0,1].

use crate::error::{Error, Result};
use crate::types::{Category, PinholeCamera};
use nalgebra::Vector3;
use std::path::Path;

#[derive(Clone, Debug)]
pub struct FrameRecord {
    /// Pixel-major RGB in [0,1], length 3*w*h.
    pub rgb: Vec<f64>,
    /// {0,1} masks, length w*h, disjoint (overlaps resolved to hand).
    pub mask_obj: Vec<f64>,
    pub mask_hand: Vec<f64>,
    /// Observed flow toward the next frame, 2 per pixel; the last frame
    /// stores zeros.
    pub flow_gt: Vec<f64>,
    pub camera: PinholeCamera,
    pub t: f64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub frames: Vec<FrameRecord>,
    pub width: usize,
    pub height: usize,
    pub init_points: Vec<Vector3<f64>>,
    pub init_colors: Vec<[f64; 3]>,
    /// Ground-truth category per init point; used for evaluation only.
    pub gt_labels: Vec<Category>,
}

/// Missing files are reported as format errors naming the offender, so a
/// partially assembled dataset fails loudly rather than as a bare io error.
fn require(path: std::path::PathBuf) -> Result<std::path::PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::format(format!("missing file {}", path.display())))
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let cameras = super::read_cameras(&require(dir.join("cameras.json"))?)?;
    if cameras.is_empty() {
        return Err(Error::format(format!("{}: cameras.json lists no frames", dir.display())));
    }
    let width = cameras[0].width as usize;
    let height = cameras[0].height as usize;
    let count = cameras.len();
    let n = width * height;

    let mut frames = Vec::with_capacity(count);
    let mut overlap_pixels = 0usize;
    for (i, camera) in cameras.into_iter().enumerate() {
        if camera.width as usize != width || camera.height as usize != height {
            return Err(Error::format(format!("camera {i} disagrees on raster size")));
        }
        let frame_path = dir.join(format!("frames/{i:05}.png"));
        let (w, h, rgb) = super::read_png_rgb(&require(frame_path.clone())?)?;
        if (w, h) != (width, height) {
            return Err(Error::format(format!("{}: wrong size", frame_path.display())));
        }
        let hand_path = dir.join(format!("masks_hand/{i:05}.png"));
        let (w, h, mask_hand) = super::read_png_mask(&require(hand_path.clone())?)?;
        if (w, h) != (width, height) {
            return Err(Error::format(format!("{}: wrong size", hand_path.display())));
        }
        let obj_path = dir.join(format!("masks_obj/{i:05}.png"));
        let (w, h, mut mask_obj) = super::read_png_mask(&require(obj_path.clone())?)?;
        if (w, h) != (width, height) {
            return Err(Error::format(format!("{}: wrong size", obj_path.display())));
        }
        // Disjoint supervision: overlapping pixels belong to the hand.
        for p in 0..n {
            if mask_obj[p] > 0.5 && mask_hand[p] > 0.5 {
                mask_obj[p] = 0.0;
                overlap_pixels += 1;
            }
        }
        let flow_path = dir.join(format!("flow/{i:05}.dpfl"));
        let (w, h, flow_gt) = super::read_dpfl(&require(flow_path.clone())?)?;
        if (w, h) != (width, height) {
            return Err(Error::format(format!("{}: wrong size", flow_path.display())));
        }
        let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
        frames.push(FrameRecord { rgb, mask_obj, mask_hand, flow_gt, camera, t });
    }
    if overlap_pixels > 0 {
        eprintln!("load_dataset: resolved {overlap_pixels} overlapping mask pixels to hand");
    }

    let (init_points, init_colors) = super::read_ply(&require(dir.join("init.ply"))?)?;
    let labels_path = require(dir.join("labels.txt"))?;
    let text = std::fs::read_to_string(&labels_path)?;
    let gt_labels: Vec<Category> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .ok()
                .and_then(Category::from_index)
                .ok_or_else(|| Error::format(format!("{}: bad label '{l}'", labels_path.display())))
        })
        .collect::<Result<_>>()?;
    if gt_labels.len() != init_points.len() {
        return Err(Error::format(format!(
            "labels.txt has {} entries for {} init points",
            gt_labels.len(),
            init_points.len()
        )));
    }

    Ok(Dataset { frames, width, height, init_points, init_colors, gt_labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io;
    use nalgebra::Matrix4;

    fn write_minimal_dataset(dir: &Path, frames: usize, w: usize, h: usize) {
        let n = w * h;
        let mut cams = Vec::new();
        for i in 0..frames {
            let mut w2c = Matrix4::identity();
            w2c[(2, 3)] = 2.0 + i as f64 * 0.01;
            cams.push(PinholeCamera {
                fx: 20.0,
                fy: 20.0,
                cx: w as f64 / 2.0,
                cy: h as f64 / 2.0,
                width: w as u32,
                height: h as u32,
                world_to_camera: w2c,
            });
        }
        io::write_cameras(&dir.join("cameras.json"), &cams).unwrap();
        for i in 0..frames {
            let rgb: Vec<f64> = (0..3 * n).map(|k| ((k + i) % 7) as f64 / 7.0).collect();
            io::write_png_rgb(&dir.join(format!("frames/{i:05}.png")), w, h, &rgb).unwrap();
            let mut hand = vec![0.0; n];
            let mut obj = vec![0.0; n];
            hand[0] = 1.0;
            obj[0] = 1.0; // deliberate overlap, must resolve to hand
            obj[1] = 1.0;
            io::write_png_mask(&dir.join(format!("masks_hand/{i:05}.png")), w, h, &hand).unwrap();
            io::write_png_mask(&dir.join(format!("masks_obj/{i:05}.png")), w, h, &obj).unwrap();
            let flow = vec![0.25; 2 * n];
            io::write_dpfl(&dir.join(format!("flow/{i:05}.dpfl")), w, h, &flow).unwrap();
        }
        let points = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        let colors = vec![[0.5, 0.5, 0.5], [0.25, 0.5, 0.75]];
        io::write_ply(&dir.join("init.ply"), &points, &colors).unwrap();
        io::atomic_write(&dir.join("labels.txt"), b"0\n2\n").unwrap();
    }

    #[test]
    fn load_resolves_overlaps_to_hand_and_normalizes_time() {
        let tmp = tempfile::tempdir().unwrap();
        write_minimal_dataset(tmp.path(), 3, 4, 2);
        let data = load_dataset(tmp.path()).unwrap();
        assert_eq!(data.frames.len(), 3);
        assert_eq!((data.width, data.height), (4, 2));
        let f = &data.frames[0];
        assert_eq!(f.mask_hand[0], 1.0);
        assert_eq!(f.mask_obj[0], 0.0);
        assert_eq!(f.mask_obj[1], 1.0);
        assert_eq!(data.frames[0].t, 0.0);
        assert_eq!(data.frames[1].t, 0.5);
        assert_eq!(data.frames[2].t, 1.0);
        assert_eq!(data.gt_labels, vec![Category::Background, Category::Hand]);
    }

    #[test]
    fn missing_flow_file_is_a_format_error_naming_the_frame() {
        let tmp = tempfile::tempdir().unwrap();
        write_minimal_dataset(tmp.path(), 2, 4, 2);
        std::fs::remove_file(tmp.path().join("flow/00001.dpfl")).unwrap();
        let err = load_dataset(tmp.path()).unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("00001.dpfl")),
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn label_count_mismatch_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_minimal_dataset(tmp.path(), 2, 4, 2);
        io::atomic_write(&tmp.path().join("labels.txt"), b"0\n").unwrap();
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Format(_))));
    }
}
