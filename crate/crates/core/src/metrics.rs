//! Image-quality and decomposition metrics, plus held-out evaluation of a
//! trained state against a dataset.

use crate::error::{Error, Result};
use crate::grad::dilate;
use crate::io::Dataset;
use crate::loss::ssim::ssim_value;
use crate::loss::{apply_brightness, brightness_activation};
use crate::pipeline::{forward_frame, FrameContext, Stage};
use crate::render::RenderSettings;
use crate::types::{Category, GaussianScene};
use crate::deform::DeformationField;
use serde::Serialize;

/// Reported when MSE underflows (identical images).
pub const PSNR_CAP: f64 = 99.0;

/// Peak signal-to-noise ratio over the whole buffer, inputs in [0,1].
pub fn psnr(pred: &[f64], gt: &[f64]) -> f64 {
    assert_eq!(pred.len(), gt.len());
    if pred.is_empty() {
        return PSNR_CAP;
    }
    let mse: f64 =
        pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
    if mse <= 1e-12 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// PSNR restricted to pixels where `mask` is set; `pred`/`gt` carry
/// `channels` values per pixel. Empty masks report the cap.
pub fn psnr_masked(pred: &[f64], gt: &[f64], mask: &[f64], channels: usize) -> f64 {
    assert_eq!(pred.len(), gt.len());
    assert_eq!(pred.len(), mask.len() * channels);
    let mut se = 0.0;
    let mut count = 0usize;
    for (p, &m) in mask.iter().enumerate() {
        if m > 0.5 {
            for c in 0..channels {
                let d = pred[p * channels + c] - gt[p * channels + c];
                se += d * d;
            }
            count += channels;
        }
    }
    if count == 0 {
        return PSNR_CAP;
    }
    let mse = se / count as f64;
    if mse <= 1e-12 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// Structural similarity; thin wrapper so callers need only this module.
pub fn ssim(pred: &[f64], gt: &[f64], width: usize, height: usize, channels: usize) -> f64 {
    ssim_value(pred, gt, width, height, channels)
}

/// Intersection-over-union of `alpha >= threshold` against a {0,1} mask.
/// An empty union counts as perfect agreement.
pub fn iou(alpha: &[f64], mask: &[f64], threshold: f64) -> f64 {
    assert_eq!(alpha.len(), mask.len());
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&a, &m) in alpha.iter().zip(mask) {
        let pa = a >= threshold;
        let pm = m > 0.5;
        inter += (pa && pm) as usize;
        union += (pa || pm) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Fraction of Gaussians whose stored-logit hard label matches the ground
/// truth. Counts align by construction: init preserves point order.
pub fn label_accuracy(scene: &GaussianScene, gt: &[Category]) -> Result<f64> {
    if scene.gaussians.len() != gt.len() {
        return Err(Error::invalid("label count does not match the scene"));
    }
    if gt.is_empty() {
        return Err(Error::invalid("no labels to score"));
    }
    let hits = scene
        .gaussians
        .iter()
        .zip(gt)
        .filter(|(g, &l)| g.hard_label() == l)
        .count();
    Ok(hits as f64 / gt.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ModeQuality {
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub holdout_frames: usize,
    pub composite: ModeQuality,
    /// Per-category quality measured inside that category's supervision
    /// mask (the background render includes brightness modulation).
    pub bg: ModeQuality,
    pub obj: ModeQuality,
    pub hand: ModeQuality,
    /// Decomposition IoU of thresholded category alphas vs. dataset masks,
    /// aggregated over all held-out pixels.
    pub iou_bg: f64,
    pub iou_obj: f64,
    pub iou_hand: f64,
    /// Hard-label agreement with ground-truth point labels, when present.
    pub accuracy: Option<f64>,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("held-out frames        {}\n", self.holdout_frames));
        s.push_str(&format!(
            "composite              psnr {:6.2} dB   ssim {:.4}\n",
            self.composite.psnr, self.composite.ssim
        ));
        for (name, q) in [("background", &self.bg), ("object", &self.obj), ("hand", &self.hand)] {
            s.push_str(&format!(
                "{:22} psnr {:6.2} dB   ssim {:.4}\n",
                name, q.psnr, q.ssim
            ));
        }
        s.push_str(&format!(
            "decomposition iou      bg {:.4}   obj {:.4}   hand {:.4}\n",
            self.iou_bg, self.iou_obj, self.iou_hand
        ));
        if let Some(acc) = self.accuracy {
            s.push_str(&format!("gaussian accuracy      {:.4}\n", acc));
        }
        s
    }
}

/// Every `holdout_every`-th frame (starting at 0) is the held-out set.
pub fn holdout_indices(frame_count: usize, holdout_every: usize) -> Vec<usize> {
    if holdout_every == 0 {
        return Vec::new();
    }
    (0..frame_count).filter(|i| i % holdout_every == 0).collect()
}

/// Render the hard-stage decomposition on the held-out frames and score it.
/// `dilation_radius` must match training so the background mask agrees.
pub fn evaluate(
    scene: &GaussianScene,
    field: &DeformationField,
    data: &Dataset,
    holdout_every: usize,
    dilation_radius: usize,
    settings: &RenderSettings,
) -> Result<EvalReport> {
    let holdout = holdout_indices(data.frames.len(), holdout_every);
    if holdout.is_empty() {
        return Err(Error::invalid("no held-out frames to evaluate"));
    }
    let (w, h) = (data.width, data.height);
    let n = w * h;

    let mut sums = [ModeQuality::default(); 4];
    let mut inter = [0usize; 3];
    let mut union = [0usize; 3];
    for &fi in &holdout {
        let frame = &data.frames[fi];
        let ctx = FrameContext { cam: &frame.camera, cam_next: None, t: frame.t, t_next: None };
        let fwd = forward_frame(scene, field, &ctx, Stage::Hard, settings)?;

        let union_mask: Vec<f64> = frame
            .mask_obj
            .iter()
            .zip(&frame.mask_hand)
            .map(|(&a, &b)| if a > 0.5 || b > 0.5 { 1.0 } else { 0.0 })
            .collect();
        let m_bg: Vec<f64> =
            dilate(&union_mask, w, h, dilation_radius).iter().map(|&v| 1.0 - v).collect();
        let masks = [&m_bg, &frame.mask_obj, &frame.mask_hand];

        sums[0].psnr += psnr(&fwd.composite.rgb, &frame.rgb);
        sums[0].ssim += ssim(&fwd.composite.rgb, &frame.rgb, w, h, 3);

        let (act, _) = brightness_activation(&fwd.cat[0].brightness);
        let bg_rgb = apply_brightness(&fwd.cat[0].rgb, &act)?;
        for l in 0..3 {
            let img = if l == 0 { &bg_rgb } else { &fwd.cat[l].rgb };
            let mut masked_pred = vec![0.0; 3 * n];
            let mut masked_gt = vec![0.0; 3 * n];
            for p in 0..n {
                if masks[l][p] > 0.5 {
                    for c in 0..3 {
                        masked_pred[p * 3 + c] = img[p * 3 + c];
                        masked_gt[p * 3 + c] = frame.rgb[p * 3 + c];
                    }
                }
            }
            sums[l + 1].psnr += psnr_masked(img, &frame.rgb, masks[l], 3);
            sums[l + 1].ssim += ssim(&masked_pred, &masked_gt, w, h, 3);
            for p in 0..n {
                let pa = fwd.cat[l].alpha[p] >= 0.5;
                let pm = masks[l][p] > 0.5;
                inter[l] += (pa && pm) as usize;
                union[l] += (pa || pm) as usize;
            }
        }
    }

    let k = holdout.len() as f64;
    let avg = |q: ModeQuality| ModeQuality { psnr: q.psnr / k, ssim: q.ssim / k };
    let ratio = |l: usize| if union[l] == 0 { 1.0 } else { inter[l] as f64 / union[l] as f64 };
    let accuracy = if data.gt_labels.len() == scene.gaussians.len() {
        Some(label_accuracy(scene, &data.gt_labels)?)
    } else {
        None
    };
    Ok(EvalReport {
        holdout_frames: holdout.len(),
        composite: avg(sums[0]),
        bg: avg(sums[1]),
        obj: avg(sums[2]),
        hand: avg(sums[3]),
        iou_bg: ratio(0),
        iou_obj: ratio(1),
        iou_hand: ratio(2),
        accuracy,
    })
}
