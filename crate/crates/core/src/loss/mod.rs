//! Control signals and training losses: brightness modulation, camera-induced
//! flow, masked per-category photometric terms, SSIM, classification entropy,
//! and the weighted total. Every loss returns its gradient alongside the
//! value so the training pass stays single-sweep.

pub mod ssim;

use crate::error::{Error, Result};
use crate::types::{CategoryProbs, PinholeCamera, CATEGORY_COUNT};
use serde::{Deserialize, Serialize};

/// Slope of the over-brightness branch of the activation.
pub const BRIGHTNESS_K: f64 = 35.0;
/// Knee between the linear and over-brightness branches.
pub const BRIGHTNESS_KNEE: f64 = 0.75;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LossWeights {
    pub l1: f64,
    pub ssim: f64,
    pub flow: f64,
    pub rgb: f64,
    pub alpha: f64,
    pub entropy: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights { l1: 0.8, ssim: 0.2, flow: 0.05, rgb: 1.0, alpha: 0.5, entropy: 0.01 }
    }
}

/// One training step's loss breakdown. Per-category arrays are indexed by
/// `Category as usize` (bg, obj, hand). `ssim` stores the loss form 1 - SSIM.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub l1_total: f64,
    pub flow: f64,
    pub rgb: [f64; CATEGORY_COUNT],
    pub alpha: [f64; CATEGORY_COUNT],
    pub ssim: [f64; CATEGORY_COUNT],
    pub entropy: [f64; CATEGORY_COUNT],
    pub weighted_sum: f64,
}

impl LossReport {
    /// Weighted sum of all components under `w`.
    pub fn dot(&self, w: &LossWeights) -> f64 {
        let mut total = w.l1 * self.l1_total + w.flow * self.flow;
        for l in 0..CATEGORY_COUNT {
            total += w.rgb * self.rgb[l]
                + w.alpha * self.alpha[l]
                + w.ssim * self.ssim[l]
                + w.entropy * self.entropy[l];
        }
        total
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = self.l1_total.is_finite() && self.flow.is_finite() && self.weighted_sum.is_finite();
        for l in 0..CATEGORY_COUNT {
            ok &= self.rgb[l].is_finite()
                && self.alpha[l].is_finite()
                && self.ssim[l].is_finite()
                && self.entropy[l].is_finite();
        }
        ok
    }

    pub fn csv_header() -> &'static str {
        "step,stage,l1,flow,rgb_bg,rgb_obj,rgb_hand,alpha_bg,alpha_obj,alpha_hand,\
         ssim_bg,ssim_obj,ssim_hand,entropy_bg,entropy_obj,entropy_hand,total"
    }

    pub fn csv_row(&self, step: u64, stage: &str) -> String {
        format!(
            "{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            step,
            stage,
            self.l1_total,
            self.flow,
            self.rgb[0],
            self.rgb[1],
            self.rgb[2],
            self.alpha[0],
            self.alpha[1],
            self.alpha[2],
            self.ssim[0],
            self.ssim[1],
            self.ssim[2],
            self.entropy[0],
            self.entropy[1],
            self.entropy[2],
            self.weighted_sum,
        )
    }
}

/// Assemble a report and fill in its weighted sum.
pub fn total_loss(
    l1_total: f64,
    flow: f64,
    rgb: [f64; CATEGORY_COUNT],
    alpha: [f64; CATEGORY_COUNT],
    ssim: [f64; CATEGORY_COUNT],
    entropy: [f64; CATEGORY_COUNT],
    weights: &LossWeights,
) -> LossReport {
    let mut report =
        LossReport { l1_total, flow, rgb, alpha, ssim, entropy, weighted_sum: 0.0 };
    report.weighted_sum = report.dot(weights);
    report
}

/// L1 subgradient with the zero-at-zero convention (f64::signum maps 0 to 1).
fn l1_sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error over every element, with its gradient.
pub fn l1_loss(pred: &[f64], gt: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), gt.len());
    let inv = 1.0 / pred.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let d = pred[i] - gt[i];
        total += d.abs();
        grad[i] = l1_sign(d) * inv;
    }
    (total * inv, grad)
}

/// Mask-weighted L1 on an interleaved RGB image, normalized by 3x the mask
/// area. An empty mask contributes nothing.
pub fn masked_rgb_loss(pred: &[f64], gt: &[f64], mask: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), gt.len());
    assert_eq!(pred.len(), mask.len() * 3);
    let mut grad = vec![0.0; pred.len()];
    let area = mask.iter().filter(|&&m| m > 0.5).count();
    if area == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / (3 * area) as f64;
    let mut total = 0.0;
    for (p, &m) in mask.iter().enumerate() {
        if m <= 0.5 {
            continue;
        }
        for c in 0..3 {
            let i = p * 3 + c;
            let d = pred[i] - gt[i];
            total += d.abs();
            grad[i] = l1_sign(d) * inv;
        }
    }
    (total * inv, grad)
}

/// L1 between a category alpha map and its supervision mask, averaged over
/// the full image.
pub fn masked_alpha_loss(alpha: &[f64], mask: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(alpha.len(), mask.len());
    let inv = 1.0 / alpha.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; alpha.len()];
    for i in 0..alpha.len() {
        let d = alpha[i] - mask[i];
        total += d.abs();
        grad[i] = l1_sign(d) * inv;
    }
    (total * inv, grad)
}

/// Mean absolute flow error over valid pixels (two channels each). Returns
/// the valid-pixel count; an empty valid set yields zero loss.
pub fn flow_loss(pred: &[f64], target: &[f64], valid: &[bool]) -> (f64, Vec<f64>, usize) {
    assert_eq!(pred.len(), target.len());
    assert_eq!(pred.len(), valid.len() * 2);
    let mut grad = vec![0.0; pred.len()];
    let n_valid = valid.iter().filter(|&&v| v).count();
    if n_valid == 0 {
        return (0.0, grad, 0);
    }
    let inv = 1.0 / (2 * n_valid) as f64;
    let mut total = 0.0;
    for (p, &v) in valid.iter().enumerate() {
        if !v {
            continue;
        }
        for c in 0..2 {
            let i = p * 2 + c;
            let d = pred[i] - target[i];
            total += d.abs();
            grad[i] = l1_sign(d) * inv;
        }
    }
    (total * inv, grad, n_valid)
}

/// Piecewise-linear brightness activation on a raw composited map. Input is
/// clamped to [0,1]; the clamp gates the derivative. Returns the activated
/// map and d(activated)/d(raw).
pub fn brightness_activation(raw: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut value = vec![0.0; raw.len()];
    let mut deriv = vec![0.0; raw.len()];
    for (i, &r) in raw.iter().enumerate() {
        let x = r.clamp(0.0, 1.0);
        if x <= BRIGHTNESS_KNEE {
            value[i] = x + 0.5;
            deriv[i] = 1.0;
        } else {
            value[i] = BRIGHTNESS_K * (x - BRIGHTNESS_KNEE) + 1.25;
            deriv[i] = BRIGHTNESS_K;
        }
        if r <= 0.0 || r >= 1.0 {
            deriv[i] = 0.0;
        }
    }
    (value, deriv)
}

/// Pixelwise modulation of an interleaved RGB background by an activated
/// brightness map. No clamping; export is where values are clipped.
pub fn apply_brightness(bg: &[f64], activated: &[f64]) -> Result<Vec<f64>> {
    if bg.len() != activated.len() * 3 {
        return Err(Error::invalid(format!(
            "brightness map has {} pixels but background has {} values",
            activated.len(),
            bg.len()
        )));
    }
    let mut out = vec![0.0; bg.len()];
    for (p, &b) in activated.iter().enumerate() {
        for c in 0..3 {
            out[p * 3 + c] = bg[p * 3 + c] * b;
        }
    }
    Ok(out)
}

/// Motion-only flow target: observed flow minus camera-induced flow.
pub fn dynamic_flow_target(flow_gt: &[f64], flow_cam: &[f64]) -> Result<Vec<f64>> {
    if flow_gt.len() != flow_cam.len() {
        return Err(Error::invalid(format!(
            "flow maps disagree in size: {} vs {}",
            flow_gt.len(),
            flow_cam.len()
        )));
    }
    Ok(flow_gt.iter().zip(flow_cam).map(|(g, c)| g - c).collect())
}

/// Camera-induced flow from the background surface: unproject each pixel at
/// its alpha-weighted mean depth, transform by the relative pose, reproject.
/// Pixels with alpha below 0.5 or depth at or behind the near plane (in
/// either view) are invalid. Identical poses short-circuit to exact zeros.
pub fn camera_flow(
    depth_sum: &[f64],
    alpha: &[f64],
    cam_t: &PinholeCamera,
    cam_t1: &PinholeCamera,
    near: f64,
) -> (Vec<f64>, Vec<bool>) {
    let n = (cam_t.width * cam_t.height) as usize;
    assert_eq!(depth_sum.len(), n);
    assert_eq!(alpha.len(), n);
    let mut flow = vec![0.0; 2 * n];
    let mut valid = vec![false; n];
    let same_pose = cam_t.world_to_camera == cam_t1.world_to_camera
        && cam_t.fx == cam_t1.fx
        && cam_t.fy == cam_t1.fy
        && cam_t.cx == cam_t1.cx
        && cam_t.cy == cam_t1.cy;
    for y in 0..cam_t.height as usize {
        for x in 0..cam_t.width as usize {
            let i = y * cam_t.width as usize + x;
            let a = alpha[i];
            if a < 0.5 {
                continue;
            }
            let depth = depth_sum[i] / a;
            if !(depth > near) {
                continue;
            }
            if same_pose {
                valid[i] = true;
                continue;
            }
            let u0 = x as f64 + 0.5;
            let v0 = y as f64 + 0.5;
            let world = cam_t.unproject(u0, v0, depth);
            let p1 = cam_t1.to_camera(&world);
            if !(p1.z > near) {
                continue;
            }
            let (u1, v1) = cam_t1.project_cam(&p1);
            flow[2 * i] = u1 - u0;
            flow[2 * i + 1] = v1 - v0;
            valid[i] = true;
        }
    }
    (flow, valid)
}

/// Per-category mean of -p log p over all Gaussians; the components sum to
/// the mean Shannon entropy.
pub fn entropy_losses(probs: &[CategoryProbs]) -> [f64; CATEGORY_COUNT] {
    let mut comps = [0.0; CATEGORY_COUNT];
    if probs.is_empty() {
        return comps;
    }
    for pr in probs {
        for (l, comp) in comps.iter_mut().enumerate() {
            let p = pr.0[l];
            if p > 0.0 {
                *comp -= p * p.ln();
            }
        }
    }
    let inv = 1.0 / probs.len() as f64;
    for comp in comps.iter_mut() {
        *comp *= inv;
    }
    comps
}

/// Gradient of the mean Shannon entropy with respect to the logits that
/// produced `probs` through a softmax.
pub fn entropy_grad_logits(probs: &[CategoryProbs]) -> Vec<[f64; CATEGORY_COUNT]> {
    let inv = if probs.is_empty() { 0.0 } else { 1.0 / probs.len() as f64 };
    probs
        .iter()
        .map(|pr| {
            let mut h = 0.0;
            for l in 0..CATEGORY_COUNT {
                let p = pr.0[l];
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            let mut g = [0.0; CATEGORY_COUNT];
            for (l, gl) in g.iter_mut().enumerate() {
                let p = pr.0[l];
                if p > 0.0 {
                    *gl = -p * (p.ln() + h) * inv;
                }
            }
            g
        })
        .collect()
}
