//! Front-to-back alpha compositing over depth-sorted splats, with payload
//! channels (rgb, alpha, depth, brightness, flow) accumulated under the
//! same weights. Pixels are processed in horizontal bands; bands may run
//! in parallel and are merged in a fixed order, so results are identical
//! for any thread count.

use super::{RenderSettings, Splat2D, ALPHA_MAX, ALPHA_MIN, BAND_ROWS, T_EPS};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Forward compositing result plus the replay tape for the backward pass
/// (`t_final`, `contrib_limit`).
#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    /// Pixel-major RGB, length 3*W*H. No background term: fully
    /// transparent pixels are black.
    pub rgb: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Alpha-weighted depth sum (divide by alpha for a surface estimate).
    pub depth: Vec<f64>,
    pub brightness: Vec<f64>,
    pub flow: Vec<f64>,
    /// Transmittance remaining after all contributions.
    pub t_final: Vec<f64>,
    /// 1-based position in the pixel's band list of the last contribution,
    /// 0 if none. Lets the backward pass replay exactly.
    pub contrib_limit: Vec<u32>,
}

impl RenderOutput {
    fn zeros(width: usize, height: usize) -> RenderOutput {
        let n = width * height;
        RenderOutput {
            width,
            height,
            rgb: vec![0.0; 3 * n],
            alpha: vec![0.0; n],
            depth: vec![0.0; n],
            brightness: vec![0.0; n],
            flow: vec![0.0; 2 * n],
            t_final: vec![1.0; n],
            contrib_limit: vec![0; n],
        }
    }
}

/// Adjoint images for the backward pass. Empty vectors mean all-zero.
#[derive(Clone, Debug, Default)]
pub struct OutputAdjoint {
    pub d_rgb: Vec<f64>,
    pub d_alpha: Vec<f64>,
    pub d_depth: Vec<f64>,
    pub d_brightness: Vec<f64>,
    pub d_flow: Vec<f64>,
}

/// Per-splat adjoints produced by `composite_backward`, aligned with the
/// input splat slice.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplatAdjoint {
    pub d_mean: [f64; 2],
    pub d_conic: [f64; 3],
    pub d_alpha_eff: f64,
    pub d_rgb: [f64; 3],
    pub d_depth: f64,
    pub d_brightness: f64,
    pub d_flow: [f64; 2],
}

impl SplatAdjoint {
    fn add(&mut self, o: &SplatAdjoint) {
        self.d_mean[0] += o.d_mean[0];
        self.d_mean[1] += o.d_mean[1];
        for k in 0..3 {
            self.d_conic[k] += o.d_conic[k];
            self.d_rgb[k] += o.d_rgb[k];
        }
        self.d_alpha_eff += o.d_alpha_eff;
        self.d_depth += o.d_depth;
        self.d_brightness += o.d_brightness;
        self.d_flow[0] += o.d_flow[0];
        self.d_flow[1] += o.d_flow[1];
    }
}

fn validate(splats: &[Splat2D], alpha_eff: &[f64], include: Option<&[bool]>) -> Result<()> {
    if alpha_eff.len() != splats.len() {
        return Err(Error::contract("alpha_eff length does not match splats"));
    }
    if let Some(inc) = include {
        if inc.len() != splats.len() {
            return Err(Error::contract("include mask length does not match splats"));
        }
    }
    for w in splats.windows(2) {
        if w[0].depth > w[1].depth {
            return Err(Error::contract("splats are not sorted front to back"));
        }
    }
    for (i, &a) in alpha_eff.iter().enumerate() {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::contract(format!("alpha_eff[{}] = {} outside [0,1]", i, a)));
        }
    }
    Ok(())
}

fn band_count(height: usize) -> usize {
    height.div_ceil(BAND_ROWS)
}

/// Splat ids per band, ascending (= front-to-back) within each band.
fn build_band_lists(
    height: usize,
    splats: &[Splat2D],
    alpha_eff: &[f64],
    include: Option<&[bool]>,
) -> Vec<Vec<u32>> {
    let mut lists = vec![Vec::new(); band_count(height)];
    for (i, s) in splats.iter().enumerate() {
        if let Some(inc) = include {
            if !inc[i] {
                continue;
            }
        }
        if alpha_eff[i] < ALPHA_MIN {
            continue;
        }
        let b0 = s.y0 as usize / BAND_ROWS;
        let b1 = s.y1 as usize / BAND_ROWS;
        for list in lists.iter_mut().take(b1 + 1).skip(b0) {
            list.push(i as u32);
        }
    }
    lists
}

struct BandOut {
    rgb: Vec<f64>,
    alpha: Vec<f64>,
    depth: Vec<f64>,
    brightness: Vec<f64>,
    flow: Vec<f64>,
    t_final: Vec<f64>,
    contrib_limit: Vec<u32>,
}

/// Composite `splats` (depth-sorted) with per-splat effective opacities.
/// `include` restricts the pass to a subset without disturbing indexing.
pub fn composite(
    width: usize,
    height: usize,
    splats: &[Splat2D],
    alpha_eff: &[f64],
    include: Option<&[bool]>,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    validate(splats, alpha_eff, include)?;
    let mut out = RenderOutput::zeros(width, height);
    if width == 0 || height == 0 {
        return Ok(out);
    }
    let lists = build_band_lists(height, splats, alpha_eff, include);
    let cutoff2 = settings.sigma_cutoff * settings.sigma_cutoff;

    let bands: Vec<BandOut> = (0..lists.len())
        .into_par_iter()
        .map(|b| forward_band(b, width, height, splats, alpha_eff, &lists[b], cutoff2))
        .collect();

    for (b, band) in bands.iter().enumerate() {
        let y_start = b * BAND_ROWS;
        let rows = BAND_ROWS.min(height - y_start);
        let n = rows * width;
        let at = y_start * width;
        out.rgb[3 * at..3 * (at + n)].copy_from_slice(&band.rgb);
        out.alpha[at..at + n].copy_from_slice(&band.alpha);
        out.depth[at..at + n].copy_from_slice(&band.depth);
        out.brightness[at..at + n].copy_from_slice(&band.brightness);
        out.flow[2 * at..2 * (at + n)].copy_from_slice(&band.flow);
        out.t_final[at..at + n].copy_from_slice(&band.t_final);
        out.contrib_limit[at..at + n].copy_from_slice(&band.contrib_limit);
    }

    if out.rgb.iter().any(|v| !v.is_finite()) || out.alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite values in composited image"));
    }
    Ok(out)
}

fn forward_band(
    b: usize,
    width: usize,
    height: usize,
    splats: &[Splat2D],
    alpha_eff: &[f64],
    list: &[u32],
    cutoff2: f64,
) -> BandOut {
    let y_start = b * BAND_ROWS;
    let rows = BAND_ROWS.min(height - y_start);
    let n = rows * width;
    let mut out = BandOut {
        rgb: vec![0.0; 3 * n],
        alpha: vec![0.0; n],
        depth: vec![0.0; n],
        brightness: vec![0.0; n],
        flow: vec![0.0; 2 * n],
        t_final: vec![1.0; n],
        contrib_limit: vec![0; n],
    };
    let mut stopped = vec![false; n];

    for (pos, &sid) in list.iter().enumerate() {
        let s = &splats[sid as usize];
        let ae = alpha_eff[sid as usize];
        let ylo = (s.y0 as usize).max(y_start);
        let yhi = (s.y1 as usize).min(y_start + rows - 1);
        for y in ylo..=yhi {
            let dy = (y as f64 + 0.5) - s.mean[1];
            let row = (y - y_start) * width;
            for x in s.x0 as usize..=s.x1 as usize {
                let p = row + x;
                if stopped[p] {
                    continue;
                }
                let dx = (x as f64 + 0.5) - s.mean[0];
                let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                if q > cutoff2 {
                    continue;
                }
                let a = (ae * (-0.5 * q).exp()).min(ALPHA_MAX);
                if a < ALPHA_MIN {
                    continue;
                }
                let t = out.t_final[p];
                let w = a * t;
                out.rgb[3 * p] += w * s.rgb[0];
                out.rgb[3 * p + 1] += w * s.rgb[1];
                out.rgb[3 * p + 2] += w * s.rgb[2];
                out.alpha[p] += w;
                out.depth[p] += w * s.depth;
                out.brightness[p] += w * s.brightness;
                out.flow[2 * p] += w * s.flow[0];
                out.flow[2 * p + 1] += w * s.flow[1];
                out.contrib_limit[p] = (pos + 1) as u32;
                let tn = t * (1.0 - a);
                out.t_final[p] = tn;
                if tn < T_EPS {
                    stopped[p] = true;
                }
            }
        }
    }
    out
}

/// Reverse-mode pass over a recorded forward composite. Returns one
/// adjoint per input splat (zeros where a splat never contributed).
pub fn composite_backward(
    width: usize,
    height: usize,
    splats: &[Splat2D],
    alpha_eff: &[f64],
    include: Option<&[bool]>,
    settings: &RenderSettings,
    out: &RenderOutput,
    adj: &OutputAdjoint,
) -> Result<Vec<SplatAdjoint>> {
    validate(splats, alpha_eff, include)?;
    let n = width * height;
    for (name, buf, chans) in [
        ("d_rgb", &adj.d_rgb, 3usize),
        ("d_alpha", &adj.d_alpha, 1),
        ("d_depth", &adj.d_depth, 1),
        ("d_brightness", &adj.d_brightness, 1),
        ("d_flow", &adj.d_flow, 2),
    ] {
        if !buf.is_empty() && buf.len() != chans * n {
            return Err(Error::contract(format!("{} has wrong length", name)));
        }
    }
    let lists = build_band_lists(height, splats, alpha_eff, include);
    let cutoff2 = settings.sigma_cutoff * settings.sigma_cutoff;

    let per_band: Vec<Vec<SplatAdjoint>> = (0..lists.len())
        .into_par_iter()
        .map(|b| backward_band(b, width, height, splats, alpha_eff, &lists[b], cutoff2, out, adj))
        .collect();

    let mut merged = vec![SplatAdjoint::default(); splats.len()];
    for (b, buf) in per_band.iter().enumerate() {
        for &sid in &lists[b] {
            merged[sid as usize].add(&buf[sid as usize]);
        }
    }
    Ok(merged)
}

#[allow(clippy::too_many_arguments)]
fn backward_band(
    b: usize,
    width: usize,
    height: usize,
    splats: &[Splat2D],
    alpha_eff: &[f64],
    list: &[u32],
    cutoff2: f64,
    out: &RenderOutput,
    adj: &OutputAdjoint,
) -> Vec<SplatAdjoint> {
    let y_start = b * BAND_ROWS;
    let rows = BAND_ROWS.min(height - y_start);
    let n = rows * width;
    let mut grads = vec![SplatAdjoint::default(); splats.len()];

    // Cached per-pixel adjoints in payload order:
    // [r, g, b, alpha, depth, brightness, fu, fv].
    let mut douts = vec![[0.0f64; 8]; n];
    let mut any_nonzero = false;
    for p in 0..n {
        let gp = y_start * width + p;
        let d = &mut douts[p];
        if !adj.d_rgb.is_empty() {
            d[0] = adj.d_rgb[3 * gp];
            d[1] = adj.d_rgb[3 * gp + 1];
            d[2] = adj.d_rgb[3 * gp + 2];
        }
        if !adj.d_alpha.is_empty() {
            d[3] = adj.d_alpha[gp];
        }
        if !adj.d_depth.is_empty() {
            d[4] = adj.d_depth[gp];
        }
        if !adj.d_brightness.is_empty() {
            d[5] = adj.d_brightness[gp];
        }
        if !adj.d_flow.is_empty() {
            d[6] = adj.d_flow[2 * gp];
            d[7] = adj.d_flow[2 * gp + 1];
        }
        any_nonzero |= d.iter().any(|&v| v != 0.0);
    }
    if !any_nonzero {
        return grads;
    }

    let mut t_cur: Vec<f64> = (0..n).map(|p| out.t_final[y_start * width + p]).collect();
    let mut suffix = vec![[0.0f64; 8]; n];
    let contrib = &out.contrib_limit;

    for (pos, &sid) in list.iter().enumerate().rev() {
        let s = &splats[sid as usize];
        let ae = alpha_eff[sid as usize];
        let g = &mut grads[sid as usize];
        let ylo = (s.y0 as usize).max(y_start);
        let yhi = (s.y1 as usize).min(y_start + rows - 1);
        for y in ylo..=yhi {
            let dy = (y as f64 + 0.5) - s.mean[1];
            let row = (y - y_start) * width;
            for x in s.x0 as usize..=s.x1 as usize {
                let p = row + x;
                if (pos + 1) as u32 > contrib[y_start * width + p] {
                    continue;
                }
                let dx = (x as f64 + 0.5) - s.mean[0];
                let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                if q > cutoff2 {
                    continue;
                }
                let f = (-0.5 * q).exp();
                let a_raw = ae * f;
                let clamped = a_raw > ALPHA_MAX;
                let a = if clamped { ALPHA_MAX } else { a_raw };
                if a < ALPHA_MIN {
                    continue;
                }
                let t_before = t_cur[p] / (1.0 - a);
                let w = a * t_before;
                let d = &douts[p];
                let v = [s.rgb[0], s.rgb[1], s.rgb[2], 1.0, s.depth, s.brightness, s.flow[0], s.flow[1]];
                let sfx = &mut suffix[p];
                let mut dot_v = 0.0;
                let mut dot_s = 0.0;
                for c in 0..8 {
                    dot_v += d[c] * v[c];
                    dot_s += d[c] * sfx[c];
                }
                // Payload gradients.
                g.d_rgb[0] += w * d[0];
                g.d_rgb[1] += w * d[1];
                g.d_rgb[2] += w * d[2];
                g.d_depth += w * d[4];
                g.d_brightness += w * d[5];
                g.d_flow[0] += w * d[6];
                g.d_flow[1] += w * d[7];
                // Alpha gradient: own emission minus everything it occludes.
                let d_a = t_before * dot_v - dot_s / (1.0 - a);
                if !clamped {
                    g.d_alpha_eff += f * d_a;
                    let d_q = -0.5 * a_raw * d_a;
                    let ddx = (2.0 * s.conic[0] * dx + 2.0 * s.conic[1] * dy) * d_q;
                    let ddy = (2.0 * s.conic[2] * dy + 2.0 * s.conic[1] * dx) * d_q;
                    g.d_mean[0] -= ddx;
                    g.d_mean[1] -= ddy;
                    g.d_conic[0] += dx * dx * d_q;
                    g.d_conic[1] += 2.0 * dx * dy * d_q;
                    g.d_conic[2] += dy * dy * d_q;
                }
                for c in 0..8 {
                    sfx[c] += w * v[c];
                }
                t_cur[p] = t_before;
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::sort_splats;
    use approx::assert_relative_eq;

    fn point_splat(i: u32, cx: f64, cy: f64, depth: f64, rgb: [f64; 3]) -> Splat2D {
        Splat2D {
            gaussian_index: i,
            mean: [cx, cy],
            cov: [1.0, 0.0, 1.0],
            conic: [1.0, 0.0, 1.0],
            depth,
            rgb,
            brightness: 0.25 * (i + 1) as f64,
            flow: [0.1 * (i + 1) as f64, -0.2],
            x0: 0,
            x1: 0,
            y0: 0,
            y1: 0,
        }
    }

    fn settings() -> RenderSettings {
        RenderSettings::default()
    }

    #[test]
    fn empty_scene_is_transparent() {
        let out = composite(2, 2, &[], &[], None, &settings()).unwrap();
        assert!(out.rgb.iter().all(|&v| v == 0.0));
        assert!(out.alpha.iter().all(|&v| v == 0.0));
        assert!(out.t_final.iter().all(|&v| v == 1.0));
        assert!(out.contrib_limit.iter().all(|&v| v == 0));
    }

    #[test]
    fn two_splat_blend_matches_closed_form() {
        // Both splats centered exactly on the single pixel: falloff is 1,
        // so effective alphas are the raw ones.
        let s = vec![
            point_splat(0, 0.5, 0.5, 1.0, [1.0, 0.0, 0.2]),
            point_splat(1, 0.5, 0.5, 2.0, [0.0, 1.0, 0.4]),
        ];
        let (a1, a2) = (0.6, 0.5);
        let out = composite(1, 1, &s, &[a1, a2], None, &settings()).unwrap();
        let w1 = a1;
        let w2 = (1.0 - a1) * a2;
        assert_relative_eq!(out.rgb[0], w1 * 1.0, max_relative = 1e-12);
        assert_relative_eq!(out.rgb[1], w2 * 1.0, max_relative = 1e-12);
        assert_relative_eq!(out.rgb[2], w1 * 0.2 + w2 * 0.4, max_relative = 1e-12);
        assert_relative_eq!(out.alpha[0], 0.8, max_relative = 1e-12);
        assert_relative_eq!(out.depth[0], w1 * 1.0 + w2 * 2.0, max_relative = 1e-12);
        assert_relative_eq!(out.brightness[0], w1 * 0.25 + w2 * 0.5, max_relative = 1e-12);
        assert_relative_eq!(out.flow[0], w1 * 0.1 + w2 * 0.2, max_relative = 1e-12);
        assert_relative_eq!(out.t_final[0], 0.2, max_relative = 1e-12);
        assert_eq!(out.contrib_limit[0], 2);
    }

    #[test]
    fn unsorted_input_is_rejected() {
        let s = vec![
            point_splat(0, 0.5, 0.5, 2.0, [1.0, 0.0, 0.0]),
            point_splat(1, 0.5, 0.5, 1.0, [0.0, 1.0, 0.0]),
        ];
        let err = composite(1, 1, &s, &[0.5, 0.5], None, &settings()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn saturated_front_splat_occludes_back() {
        let s = vec![
            point_splat(0, 0.5, 0.5, 1.0, [1.0, 1.0, 1.0]),
            point_splat(1, 0.5, 0.5, 2.0, [1.0, 1.0, 1.0]),
        ];
        let out = composite(1, 1, &s, &[1.0, 1.0], None, &settings()).unwrap();
        // Back contribution is bounded by the transmittance floor.
        let back = out.rgb[0] - ALPHA_MAX;
        assert!(back <= 1e-6, "back contribution {}", back);
        assert!(out.t_final[0] <= 1e-7 + 1e-12);
    }

    #[test]
    fn include_mask_selects_subset() {
        let s = vec![
            point_splat(0, 0.5, 0.5, 1.0, [1.0, 0.0, 0.0]),
            point_splat(1, 0.5, 0.5, 2.0, [0.0, 1.0, 0.0]),
        ];
        let out = composite(1, 1, &s, &[0.5, 0.5], Some(&[false, true]), &settings()).unwrap();
        assert_eq!(out.rgb[0], 0.0);
        assert_relative_eq!(out.rgb[1], 0.5, max_relative = 1e-12);
        assert_eq!(out.contrib_limit[0], 1);
    }

    #[test]
    fn early_stop_limits_contributors() {
        let mut s: Vec<Splat2D> = (0..200)
            .map(|i| point_splat(i, 0.5, 0.5, 1.0 + i as f64, [0.5, 0.5, 0.5]))
            .collect();
        sort_splats(&mut s);
        let alphas = vec![0.9; 200];
        let out = composite(1, 1, &s, &alphas, None, &settings()).unwrap();
        // T after k splats is 0.1^k; hits 1e-12 after 12.
        assert_eq!(out.contrib_limit[0], 12);
        assert!(out.t_final[0] < T_EPS);
        assert_relative_eq!(out.alpha[0], 1.0 - out.t_final[0], max_relative = 1e-9);
    }

    #[test]
    fn backward_matches_finite_differences_on_alpha_and_position() {
        // One off-center anisotropic splat over a second one; probe a
        // weighted sum of all outputs.
        let mk = |mean: [f64; 2]| {
            let cov = [2.0, 0.3, 1.0];
            let det = cov[0] * cov[2] - cov[1] * cov[1];
            Splat2D {
                gaussian_index: 0,
                mean,
                cov,
                conic: [cov[2] / det, -cov[1] / det, cov[0] / det],
                depth: 1.0,
                rgb: [0.8, 0.3, 0.5],
                brightness: 0.6,
                flow: [0.4, -0.7],
                x0: 0,
                x1: 3,
                y0: 0,
                y1: 3,
            }
        };
        let mut s1 = mk([1.7, 2.2]);
        let mut s2 = mk([2.3, 1.6]);
        s2.depth = 2.0;
        s2.gaussian_index = 1;
        let splats = vec![s1.clone(), s2.clone()];
        let alphas = [0.55, 0.4];
        let st = settings();

        let weight = |out: &RenderOutput| -> f64 {
            let mut acc = 0.0;
            for (i, v) in out.rgb.iter().enumerate() {
                acc += (0.3 + 0.01 * i as f64) * v;
            }
            for (i, v) in out.alpha.iter().enumerate() {
                acc += (0.2 - 0.003 * i as f64) * v;
            }
            for (i, v) in out.depth.iter().enumerate() {
                acc += 0.05 * (i % 3) as f64 * v;
            }
            for (i, v) in out.brightness.iter().enumerate() {
                acc += 0.02 * (i % 5) as f64 * v;
            }
            for (i, v) in out.flow.iter().enumerate() {
                acc += 0.01 * (i % 7) as f64 * v;
            }
            acc
        };

        let out = composite(4, 4, &splats, &alphas, None, &st).unwrap();
        let n = 16;
        let adj = OutputAdjoint {
            d_rgb: (0..3 * n).map(|i| 0.3 + 0.01 * i as f64).collect(),
            d_alpha: (0..n).map(|i| 0.2 - 0.003 * i as f64).collect(),
            d_depth: (0..n).map(|i| 0.05 * (i % 3) as f64).collect(),
            d_brightness: (0..n).map(|i| 0.02 * (i % 5) as f64).collect(),
            d_flow: (0..2 * n).map(|i| 0.01 * (i % 7) as f64).collect(),
        };
        let grads = composite_backward(4, 4, &splats, &alphas, None, &st, &out, &adj).unwrap();

        let eps = 1e-6;
        // Alpha slots.
        for i in 0..2 {
            let mut hi = alphas;
            let mut lo = alphas;
            hi[i] += eps;
            lo[i] -= eps;
            let f_hi = weight(&composite(4, 4, &splats, &hi, None, &st).unwrap());
            let f_lo = weight(&composite(4, 4, &splats, &lo, None, &st).unwrap());
            let fd = (f_hi - f_lo) / (2.0 * eps);
            assert_relative_eq!(grads[i].d_alpha_eff, fd, max_relative = 1e-6);
        }
        // Mean slots of the front splat.
        for axis in 0..2 {
            s1.mean[axis] += eps;
            let f_hi = weight(&composite(4, 4, &[s1.clone(), s2.clone()], &alphas, None, &st).unwrap());
            s1.mean[axis] -= 2.0 * eps;
            let f_lo = weight(&composite(4, 4, &[s1.clone(), s2.clone()], &alphas, None, &st).unwrap());
            s1.mean[axis] += eps;
            let fd = (f_hi - f_lo) / (2.0 * eps);
            assert_relative_eq!(grads[0].d_mean[axis], fd, max_relative = 1e-5);
        }
    }
}
