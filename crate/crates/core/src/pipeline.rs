//! Whole-frame differentiable pipeline. A forward pass deforms the canonical
//! Gaussians at time t (and t+1 for flow), projects them, and composites
//! four images: the full composite plus one image per category. The backward
//! pass takes adjoints on those images and returns exact gradients for every
//! per-Gaussian field and every deformation tensor in one sweep.
//!
//! Category images are probability-weighted over the full set during warmup
//! and the soft stage, and plain compositing over hard-label subsets during
//! the hard stage. Warmup applies zero deformation; classification still
//! trains through the probability-weighted alphas.

use crate::deform::{apply_delta, DeformationDelta, DeformationField, FieldGrads, DELTA_DIM};
use crate::deform::mlp::{Mlp, MlpCache};
use crate::error::{Error, Result};
use crate::grad::zero_masked;
use crate::loss::{
    apply_brightness, brightness_activation, camera_flow, dynamic_flow_target, entropy_grad_logits,
    entropy_losses, flow_loss, l1_loss, masked_alpha_loss, masked_rgb_loss, ssim::ssim_value_grad,
    LossReport, LossWeights,
};
use crate::render::{
    composite, composite_backward, project_point, project_point_grad, project_splat,
    project_splat_grad, sort_splats, GeomAdjoint, OutputAdjoint, RenderOutput, RenderSettings,
    Splat2D,
};
use crate::sh::{basis_len, eval_sh, eval_sh_grad};
use crate::types::{
    sigmoid, AugmentedGaussian, Category, CategoryProbs, GaussianScene, PinholeCamera,
    CATEGORY_COUNT,
};
use nalgebra::{DMatrix, Vector2, Vector3};
use std::cell::Cell;

thread_local! {
    /// Per-thread count of probability-weighted (soft) delta blends. Purely
    /// diagnostic: it verifies the stage contract that hard-phase passes
    /// never touch the soft gate. Thread-local so a measurement window on
    /// one thread cannot be polluted by concurrent work on another.
    static SOFT_GATE_BLENDS: Cell<u64> = const { Cell::new(0) };
}

pub fn soft_gate_blends() -> u64 {
    SOFT_GATE_BLENDS.with(|c| c.get())
}

/// Training phase. Controls gating (soft blend vs. hard routing) and whether
/// deformation runs at all.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Warmup,
    Soft,
    Hard,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Warmup => "warmup",
            Stage::Soft => "soft",
            Stage::Hard => "hard",
        }
    }
}

/// Cameras and times for one frame. `cam_next`/`t_next` enable the flow
/// channel; without them the flow map is zero.
#[derive(Clone, Copy, Debug)]
pub struct FrameContext<'a> {
    pub cam: &'a PinholeCamera,
    pub cam_next: Option<&'a PinholeCamera>,
    pub t: f64,
    pub t_next: Option<f64>,
}

/// One decoder's forward record: which Gaussians it ran on (matrix row r
/// came from Gaussian `rows[r]`), the layer cache, and the raw outputs.
struct BranchTape {
    rows: Vec<u32>,
    cache: MlpCache,
    out: DMatrix<f64>,
}

struct DecTape {
    obj: Option<BranchTape>,
    hand: Option<BranchTape>,
}

struct NextTape {
    coords: Vec<[f64; 4]>,
    dec: DecTape,
    mu_next: Vec<Vector3<f64>>,
}

/// Forward result: the four rendered passes plus the replay tape for
/// `backward_frame`.
pub struct FrameForward {
    pub composite: RenderOutput,
    pub cat: [RenderOutput; 3],
    /// Effective per-Gaussian probabilities (stored logits plus head update).
    pub probs: Vec<CategoryProbs>,
    /// Hard labels from the stored logits.
    pub labels: Vec<Category>,
    pub splats: Vec<Splat2D>,
    /// True when category passes weight alpha by probability (warmup/soft).
    pub soft_alpha: bool,
    alpha_base: Vec<f64>,
    alpha_cat: [Vec<f64>; 3],
    include_cat: Option<[Vec<bool>; 3]>,
    deformed: Vec<AugmentedGaussian>,
    coords_t: Vec<[f64; 4]>,
    head_cache: MlpCache,
    dec_t: DecTape,
    next: Option<NextTape>,
    /// Per Gaussian: both flow endpoints projected in the next camera.
    flow_ok: Vec<bool>,
}

/// Adjoint images for each of the four passes, pre-scaled by loss weights.
#[derive(Clone, Debug, Default)]
pub struct PassAdjoints {
    pub composite: OutputAdjoint,
    pub cat: [OutputAdjoint; 3],
}

/// Per-Gaussian gradients mirroring every trainable field.
#[derive(Clone, Debug)]
pub struct SceneGrads {
    pub d_mu: Vec<Vector3<f64>>,
    pub d_rot: Vec<[f64; 4]>,
    pub d_log_scale: Vec<Vector3<f64>>,
    pub d_opacity_logit: Vec<f64>,
    /// Coefficient-major RGB, matching `AugmentedGaussian::sh` per Gaussian.
    pub d_sh: Vec<f64>,
    pub d_brightness: Vec<f64>,
    pub d_cat_logits: Vec<[f64; 3]>,
    pub sh_stride: usize,
}

impl SceneGrads {
    pub fn zeros(n: usize, sh_stride: usize) -> SceneGrads {
        SceneGrads {
            d_mu: vec![Vector3::zeros(); n],
            d_rot: vec![[0.0; 4]; n],
            d_log_scale: vec![Vector3::zeros(); n],
            d_opacity_logit: vec![0.0; n],
            d_sh: vec![0.0; n * sh_stride],
            d_brightness: vec![0.0; n],
            d_cat_logits: vec![[0.0; 3]; n],
            sh_stride,
        }
    }

    /// Error (with the offending Gaussian index) if any gradient is not
    /// finite.
    pub fn assert_finite(&self) -> Result<()> {
        for i in 0..self.d_mu.len() {
            let sh = &self.d_sh[i * self.sh_stride..(i + 1) * self.sh_stride];
            let ok = self.d_mu[i].iter().all(|v| v.is_finite())
                && self.d_rot[i].iter().all(|v| v.is_finite())
                && self.d_log_scale[i].iter().all(|v| v.is_finite())
                && self.d_opacity_logit[i].is_finite()
                && sh.iter().all(|v| v.is_finite())
                && self.d_brightness[i].is_finite()
                && self.d_cat_logits[i].iter().all(|v| v.is_finite());
            if !ok {
                return Err(Error::numerical(format!(
                    "non-finite gradient for gaussian {}",
                    i
                )));
            }
        }
        Ok(())
    }
}

fn softmax_vjp(p: &CategoryProbs, d_p: &[f64; 3]) -> [f64; 3] {
    let dot = p.0[0] * d_p[0] + p.0[1] * d_p[1] + p.0[2] * d_p[2];
    [
        p.0[0] * (d_p[0] - dot),
        p.0[1] * (d_p[1] - dot),
        p.0[2] * (d_p[2] - dot),
    ]
}

/// Adjoint of matrix inversion for the packed symmetric 2x2 (m00, m01, m11)
/// with the off-diagonal slot carrying the combined gradient of both
/// symmetric entries: dC = -K dK K with K the inverse.
fn conic_to_cov_backward(conic: &[f64; 3], d_conic: &[f64; 3]) -> [f64; 3] {
    let (k0, k1, k2) = (conic[0], conic[1], conic[2]);
    // Unpack the combined off-diagonal adjoint into the matrix form.
    let (d0, d1, d2) = (d_conic[0], 0.5 * d_conic[1], d_conic[2]);
    // t = dK * K, then dC = -K * t.
    let t00 = d0 * k0 + d1 * k1;
    let t01 = d0 * k1 + d1 * k2;
    let t10 = d1 * k0 + d2 * k1;
    let t11 = d1 * k1 + d2 * k2;
    let c00 = -(k0 * t00 + k1 * t10);
    let c01 = -(k0 * t01 + k1 * t11);
    let c11 = -(k1 * t01 + k2 * t11);
    [c00, 2.0 * c01, c11]
}

/// Chain a coordinate adjoint back to the world position through the bounds
/// normalization; clamped axes pass nothing.
fn coord_grad_to_mu(
    bounds: &crate::types::SceneBounds,
    mu: &Vector3<f64>,
    d_coord: &[f64; 4],
) -> Vector3<f64> {
    let mut d = Vector3::zeros();
    for a in 0..3 {
        let ext = bounds.max[a] - bounds.min[a];
        if ext <= 0.0 {
            continue;
        }
        let raw = (mu[a] - bounds.min[a]) / ext;
        if raw > 0.0 && raw < 1.0 {
            d[a] = d_coord[a] / ext;
        }
    }
    d
}

fn gather_rows(feats: &DMatrix<f64>, rows: &[u32]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), feats.ncols(), |r, c| feats[(rows[r] as usize, c)])
}

fn run_decoders(
    field: &DeformationField,
    feats: &DMatrix<f64>,
    stage: Stage,
    labels: &[Category],
) -> DecTape {
    let run = |dec: &Mlp, rows: Vec<u32>| -> Option<BranchTape> {
        if rows.is_empty() {
            return None;
        }
        let x = if rows.len() == feats.nrows() {
            feats.clone()
        } else {
            gather_rows(feats, &rows)
        };
        let (out, cache) = dec.forward_batch(x);
        Some(BranchTape { rows, cache, out })
    };
    match stage {
        Stage::Warmup => DecTape { obj: None, hand: None },
        Stage::Soft => {
            let all: Vec<u32> = (0..feats.nrows() as u32).collect();
            DecTape {
                obj: run(&field.dec_obj, all.clone()),
                hand: run(&field.dec_hand, all),
            }
        }
        Stage::Hard => {
            let pick = |want: Category| -> Vec<u32> {
                labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l == want)
                    .map(|(i, _)| i as u32)
                    .collect()
            };
            DecTape {
                obj: run(&field.dec_obj, pick(Category::Object)),
                hand: run(&field.dec_hand, pick(Category::Hand)),
            }
        }
    }
}

fn row_delta(out: &DMatrix<f64>, r: usize) -> DeformationDelta {
    let mut buf = [0.0; DELTA_DIM];
    for (k, slot) in buf.iter_mut().enumerate() {
        *slot = out[(r, k)];
    }
    DeformationDelta::from_slice(&buf)
}

/// Blend the branch outputs per the stage's gating rule.
fn blend_deltas(
    n: usize,
    stage: Stage,
    dec: &DecTape,
    probs: &[CategoryProbs],
) -> Vec<DeformationDelta> {
    let mut deltas = vec![DeformationDelta::default(); n];
    match stage {
        Stage::Warmup => {}
        Stage::Soft => {
            SOFT_GATE_BLENDS.with(|c| c.set(c.get() + 1));
            for (branch, cat) in [(&dec.obj, Category::Object), (&dec.hand, Category::Hand)] {
                if let Some(tape) = branch {
                    for (r, &gi) in tape.rows.iter().enumerate() {
                        let gi = gi as usize;
                        deltas[gi].scaled_add(probs[gi].get(cat), &row_delta(&tape.out, r));
                    }
                }
            }
        }
        Stage::Hard => {
            for branch in [&dec.obj, &dec.hand].into_iter().flatten() {
                for (r, &gi) in branch.rows.iter().enumerate() {
                    deltas[gi as usize] = row_delta(&branch.out, r);
                }
            }
        }
    }
    deltas
}

/// Render one frame with a full backward tape.
pub fn forward_frame(
    scene: &GaussianScene,
    field: &DeformationField,
    ctx: &FrameContext,
    stage: Stage,
    settings: &RenderSettings,
) -> Result<FrameForward> {
    let n = scene.gaussians.len();
    let bounds = &scene.bounds;
    let cam = ctx.cam;

    let coords_t: Vec<[f64; 4]> = scene
        .gaussians
        .iter()
        .map(|g| DeformationField::coords(bounds, g, ctx.t))
        .collect();
    let feats = field.hexplane.encode_batch(&coords_t);
    let (head_out, head_cache) = field.head.forward_batch(feats.clone());
    let probs: Vec<CategoryProbs> = scene
        .gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| {
            CategoryProbs::from_logits(&[
                g.cat_logits[0] + field.delta_p_scale * head_out[(i, 0)],
                g.cat_logits[1] + field.delta_p_scale * head_out[(i, 1)],
                g.cat_logits[2] + field.delta_p_scale * head_out[(i, 2)],
            ])
        })
        .collect();
    let labels: Vec<Category> = scene.gaussians.iter().map(|g| g.hard_label()).collect();

    let dec_t = run_decoders(field, &feats, stage, &labels);
    let deltas = blend_deltas(n, stage, &dec_t, &probs);
    let deformed: Vec<AugmentedGaussian> = scene
        .gaussians
        .iter()
        .zip(&deltas)
        .map(|(g, d)| apply_delta(g, d))
        .collect();

    // Second deformation sample at t+1 for the flow channel. Gating reuses
    // the probabilities and labels from time t.
    let next = match (ctx.t_next, ctx.cam_next) {
        (Some(t_next), Some(_)) => {
            let coords: Vec<[f64; 4]> = scene
                .gaussians
                .iter()
                .map(|g| DeformationField::coords(bounds, g, t_next))
                .collect();
            let feats_n = field.hexplane.encode_batch(&coords);
            let dec = run_decoders(field, &feats_n, stage, &labels);
            let deltas_n = blend_deltas(n, stage, &dec, &probs);
            let mu_next: Vec<Vector3<f64>> = scene
                .gaussians
                .iter()
                .zip(&deltas_n)
                .map(|(g, d)| g.mu + Vector3::new(d.d_mu[0], d.d_mu[1], d.d_mu[2]))
                .collect();
            Some(NextTape { coords, dec, mu_next })
        }
        _ => None,
    };

    let cam_center = cam.center();
    let mut splats = Vec::new();
    let mut flow_ok = vec![false; n];
    for (gi, g) in deformed.iter().enumerate() {
        let Some(geom) = project_splat(cam, &g.mu, &g.rot, &g.log_scale, settings) else {
            continue;
        };
        let dir = (g.mu - cam_center).normalize();
        let rgb = eval_sh(scene.sh_degree, &g.sh, &dir);
        let mut flow = [0.0; 2];
        if let (Some(nx), Some(cam_next)) = (&next, ctx.cam_next) {
            if let (Some((uv0, _)), Some((uv1, _))) = (
                project_point(cam_next, &g.mu, settings.near),
                project_point(cam_next, &nx.mu_next[gi], settings.near),
            ) {
                flow = [uv1.x - uv0.x, uv1.y - uv0.y];
                flow_ok[gi] = true;
            }
        }
        splats.push(Splat2D {
            gaussian_index: gi as u32,
            mean: geom.mean,
            cov: geom.cov,
            conic: geom.conic,
            depth: geom.depth,
            rgb,
            brightness: g.brightness,
            flow,
            x0: geom.x0,
            x1: geom.x1,
            y0: geom.y0,
            y1: geom.y1,
        });
    }
    sort_splats(&mut splats);

    let alpha_base: Vec<f64> = splats
        .iter()
        .map(|s| sigmoid(deformed[s.gaussian_index as usize].opacity_logit))
        .collect();
    let soft_alpha = stage != Stage::Hard;
    let (alpha_cat, include_cat) = if soft_alpha {
        let per_cat = std::array::from_fn(|l| {
            splats
                .iter()
                .zip(&alpha_base)
                .map(|(s, &a)| a * probs[s.gaussian_index as usize].0[l])
                .collect::<Vec<f64>>()
        });
        (per_cat, None)
    } else {
        let include: [Vec<bool>; 3] = std::array::from_fn(|l| {
            splats
                .iter()
                .map(|s| labels[s.gaussian_index as usize].index() == l)
                .collect()
        });
        (std::array::from_fn(|_| alpha_base.clone()), Some(include))
    };

    let (w, h) = (cam.width as usize, cam.height as usize);
    let composite_out = composite(w, h, &splats, &alpha_base, None, settings)?;
    let mut cat_out = Vec::with_capacity(3);
    for l in 0..CATEGORY_COUNT {
        let include = include_cat.as_ref().map(|m| m[l].as_slice());
        cat_out.push(composite(w, h, &splats, &alpha_cat[l], include, settings)?);
    }
    let mut it = cat_out.into_iter();
    let cat = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];

    Ok(FrameForward {
        composite: composite_out,
        cat,
        probs,
        labels,
        splats,
        soft_alpha,
        alpha_base,
        alpha_cat,
        include_cat,
        deformed,
        coords_t,
        head_cache,
        dec_t,
        next,
        flow_ok,
    })
}

fn adjoint_is_zero(a: &OutputAdjoint) -> bool {
    a.d_rgb.is_empty()
        && a.d_alpha.is_empty()
        && a.d_depth.is_empty()
        && a.d_brightness.is_empty()
        && a.d_flow.is_empty()
}

/// Gradients of the (weighted) losses encoded in `adj` plus an extra adjoint
/// on the effective category logits (the entropy term), for everything the
/// forward pass touched.
pub fn backward_frame(
    scene: &GaussianScene,
    field: &DeformationField,
    ctx: &FrameContext,
    settings: &RenderSettings,
    fwd: &FrameForward,
    adj: &PassAdjoints,
    d_logits_eff: &[[f64; 3]],
) -> Result<(SceneGrads, FieldGrads)> {
    let n = scene.gaussians.len();
    let cam = ctx.cam;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let n_splats = fwd.splats.len();
    let sh_stride = 3 * basis_len(scene.sh_degree);
    let mut grads = SceneGrads::zeros(n, sh_stride);
    let mut field_grads = FieldGrads::zeros_like(field);

    // 1. Compositing backward per pass; merge payload/geometry adjoints and
    // split each pass's effective-alpha adjoint into opacity and probability.
    let mut merged = vec![crate::render::SplatAdjoint::default(); n_splats];
    let mut d_alpha_base = vec![0.0; n_splats];
    let mut d_probs = vec![[0.0; 3]; n];
    let run_pass = |pass_adj: &OutputAdjoint,
                        out: &RenderOutput,
                        alpha: &[f64],
                        include: Option<&[bool]>,
                        cat: Option<usize>,
                        merged: &mut Vec<crate::render::SplatAdjoint>,
                        d_alpha_base: &mut Vec<f64>,
                        d_probs: &mut Vec<[f64; 3]>|
     -> Result<()> {
        if adjoint_is_zero(pass_adj) {
            return Ok(());
        }
        let sa = composite_backward(w, h, &fwd.splats, alpha, include, settings, out, pass_adj)?;
        for (s, a) in sa.iter().enumerate() {
            let gi = fwd.splats[s].gaussian_index as usize;
            merged[s].d_mean[0] += a.d_mean[0];
            merged[s].d_mean[1] += a.d_mean[1];
            for k in 0..3 {
                merged[s].d_conic[k] += a.d_conic[k];
                merged[s].d_rgb[k] += a.d_rgb[k];
            }
            merged[s].d_depth += a.d_depth;
            merged[s].d_brightness += a.d_brightness;
            merged[s].d_flow[0] += a.d_flow[0];
            merged[s].d_flow[1] += a.d_flow[1];
            match cat {
                Some(l) if fwd.soft_alpha => {
                    d_alpha_base[s] += fwd.probs[gi].0[l] * a.d_alpha_eff;
                    d_probs[gi][l] += fwd.alpha_base[s] * a.d_alpha_eff;
                }
                _ => d_alpha_base[s] += a.d_alpha_eff,
            }
        }
        Ok(())
    };
    run_pass(
        &adj.composite,
        &fwd.composite,
        &fwd.alpha_base,
        None,
        None,
        &mut merged,
        &mut d_alpha_base,
        &mut d_probs,
    )?;
    for l in 0..CATEGORY_COUNT {
        let include = fwd.include_cat.as_ref().map(|m| m[l].as_slice());
        run_pass(
            &adj.cat[l],
            &fwd.cat[l],
            &fwd.alpha_cat[l],
            include,
            Some(l),
            &mut merged,
            &mut d_alpha_base,
            &mut d_probs,
        )?;
    }

    // 2. Per-splat geometry, SH, opacity, brightness, and flow chains.
    let cam_center = cam.center();
    let mut d_delta = vec![DeformationDelta::default(); n];
    let mut d_mu_next = vec![Vector3::zeros(); n];
    for (s, splat) in fwd.splats.iter().enumerate() {
        let gi = splat.gaussian_index as usize;
        let g_def = &fwd.deformed[gi];
        let m = &merged[s];

        let a = fwd.alpha_base[s];
        let d_logit = a * (1.0 - a) * d_alpha_base[s];
        grads.d_opacity_logit[gi] += d_logit;
        d_delta[gi].d_opacity_logit += d_logit;

        grads.d_brightness[gi] += m.d_brightness;
        d_delta[gi].d_brightness += m.d_brightness;

        let v = g_def.mu - cam_center;
        let dir = v.normalize();
        let sh_slice = &mut grads.d_sh[gi * sh_stride..(gi + 1) * sh_stride];
        let d_dir = eval_sh_grad(scene.sh_degree, &g_def.sh, &dir, &m.d_rgb, sh_slice);
        for k in 0..3 {
            d_delta[gi].d_sh_dc[k] += sh_slice[k];
        }
        let mut d_mu_def = (d_dir - dir * dir.dot(&d_dir)) / v.norm();

        let d_cov = conic_to_cov_backward(&splat.conic, &m.d_conic);
        let gadj = GeomAdjoint { d_mean: m.d_mean, d_cov, d_depth: m.d_depth };
        let (d_mu_p, d_rot, d_ls) =
            project_splat_grad(cam, &g_def.mu, &g_def.rot, &g_def.log_scale, &gadj);
        d_mu_def += d_mu_p;

        if fwd.flow_ok[gi] {
            let cam_next = ctx.cam_next.expect("flow recorded without a next camera");
            let nx = fwd.next.as_ref().expect("flow recorded without a next tape");
            let d_uv = Vector2::new(m.d_flow[0], m.d_flow[1]);
            d_mu_def += project_point_grad(cam_next, &g_def.mu, &(-d_uv), 0.0);
            d_mu_next[gi] += project_point_grad(cam_next, &nx.mu_next[gi], &d_uv, 0.0);
        }

        grads.d_mu[gi] += d_mu_def;
        grads.d_log_scale[gi] += d_ls;
        for k in 0..3 {
            d_delta[gi].d_mu[k] += d_mu_def[k];
            d_delta[gi].d_log_scale[k] += d_ls[k];
        }
        for k in 0..4 {
            grads.d_rot[gi][k] += d_rot[k];
            d_delta[gi].d_rot[k] += d_rot[k];
        }
    }

    // mu at t+1 is base mu plus the next-time delta.
    if fwd.next.is_some() {
        for gi in 0..n {
            grads.d_mu[gi] += d_mu_next[gi];
        }
    }

    // 3. Gate backward at t: route the applied-delta adjoints into decoder
    // output rows (and, in the soft stage, into the probabilities).
    let fdim = field.hexplane.feature_dim();
    let mut d_feat_t = DMatrix::zeros(n, fdim);
    let back_branch = |dec: &Mlp,
                           tape: &Option<BranchTape>,
                           cat: Category,
                           adj_of: &mut dyn FnMut(usize) -> [f64; DELTA_DIM],
                           soft: bool,
                           d_probs: &mut Vec<[f64; 3]>,
                           d_feat: &mut DMatrix<f64>,
                           out_grads: &mut crate::deform::mlp::MlpGrads| {
        let Some(tape) = tape else { return };
        let mut d_out = DMatrix::zeros(tape.rows.len(), DELTA_DIM);
        for (r, &gi) in tape.rows.iter().enumerate() {
            let gi = gi as usize;
            let dd = adj_of(gi);
            if soft {
                let p = fwd.probs[gi].get(cat);
                let mut dot = 0.0;
                for k in 0..DELTA_DIM {
                    d_out[(r, k)] = p * dd[k];
                    dot += dd[k] * tape.out[(r, k)];
                }
                d_probs[gi][cat.index()] += dot;
            } else {
                for k in 0..DELTA_DIM {
                    d_out[(r, k)] = dd[k];
                }
            }
        }
        let (d_in, g) = dec.backward_batch(&tape.cache, &d_out);
        out_grads.add_assign(&g);
        for (r, &gi) in tape.rows.iter().enumerate() {
            let gi = gi as usize;
            for c in 0..fdim {
                d_feat[(gi, c)] += d_in[(r, c)];
            }
        }
    };
    {
        let mut adj_of = |gi: usize| d_delta[gi].to_array();
        back_branch(
            &field.dec_obj,
            &fwd.dec_t.obj,
            Category::Object,
            &mut adj_of,
            fwd.soft_alpha,
            &mut d_probs,
            &mut d_feat_t,
            &mut field_grads.dec_obj,
        );
        let mut adj_of = |gi: usize| d_delta[gi].to_array();
        back_branch(
            &field.dec_hand,
            &fwd.dec_t.hand,
            Category::Hand,
            &mut adj_of,
            fwd.soft_alpha,
            &mut d_probs,
            &mut d_feat_t,
            &mut field_grads.dec_hand,
        );
    }

    // 4. Gate backward at t+1 (flow path): only the position slots carry
    // adjoints, gated by the time-t probabilities.
    if let Some(nx) = &fwd.next {
        let mut d_feat_n = DMatrix::zeros(n, fdim);
        let mut adj_of = |gi: usize| {
            let mut dd = [0.0; DELTA_DIM];
            dd[0] = d_mu_next[gi].x;
            dd[1] = d_mu_next[gi].y;
            dd[2] = d_mu_next[gi].z;
            dd
        };
        back_branch(
            &field.dec_obj,
            &nx.dec.obj,
            Category::Object,
            &mut adj_of,
            fwd.soft_alpha,
            &mut d_probs,
            &mut d_feat_n,
            &mut field_grads.dec_obj,
        );
        let mut adj_of = |gi: usize| {
            let mut dd = [0.0; DELTA_DIM];
            dd[0] = d_mu_next[gi].x;
            dd[1] = d_mu_next[gi].y;
            dd[2] = d_mu_next[gi].z;
            dd
        };
        back_branch(
            &field.dec_hand,
            &nx.dec.hand,
            Category::Hand,
            &mut adj_of,
            fwd.soft_alpha,
            &mut d_probs,
            &mut d_feat_n,
            &mut field_grads.dec_hand,
        );
        let (d_coords_n, hp) = field.hexplane.encode_batch_grad(&nx.coords, &d_feat_n);
        field_grads.hexplane.add_assign(&hp);
        for (gi, d_coord) in d_coords_n.iter().enumerate() {
            grads.d_mu[gi] += coord_grad_to_mu(&scene.bounds, &scene.gaussians[gi].mu, d_coord);
        }
    }

    // 5. Probability backward through the softmax (render paths plus the
    // entropy adjoint, which is already in logit space), then the head.
    if !d_logits_eff.is_empty() && d_logits_eff.len() != n {
        return Err(Error::contract("logit adjoint length does not match the scene"));
    }
    let mut d_head_out = DMatrix::zeros(n, 3);
    for gi in 0..n {
        let mut dz = softmax_vjp(&fwd.probs[gi], &d_probs[gi]);
        if !d_logits_eff.is_empty() {
            for k in 0..3 {
                dz[k] += d_logits_eff[gi][k];
            }
        }
        for k in 0..3 {
            grads.d_cat_logits[gi][k] += dz[k];
            d_head_out[(gi, k)] = field.delta_p_scale * dz[k];
        }
    }
    let (d_in_head, g_head) = field.head.backward_batch(&fwd.head_cache, &d_head_out);
    field_grads.head.add_assign(&g_head);
    d_feat_t += d_in_head;

    // 6. Encoder backward at t, then the coordinate chain into position.
    let (d_coords_t, hp) = field.hexplane.encode_batch_grad(&fwd.coords_t, &d_feat_t);
    field_grads.hexplane.add_assign(&hp);
    for (gi, d_coord) in d_coords_t.iter().enumerate() {
        grads.d_mu[gi] += coord_grad_to_mu(&scene.bounds, &scene.gaussians[gi].mu, d_coord);
    }

    grads.assert_finite()?;
    let mut bad: Option<String> = None;
    field_grads.for_each_tensor(&mut |name, data| {
        if bad.is_none() && data.iter().any(|v| !v.is_finite()) {
            bad = Some(name);
        }
    });
    if let Some(name) = bad {
        return Err(Error::numerical(format!("non-finite gradient in tensor {}", name)));
    }
    Ok((grads, field_grads))
}

/// Supervision for one frame. Mask and occluder maps are pre-dilated by the
/// dataset cache; all buffers are pixel-major.
pub struct FrameTargets<'a> {
    /// Ground-truth RGB, 3 per pixel.
    pub rgb: &'a [f64],
    /// Per-category supervision masks (bg is the complement of the dilated
    /// dynamic region).
    pub masks: [&'a [f64]; 3],
    /// Per-category occluder masks: gradients are zeroed where these are set.
    pub occ: [&'a [f64]; 3],
    /// Observed optical flow (2 per pixel) toward the next frame, if any.
    pub flow: Option<&'a [f64]>,
}

/// Evaluate every loss against `targets`, returning the report, per-pass
/// image adjoints of the weighted total, and the entropy adjoint on the
/// effective logits.
pub fn compute_losses(
    fwd: &FrameForward,
    ctx: &FrameContext,
    targets: &FrameTargets,
    weights: &LossWeights,
    settings: &RenderSettings,
) -> Result<(LossReport, PassAdjoints, Vec<[f64; 3]>)> {
    let (w, h) = (fwd.composite.width, fwd.composite.height);
    let n = w * h;
    if targets.rgb.len() != 3 * n {
        return Err(Error::invalid("ground-truth image size does not match the render"));
    }
    let mut adj = PassAdjoints::default();
    let mut report = LossReport::default();

    // Full-image photometric term on the composite pass.
    let (l1, mut d_l1) = l1_loss(&fwd.composite.rgb, targets.rgb);
    report.l1_total = l1;
    for v in d_l1.iter_mut() {
        *v *= weights.l1;
    }
    adj.composite.d_rgb = d_l1;

    // Motion-flow supervision on the composite flow map, restricted to the
    // dynamic region; the camera-induced part comes from the background
    // surface and is treated as a constant.
    if let (Some(flow_gt), Some(cam_next)) = (targets.flow, ctx.cam_next) {
        if flow_gt.len() != 2 * n {
            return Err(Error::invalid("flow map size does not match the render"));
        }
        let (f_cam, mut valid) =
            camera_flow(&fwd.cat[0].depth, &fwd.cat[0].alpha, ctx.cam, cam_next, settings.near);
        let target = dynamic_flow_target(flow_gt, &f_cam)?;
        for (p, v) in valid.iter_mut().enumerate() {
            *v = *v && targets.masks[0][p] < 0.5;
        }
        let (fl, mut d_flow, _) = flow_loss(&fwd.composite.flow, &target, &valid);
        report.flow = fl;
        for v in d_flow.iter_mut() {
            *v *= weights.flow;
        }
        adj.composite.d_flow = d_flow;
    }

    // Per-category masked photometric, alpha, and structure terms. The
    // background image is brightness-modulated before supervision.
    let (act, act_deriv) = brightness_activation(&fwd.cat[0].brightness);
    let bg_final = apply_brightness(&fwd.cat[0].rgb, &act)?;
    for l in 0..CATEGORY_COUNT {
        let mask = targets.masks[l];
        if mask.len() != n {
            return Err(Error::invalid("mask size does not match the render"));
        }
        let image = if l == 0 { &bg_final } else { &fwd.cat[l].rgb };

        let (rgb_l, mut d_img) = masked_rgb_loss(image, targets.rgb, mask);
        report.rgb[l] = rgb_l;
        for v in d_img.iter_mut() {
            *v *= weights.rgb;
        }

        let mut masked_pred = vec![0.0; 3 * n];
        let mut masked_gt = vec![0.0; 3 * n];
        for (p, &m) in mask.iter().enumerate() {
            if m > 0.5 {
                for c in 0..3 {
                    masked_pred[p * 3 + c] = image[p * 3 + c];
                    masked_gt[p * 3 + c] = targets.rgb[p * 3 + c];
                }
            }
        }
        let (s, d_s) = ssim_value_grad(&masked_pred, &masked_gt, w, h, 3);
        report.ssim[l] = 1.0 - s;
        for (p, &m) in mask.iter().enumerate() {
            if m > 0.5 {
                for c in 0..3 {
                    d_img[p * 3 + c] -= weights.ssim * d_s[p * 3 + c];
                }
            }
        }

        let (alpha_l, mut d_alpha) = masked_alpha_loss(&fwd.cat[l].alpha, mask);
        report.alpha[l] = alpha_l;
        for v in d_alpha.iter_mut() {
            *v *= weights.alpha;
        }

        // Occlusion rule: this branch learns nothing under other branches.
        zero_masked(&mut d_img, targets.occ[l], n)?;
        zero_masked(&mut d_alpha, targets.occ[l], n)?;

        if l == 0 {
            // Product rule through the brightness modulation, after zeroing.
            let mut d_raw_rgb = vec![0.0; 3 * n];
            let mut d_bright = vec![0.0; n];
            for p in 0..n {
                let mut d_act = 0.0;
                for c in 0..3 {
                    d_raw_rgb[p * 3 + c] = d_img[p * 3 + c] * act[p];
                    d_act += d_img[p * 3 + c] * fwd.cat[0].rgb[p * 3 + c];
                }
                d_bright[p] = d_act * act_deriv[p];
            }
            adj.cat[0].d_rgb = d_raw_rgb;
            adj.cat[0].d_brightness = d_bright;
        } else {
            adj.cat[l].d_rgb = d_img;
        }
        adj.cat[l].d_alpha = d_alpha;
    }

    report.entropy = entropy_losses(&fwd.probs);
    let mut d_logits = entropy_grad_logits(&fwd.probs);
    for d in d_logits.iter_mut() {
        for k in 0..3 {
            d[k] *= weights.entropy;
        }
    }

    report.weighted_sum = report.dot(weights);
    if !report.is_finite() {
        return Err(Error::numerical("loss is not finite"));
    }
    Ok((report, adj, d_logits))
}
