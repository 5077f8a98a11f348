//! Staged training loop. Three phases share one step counter: a warmup that
//! only moves category logits and the probability head (geometry stays
//! bitwise frozen), a soft phase that blends per-category deformations by
//! probability, and a hard phase that routes each Gaussian through its
//! argmax branch alone.
//!
//! Determinism contract: given the same config, dataset, and seed, training
//! is bit-for-bit reproducible, and resuming from any checkpoint reproduces
//! the uninterrupted run exactly. This works because every parameter and
//! Adam moment is snapped to the f32 lattice after each step (so the
//! checkpoint encoding is lossless) and the frame order is a stateless
//! function of (seed, epoch).

pub mod checkpoint;

use crate::deform::{DeformationField, FieldConfig, FieldGrads};
use crate::error::{Error, Result};
use crate::grad::{dilate, AdamState};
use crate::io::{load_dataset, Dataset};
use crate::loss::{LossReport, LossWeights};
use crate::pipeline::{
    backward_frame, compute_losses, forward_frame, FrameContext, FrameTargets, SceneGrads, Stage,
};
use crate::render::RenderSettings;
use crate::types::{init_from_pointcloud, GaussianScene, CATEGORY_COUNT};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Reference image height for `dilation_radius`: the configured radius is
/// scaled by `height / 128` so supervision margins stay proportional.
pub const DILATION_REF_HEIGHT: f64 = 128.0;

/// Mixes the epoch index into the shuffle seed (golden-ratio increment).
const EPOCH_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Position rate decays exponentially from `mu_start` to `mu_end` over
    /// the whole schedule.
    pub mu_start: f64,
    pub mu_end: f64,
    pub opacity: f64,
    pub log_scale: f64,
    pub rot: f64,
    pub sh: f64,
    pub brightness: f64,
    /// All deformation-field tensors (encoder, decoders, head).
    pub field: f64,
    pub cat_logits: f64,
}

impl Default for LearningRates {
    fn default() -> LearningRates {
        LearningRates {
            mu_start: 1.6e-4,
            mu_end: 1.6e-6,
            opacity: 5e-2,
            log_scale: 5e-3,
            rot: 1e-3,
            sh: 2.5e-3,
            brightness: 5e-3,
            field: 1e-3,
            cat_logits: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Directory holding frames/, masks_*/, flow/, cameras.json, init.ply.
    pub dataset: PathBuf,
    pub warmup_iters: u64,
    pub soft_iters: u64,
    pub hard_iters: u64,
    pub sh_degree: u32,
    pub seed: u64,
    pub checkpoint_every: u64,
    /// Supervision mask dilation radius in pixels at a 128-row image.
    pub dilation_radius: usize,
    /// Every k-th frame is held out of training for evaluation (0 = none).
    pub holdout_every: usize,
    /// Initial category probabilities shared by every Gaussian.
    pub prior: [f64; CATEGORY_COUNT],
    pub weights: LossWeights,
    pub rates: LearningRates,
    pub field: FieldConfig,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            dataset: PathBuf::new(),
            warmup_iters: 200,
            soft_iters: 2000,
            hard_iters: 2000,
            sh_degree: 1,
            seed: 0,
            checkpoint_every: 500,
            dilation_radius: 5,
            holdout_every: 8,
            prior: [0.8, 0.1, 0.1],
            weights: LossWeights::default(),
            rates: LearningRates::default(),
            field: FieldConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::invalid("config has no dataset path"));
        }
        if self.total_iters() == 0 {
            return Err(Error::invalid("schedule has zero total iterations"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::invalid("checkpoint_every must be at least 1"));
        }
        if self.holdout_every == 1 {
            return Err(Error::invalid("holdout_every 1 would hold out every frame"));
        }
        if self.sh_degree > 3 {
            return Err(Error::invalid(format!("sh degree {} exceeds 3", self.sh_degree)));
        }
        Ok(())
    }

    pub fn total_iters(&self) -> u64 {
        self.warmup_iters + self.soft_iters + self.hard_iters
    }

    /// Phase for a given step index in `[0, total_iters)`.
    pub fn stage_of(&self, step: u64) -> Stage {
        if step < self.warmup_iters {
            Stage::Warmup
        } else if step < self.warmup_iters + self.soft_iters {
            Stage::Soft
        } else {
            Stage::Hard
        }
    }

    /// Dilation radius in pixels for an image of `height` rows.
    pub fn dilation_px(&self, height: usize) -> usize {
        let r = (self.dilation_radius as f64 * height as f64 / DILATION_REF_HEIGHT).round();
        (r as usize).max(1)
    }
}

/// One Adam state per parameter group, addressed by name. Scene groups come
/// first (mu, rot, log_scale, opacity, sh, brightness, cat_logits), then one
/// group per deformation tensor in declaration order.
#[derive(Clone, Debug)]
pub struct OptState {
    pub groups: Vec<(String, AdamState)>,
}

impl OptState {
    pub fn new(scene: &GaussianScene, field: &DeformationField) -> OptState {
        let n = scene.len();
        let stride = scene.sh_coeff_count();
        let mut groups = vec![
            ("mu".to_string(), AdamState::new(3 * n)),
            ("rot".to_string(), AdamState::new(4 * n)),
            ("log_scale".to_string(), AdamState::new(3 * n)),
            ("opacity".to_string(), AdamState::new(n)),
            ("sh".to_string(), AdamState::new(stride * n)),
            ("brightness".to_string(), AdamState::new(n)),
            ("cat_logits".to_string(), AdamState::new(3 * n)),
        ];
        field.for_each_tensor(&mut |name, data| {
            groups.push((name, AdamState::new(data.len())));
        });
        OptState { groups }
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut AdamState> {
        self.groups.iter_mut().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn snap_f32(&mut self) {
        for (_, adam) in &mut self.groups {
            adam.snap_f32();
        }
    }
}

/// Everything that evolves during training. Checkpoints serialize exactly
/// this; all member values live on the f32 lattice between steps.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub scene: GaussianScene,
    pub field: DeformationField,
    pub opt: OptState,
    pub step: u64,
}

impl TrainState {
    pub fn new(scene: GaussianScene, field: DeformationField) -> TrainState {
        let opt = OptState::new(&scene, &field);
        let mut state = TrainState { scene, field, opt, step: 0 };
        state.snap_f32();
        state
    }

    pub fn snap_f32(&mut self) {
        for g in &mut self.scene.gaussians {
            for k in 0..3 {
                g.mu[k] = g.mu[k] as f32 as f64;
                g.log_scale[k] = g.log_scale[k] as f32 as f64;
                g.cat_logits[k] = g.cat_logits[k] as f32 as f64;
            }
            for v in &mut g.rot {
                *v = *v as f32 as f64;
            }
            g.opacity_logit = g.opacity_logit as f32 as f64;
            g.brightness = g.brightness as f32 as f64;
            for v in &mut g.sh {
                *v = *v as f32 as f64;
            }
        }
        for k in 0..3 {
            self.scene.bounds.min[k] = self.scene.bounds.min[k] as f32 as f64;
            self.scene.bounds.max[k] = self.scene.bounds.max[k] as f32 as f64;
        }
        self.field.for_each_tensor_mut(&mut |_, data| {
            for v in data {
                *v = *v as f32 as f64;
            }
        });
        self.opt.snap_f32();
    }
}

/// Deterministic frame order for one epoch: a seeded shuffle of the training
/// indices, independent of any loop state so a resumed run sees the same
/// sequence.
pub fn epoch_order(seed: u64, epoch: u64, train_frames: &[usize]) -> Vec<usize> {
    let mut order = train_frames.to_vec();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ epoch.wrapping_mul(EPOCH_SEED_MIX));
    order.shuffle(&mut rng);
    order
}

/// Cached per-frame supervision rasters derived from the stored masks.
struct Supervision {
    m_bg: Vec<f64>,
    occ_bg: Vec<f64>,
    occ_obj: Vec<f64>,
    occ_hand: Vec<f64>,
}

fn build_supervision(data: &Dataset, radius: usize) -> Vec<Supervision> {
    let (w, h) = (data.width, data.height);
    data.frames
        .iter()
        .map(|fr| {
            let union: Vec<f64> = fr
                .mask_obj
                .iter()
                .zip(&fr.mask_hand)
                .map(|(&o, &ha)| if o > 0.5 || ha > 0.5 { 1.0 } else { 0.0 })
                .collect();
            let occ_bg = dilate(&union, w, h, radius);
            let m_bg = occ_bg.iter().map(|&v| 1.0 - v).collect();
            Supervision {
                m_bg,
                occ_bg,
                occ_obj: dilate(&fr.mask_hand, w, h, radius),
                occ_hand: dilate(&fr.mask_obj, w, h, radius),
            }
        })
        .collect()
}

/// Whether `group` participates in the given stage. Warmup freezes
/// everything except the category logits and the probability head.
fn group_active(stage: Stage, group: &str) -> bool {
    match stage {
        Stage::Warmup => group == "cat_logits" || group.starts_with("head."),
        Stage::Soft | Stage::Hard => true,
    }
}

fn gather_scene_params(scene: &GaussianScene) -> Vec<(&'static str, Vec<f64>)> {
    let n = scene.len();
    let stride = scene.sh_coeff_count();
    let mut mu = Vec::with_capacity(3 * n);
    let mut rot = Vec::with_capacity(4 * n);
    let mut log_scale = Vec::with_capacity(3 * n);
    let mut opacity = Vec::with_capacity(n);
    let mut sh = Vec::with_capacity(stride * n);
    let mut brightness = Vec::with_capacity(n);
    let mut cat = Vec::with_capacity(3 * n);
    for g in &scene.gaussians {
        mu.extend_from_slice(g.mu.as_slice());
        rot.extend_from_slice(&g.rot);
        log_scale.extend_from_slice(g.log_scale.as_slice());
        opacity.push(g.opacity_logit);
        sh.extend_from_slice(&g.sh);
        brightness.push(g.brightness);
        cat.extend_from_slice(&g.cat_logits);
    }
    vec![
        ("mu", mu),
        ("rot", rot),
        ("log_scale", log_scale),
        ("opacity", opacity),
        ("sh", sh),
        ("brightness", brightness),
        ("cat_logits", cat),
    ]
}

fn gather_scene_grads(grads: &SceneGrads) -> Vec<(&'static str, Vec<f64>)> {
    let n = grads.d_opacity_logit.len();
    let mut mu = Vec::with_capacity(3 * n);
    let mut rot = Vec::with_capacity(4 * n);
    let mut log_scale = Vec::with_capacity(3 * n);
    let mut cat = Vec::with_capacity(3 * n);
    for i in 0..n {
        mu.extend_from_slice(grads.d_mu[i].as_slice());
        rot.extend_from_slice(&grads.d_rot[i]);
        log_scale.extend_from_slice(grads.d_log_scale[i].as_slice());
        cat.extend_from_slice(&grads.d_cat_logits[i]);
    }
    vec![
        ("mu", mu),
        ("rot", rot),
        ("log_scale", log_scale),
        ("opacity", grads.d_opacity_logit.clone()),
        ("sh", grads.d_sh.clone()),
        ("brightness", grads.d_brightness.clone()),
        ("cat_logits", cat),
    ]
}

fn scatter_scene_params(scene: &mut GaussianScene, params: &[(&'static str, Vec<f64>)]) {
    let stride = scene.sh_coeff_count();
    for (i, g) in scene.gaussians.iter_mut().enumerate() {
        for k in 0..3 {
            g.mu[k] = params[0].1[3 * i + k];
            g.log_scale[k] = params[2].1[3 * i + k];
            g.cat_logits[k] = params[6].1[3 * i + k];
        }
        for k in 0..4 {
            g.rot[k] = params[1].1[4 * i + k];
        }
        g.opacity_logit = params[3].1[i];
        g.sh.copy_from_slice(&params[4].1[stride * i..stride * (i + 1)]);
        g.brightness = params[5].1[i];
    }
}

/// Apply one optimizer update. Scene parameters are gathered into flat
/// per-group vectors, stepped by the stage's active groups, scattered back,
/// quaternions renormalized (only when they actually stepped, so frozen
/// phases leave them bitwise intact), and the whole state re-snapped to f32.
fn apply_update(
    state: &mut TrainState,
    grads: &SceneGrads,
    field_grads: &FieldGrads,
    rates: &LearningRates,
    stage: Stage,
    mu_lr: f64,
) {
    let mut params = gather_scene_params(&state.scene);
    let grad_vecs = gather_scene_grads(grads);
    for ((name, p), (gname, g)) in params.iter_mut().zip(&grad_vecs) {
        debug_assert_eq!(name, gname);
        if !group_active(stage, name) {
            continue;
        }
        let lr = match *name {
            "mu" => mu_lr,
            "rot" => rates.rot,
            "log_scale" => rates.log_scale,
            "opacity" => rates.opacity,
            "sh" => rates.sh,
            "brightness" => rates.brightness,
            "cat_logits" => rates.cat_logits,
            other => unreachable!("scene group {other}"),
        };
        state.opt.get_mut(name).expect("scene group").step(p, g, lr);
    }
    scatter_scene_params(&mut state.scene, &params);
    if group_active(stage, "rot") {
        for g in &mut state.scene.gaussians {
            let norm = (g.rot.iter().map(|v| v * v).sum::<f64>()).sqrt();
            if norm > 1e-12 {
                for v in &mut g.rot {
                    *v /= norm;
                }
            } else {
                g.rot = [1.0, 0.0, 0.0, 0.0];
            }
        }
    }

    let mut tensor_grads: Vec<(String, Vec<f64>)> = Vec::new();
    field_grads.for_each_tensor(&mut |name, data| {
        tensor_grads.push((name, data.to_vec()));
    });
    let mut idx = 0;
    let opt = &mut state.opt;
    state.field.for_each_tensor_mut(&mut |name, data| {
        let (gname, g) = &tensor_grads[idx];
        idx += 1;
        debug_assert_eq!(&name, gname);
        if group_active(stage, &name) {
            opt.get_mut(&name).expect("field group").step(data, g, rates.field);
        }
    });
    state.snap_f32();
}

/// Run (or resume) the full schedule. Writes per-step loss rows to
/// `out/train_log.csv`, periodic checkpoints to `out/ckpt_NNNNNN.dpgs`, and
/// the end state to `out/final.dpgs`. On a non-finite loss or gradient the
/// step context is dumped to `out/diagnostic.json` and the error propagated;
/// the newest checkpoint on disk is the recovery point.
pub fn train(cfg: &TrainConfig, out: &Path, resume: Option<&Path>) -> Result<TrainState> {
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset)?;
    std::fs::create_dir_all(out)?;
    let settings = RenderSettings::default();
    let radius = cfg.dilation_px(data.height);
    let supervision = build_supervision(&data, radius);

    let holdout = crate::metrics::holdout_indices(data.frames.len(), cfg.holdout_every);
    let train_frames: Vec<usize> =
        (0..data.frames.len()).filter(|i| !holdout.contains(i)).collect();
    if train_frames.is_empty() {
        return Err(Error::invalid("no training frames left after holdout"));
    }

    let mut state = match resume {
        Some(path) => {
            let st = checkpoint::load(path, &cfg.field)?;
            if st.scene.sh_degree != cfg.sh_degree {
                return Err(Error::invalid(format!(
                    "checkpoint sh degree {} does not match config {}",
                    st.scene.sh_degree, cfg.sh_degree
                )));
            }
            st
        }
        None => {
            let scene = init_from_pointcloud(
                &data.init_points,
                &data.init_colors,
                &cfg.prior,
                cfg.sh_degree,
            )?;
            let field =
                DeformationField::new(&cfg.field, &mut ChaCha20Rng::seed_from_u64(cfg.seed));
            TrainState::new(scene, field)
        }
    };

    let log_path = out.join("train_log.csv");
    let fresh_log = !(resume.is_some() && log_path.exists());
    let mut log = std::io::BufWriter::new(
        std::fs::OpenOptions::new().create(true).append(true).open(&log_path)?,
    );
    if fresh_log {
        writeln!(log, "{}", LossReport::csv_header())?;
    }

    let total = cfg.total_iters();
    let epoch_len = train_frames.len() as u64;
    let mut order: Vec<usize> = Vec::new();
    let mut order_epoch = u64::MAX;
    while state.step < total {
        let stage = cfg.stage_of(state.step);
        let epoch = state.step / epoch_len;
        if epoch != order_epoch {
            order = epoch_order(cfg.seed, epoch, &train_frames);
            order_epoch = epoch;
        }
        let fi = order[(state.step % epoch_len) as usize];
        let fr = &data.frames[fi];
        let sup = &supervision[fi];
        let next = data.frames.get(fi + 1);
        let ctx = FrameContext {
            cam: &fr.camera,
            cam_next: next.map(|n| &n.camera),
            t: fr.t,
            t_next: next.map(|n| n.t),
        };
        let targets = FrameTargets {
            rgb: &fr.rgb,
            masks: [&sup.m_bg, &fr.mask_obj, &fr.mask_hand],
            occ: [&sup.occ_bg, &sup.occ_obj, &sup.occ_hand],
            flow: next.map(|_| fr.flow_gt.as_slice()),
        };

        let step_result = (|| -> Result<LossReport> {
            let fwd = forward_frame(&state.scene, &state.field, &ctx, stage, &settings)?;
            let (report, adj, d_logits) =
                compute_losses(&fwd, &ctx, &targets, &cfg.weights, &settings)?;
            if !report.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite loss at step {} on frame {fi}",
                    state.step
                )));
            }
            let (grads, field_grads) =
                backward_frame(&state.scene, &state.field, &ctx, &settings, &fwd, &adj, &d_logits)?;
            let mu_lr = cfg.rates.mu_start
                * (cfg.rates.mu_end / cfg.rates.mu_start).powf(state.step as f64 / total as f64);
            apply_update(&mut state, &grads, &field_grads, &cfg.rates, stage, mu_lr);
            Ok(report)
        })();
        let report = match step_result {
            Ok(r) => r,
            Err(e) => {
                let diag = serde_json::json!({
                    "step": state.step,
                    "stage": stage.name(),
                    "frame": fi,
                    "error": e.to_string(),
                });
                let _ = std::fs::write(
                    out.join("diagnostic.json"),
                    serde_json::to_vec_pretty(&diag).unwrap(),
                );
                return Err(e);
            }
        };

        writeln!(log, "{}", report.csv_row(state.step, stage.name()))?;
        state.step += 1;

        let at_boundary = state.step == cfg.warmup_iters
            || state.step == cfg.warmup_iters + cfg.soft_iters;
        if state.step % cfg.checkpoint_every == 0 || at_boundary || state.step == total {
            log.flush()?;
            checkpoint::save(&out.join(format!("ckpt_{:06}.dpgs", state.step)), &state)?;
            eprintln!(
                "step {}/{total} {} loss {:.5}",
                state.step,
                stage.name(),
                report.weighted_sum
            );
        }
    }
    log.flush()?;
    checkpoint::save(&out.join("final.dpgs"), &state)?;
    Ok(state)
}
