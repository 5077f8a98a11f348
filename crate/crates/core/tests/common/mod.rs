//! Shared finite-difference machinery for the gradient tests and the
//! acceptance suite: fixture construction, probe parameters, and the
//! whole-frame check driver.
#![allow(dead_code)]

use dpgs_core::deform::{DeformationField, FieldConfig, FieldGrads};
use dpgs_core::pipeline::{
    backward_frame, forward_frame, FrameContext, PassAdjoints, SceneGrads, Stage,
};
use dpgs_core::render::{OutputAdjoint, RenderOutput, RenderSettings};
use dpgs_core::types::{AugmentedGaussian, GaussianScene, PinholeCamera, SceneBounds};
use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::HashMap;

pub const EPS: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-3;
pub const ABS_TOL: f64 = 1e-6;
pub const N_GAUSS: usize = 6;
pub const W: u32 = 16;
pub const H: u32 = 16;
pub const T0: f64 = 0.31;
pub const T1: f64 = 0.46;
pub const SH_C0: f64 = 0.28209479177387814;

#[derive(Clone, Copy, Debug)]
pub enum Param {
    Mu(usize, usize),
    Rot(usize, usize),
    LogScale(usize, usize),
    Opacity(usize),
    Sh(usize, usize),
    Brightness(usize),
    CatLogit(usize, usize),
    /// Index into `tensor_names`, element index within the tensor.
    Tensor(usize, usize),
}

pub struct Fixture {
    pub scene: GaussianScene,
    pub field: DeformationField,
    pub cam: PinholeCamera,
    pub cam_next: PinholeCamera,
    pub settings: RenderSettings,
    pub tensor_names: Vec<String>,
    pub adj: PassAdjoints,
    pub d_logits: Vec<[f64; 3]>,
}

pub fn camera(dist: f64, shift_x: f64) -> PinholeCamera {
    let mut w2c = Matrix4::identity();
    w2c[(0, 3)] = shift_x;
    w2c[(2, 3)] = dist;
    PinholeCamera {
        fx: W as f64 * 0.8,
        fy: W as f64 * 0.8,
        cx: W as f64 / 2.0,
        cy: H as f64 / 2.0,
        width: W,
        height: H,
        world_to_camera: w2c,
    }
}

/// Minimum distance of a unit coordinate from any bilinear cell edge, in
/// cell units, over the given grid resolutions.
pub fn cell_margin(c: f64, resolutions: &[usize]) -> f64 {
    resolutions
        .iter()
        .map(|&r| {
            let g = c * (r - 1) as f64;
            (g - g.round()).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn build_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let resolutions = vec![8usize, 16];

    let mut gaussians = Vec::with_capacity(N_GAUSS);
    for gi in 0..N_GAUSS {
        // Depth gaps of at least 0.08 keep the compositing order fixed
        // under probes.
        let mu = Vector3::new(
            rng.gen_range(-0.35..0.35),
            rng.gen_range(-0.35..0.35),
            -0.3 + 0.12 * gi as f64 + rng.gen_range(-0.015..0.015),
        );
        let color = [
            rng.gen_range(0.3..0.7),
            rng.gen_range(0.3..0.7),
            rng.gen_range(0.3..0.7),
        ];
        let mut sh = vec![0.0; 12];
        for c in 0..3 {
            sh[c] = (color[c] - 0.5) / SH_C0;
        }
        for v in sh.iter_mut().skip(3) {
            *v = rng.gen_range(-0.05..0.05);
        }
        // Stored logits keep a 0.3 ordering gap so hard labels never flip.
        let top = gi % 3;
        let mut cat_logits = [0.0; 3];
        for k in 0..3 {
            cat_logits[k] = if k == top {
                1.0
            } else if k == (top + 1) % 3 {
                0.2
            } else {
                -0.5
            } + rng.gen_range(-0.1..0.1);
        }
        gaussians.push(AugmentedGaussian {
            mu,
            rot: [
                1.0,
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            ],
            log_scale: Vector3::new(
                rng.gen_range(-0.9..-0.5),
                rng.gen_range(-0.9..-0.5),
                rng.gen_range(-0.9..-0.5),
            ),
            opacity_logit: rng.gen_range(-0.5..1.2),
            sh,
            brightness: rng.gen_range(0.1..0.6),
            cat_logits,
        });
    }
    let bounds = SceneBounds::from_points(gaussians.iter().map(|g| &g.mu)).unwrap();

    // Keep every encoder coordinate away from cell edges so a probe of
    // EPS in world units cannot cross one.
    for g in gaussians.iter_mut() {
        for axis in 0..3 {
            for _ in 0..50 {
                let c = bounds.normalize(&g.mu)[axis];
                if cell_margin(c, &resolutions) > 0.02 && c > 0.01 && c < 0.99 {
                    break;
                }
                g.mu[axis] += 0.0037;
            }
            let c = bounds.normalize(&g.mu)[axis];
            assert!(cell_margin(c, &resolutions) > 0.02, "coordinate nudge failed");
        }
    }
    for t in [T0, T1] {
        assert!(cell_margin(t, &resolutions) > 0.02, "time sits on a cell edge");
    }

    let scene = GaussianScene { gaussians, sh_degree: 1, bounds };

    let cfg = FieldConfig {
        plane_resolutions: resolutions,
        plane_channels: 4,
        decoder_hidden: 16,
        decoder_layers: 2,
        head_hidden: 8,
        head_layers: 2,
        delta_p_scale: 0.1,
    };
    let mut field = DeformationField::new(&cfg, &mut rng);
    for mlp in [&mut field.dec_obj, &mut field.dec_hand, &mut field.head] {
        let last = mlp.layers.len() - 1;
        for v in mlp.layers[last].w.iter_mut() {
            *v = rng.gen_range(-0.02..0.02);
        }
        for v in mlp.layers[last].b.iter_mut() {
            *v = rng.gen_range(-0.02..0.02);
        }
    }
    let tensor_names = field.tensor_names();

    let n = (W * H) as usize;
    let mut chan = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let mut pass = |with_flow: bool| OutputAdjoint {
        d_rgb: chan(3 * n),
        d_alpha: chan(n),
        d_depth: chan(n),
        d_brightness: chan(n),
        d_flow: if with_flow { chan(2 * n) } else { Vec::new() },
    };
    let adj = PassAdjoints {
        composite: pass(true),
        cat: [pass(true), pass(false), pass(false)],
    };
    let d_logits = (0..N_GAUSS)
        .map(|_| {
            [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ]
        })
        .collect();

    Fixture {
        scene,
        field,
        cam: camera(2.0, 0.0),
        cam_next: camera(2.06, 0.05),
        settings: RenderSettings { sigma_cutoff: 8.0, near: 0.01 },
        tensor_names,
        adj,
        d_logits,
    }
}

pub fn dot_output(adj: &OutputAdjoint, out: &RenderOutput) -> f64 {
    let pair = |a: &[f64], v: &[f64]| -> f64 {
        a.iter().zip(v).map(|(x, y)| x * y).sum::<f64>()
    };
    let mut s = 0.0;
    if !adj.d_rgb.is_empty() {
        s += pair(&adj.d_rgb, &out.rgb);
    }
    if !adj.d_alpha.is_empty() {
        s += pair(&adj.d_alpha, &out.alpha);
    }
    if !adj.d_depth.is_empty() {
        s += pair(&adj.d_depth, &out.depth);
    }
    if !adj.d_brightness.is_empty() {
        s += pair(&adj.d_brightness, &out.brightness);
    }
    if !adj.d_flow.is_empty() {
        s += pair(&adj.d_flow, &out.flow);
    }
    s
}

/// Linear probe objective: fixed adjoints dotted with every render channel
/// of all four passes, plus the same logit-space adjoint the backward pass
/// receives, dotted with the effective logits.
pub fn objective(fx: &Fixture, scene: &GaussianScene, field: &DeformationField, stage: Stage) -> f64 {
    let ctx = FrameContext {
        cam: &fx.cam,
        cam_next: Some(&fx.cam_next),
        t: T0,
        t_next: Some(T1),
    };
    let fwd = forward_frame(scene, field, &ctx, stage, &fx.settings).unwrap();
    let mut s = dot_output(&fx.adj.composite, &fwd.composite);
    for l in 0..3 {
        s += dot_output(&fx.adj.cat[l], &fwd.cat[l]);
    }
    for (gi, g) in scene.gaussians.iter().enumerate() {
        let z = field.update_probs(&scene.bounds, g, T0);
        for k in 0..3 {
            s += fx.d_logits[gi][k] * z[k];
        }
    }
    s
}

pub fn perturbed(
    fx: &Fixture,
    p: Param,
    delta: f64,
) -> (GaussianScene, DeformationField) {
    let mut scene = fx.scene.clone();
    let mut field = fx.field.clone();
    match p {
        Param::Mu(gi, k) => scene.gaussians[gi].mu[k] += delta,
        Param::Rot(gi, k) => scene.gaussians[gi].rot[k] += delta,
        Param::LogScale(gi, k) => scene.gaussians[gi].log_scale[k] += delta,
        Param::Opacity(gi) => scene.gaussians[gi].opacity_logit += delta,
        Param::Sh(gi, k) => scene.gaussians[gi].sh[k] += delta,
        Param::Brightness(gi) => scene.gaussians[gi].brightness += delta,
        Param::CatLogit(gi, k) => scene.gaussians[gi].cat_logits[k] += delta,
        Param::Tensor(ti, idx) => {
            let name = fx.tensor_names[ti].clone();
            field.for_each_tensor_mut(&mut |n, slot| {
                if n == name {
                    slot[idx] += delta;
                }
            });
        }
    }
    (scene, field)
}

pub fn analytic_value(
    grads: &SceneGrads,
    tensors: &HashMap<String, Vec<f64>>,
    names: &[String],
    p: Param,
) -> f64 {
    match p {
        Param::Mu(gi, k) => grads.d_mu[gi][k],
        Param::Rot(gi, k) => grads.d_rot[gi][k],
        Param::LogScale(gi, k) => grads.d_log_scale[gi][k],
        Param::Opacity(gi) => grads.d_opacity_logit[gi],
        Param::Sh(gi, k) => grads.d_sh[gi * grads.sh_stride + k],
        Param::Brightness(gi) => grads.d_brightness[gi],
        Param::CatLogit(gi, k) => grads.d_cat_logits[gi][k],
        Param::Tensor(ti, idx) => tensors[&names[ti]][idx],
    }
}

pub fn tensor_map(fg: &FieldGrads) -> HashMap<String, Vec<f64>> {
    let mut map = HashMap::new();
    fg.for_each_tensor(&mut |name, data| {
        map.insert(name, data.to_vec());
    });
    map
}

pub fn case_list(fx: &Fixture) -> Vec<Param> {
    let mut cases = Vec::new();
    for gi in 0..N_GAUSS {
        for k in 0..3 {
            cases.push(Param::Mu(gi, k));
        }
        cases.push(Param::Rot(gi, gi % 4));
        cases.push(Param::Rot(gi, (gi + 2) % 4));
        cases.push(Param::LogScale(gi, gi % 3));
        cases.push(Param::Opacity(gi));
        cases.push(Param::Sh(gi, gi % 12));
        cases.push(Param::Sh(gi, (gi * 5 + 3) % 12));
        cases.push(Param::Brightness(gi));
        cases.push(Param::CatLogit(gi, gi % 3));
        cases.push(Param::CatLogit(gi, (gi + 1) % 3));
    }
    for (ti, name) in fx.tensor_names.iter().enumerate() {
        let mut len = 0;
        fx.field.for_each_tensor(&mut |n, data| {
            if &n == name {
                len = data.len();
            }
        });
        for frac in [1, 3, 6] {
            cases.push(Param::Tensor(ti, (len * frac / 7).min(len - 1)));
        }
    }
    cases
}

pub fn check_stage(stage: Stage, seed: u64) -> (usize, f64) {
    let fx = build_fixture(seed);
    let ctx = FrameContext {
        cam: &fx.cam,
        cam_next: Some(&fx.cam_next),
        t: T0,
        t_next: Some(T1),
    };
    let fwd = forward_frame(&fx.scene, &fx.field, &ctx, stage, &fx.settings).unwrap();
    let (grads, fgrads) =
        backward_frame(&fx.scene, &fx.field, &ctx, &fx.settings, &fwd, &fx.adj, &fx.d_logits)
            .unwrap();
    let tensors = tensor_map(&fgrads);

    let cases = case_list(&fx);
    let mut failures = Vec::new();
    let mut max_rel = 0.0f64;
    for &p in &cases {
        let ana = analytic_value(&grads, &tensors, &fx.tensor_names, p);
        let (sp, fp) = perturbed(&fx, p, EPS);
        let (sm, fm) = perturbed(&fx, p, -EPS);
        let fd = (objective(&fx, &sp, &fp, stage) - objective(&fx, &sm, &fm, stage)) / (2.0 * EPS);
        let err = (ana - fd).abs();
        let tol = ABS_TOL.max(REL_TOL * ana.abs().max(fd.abs()));
        if ana.abs().max(fd.abs()) > ABS_TOL {
            max_rel = max_rel.max(err / ana.abs().max(fd.abs()));
        }
        if err > tol {
            failures.push(format!("{:?}: analytic {:.9e} vs fd {:.9e}", p, ana, fd));
        }
    }
    println!(
        "{}: {} cases, max relative error {:.3e}",
        stage.name(),
        cases.len(),
        max_rel
    );
    assert!(failures.is_empty(), "gradient mismatches:\n{}", failures.join("\n"));
    (cases.len(), max_rel)
}

