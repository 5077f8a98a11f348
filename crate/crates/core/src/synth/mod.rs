//! Procedural desk scene with exact supervision. A scripted world (floor and
//! wall shell, a sliding plate, a five-sphere hand blob) is built from dense
//! ground-truth Gaussians, rendered through the production compositor, and
//! written out as a dataset: frames, category masks, forward flow, cameras,
//! an initialization point cloud and its labels. Masks and flow come from
//! the same splats as the images, so the supervision is self-consistent.

pub mod attrib;

pub use attrib::{attribute, Attribution};

use crate::error::{Error, Result};
use crate::io::{
    atomic_write, write_cameras, write_dpfl, write_ply, write_png_mask, write_png_rgb,
};
use crate::render::{
    composite, project_splat, sort_splats, RenderOutput, RenderSettings, Splat2D,
};
use crate::sh::{eval_sh, SH_C0};
use crate::types::{
    logit, AugmentedGaussian, Category, GaussianScene, PinholeCamera, SceneBounds,
};
use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

/// Ground-truth splats are nearly opaque surfaces.
const GT_OPACITY: f64 = 0.97;
/// Logit magnitude for one-hot ground-truth category assignments.
const GT_LOGIT: f64 = 6.0;
/// Neutral under the brightness activation (maps to gain 1.0), so the
/// ground-truth model reproduces the stored frames in every render mode.
const GT_BRIGHTNESS: f64 = 0.5;
/// Every pixel of every frame must reach this composite alpha, otherwise
/// the script leaves holes in the supervision.
const MIN_COVERAGE: f64 = 0.9;

/// Declarative description of the generated clip. All lengths are world
/// units, angles radians, endpoints describe the motion over the whole clip.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneScript {
    pub seed: u64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    /// Orbit around `cam_target`: radius, height above the target, swept
    /// angle over the clip and its start. Zero arc holds the camera still.
    pub cam_radius: f64,
    pub cam_height: f64,
    pub cam_arc: f64,
    pub cam_start_angle: f64,
    pub cam_target: [f64; 3],
    pub floor_y: f64,
    pub floor_x_half: f64,
    pub floor_z: [f64; 2],
    pub floor_grid: [usize; 2],
    pub wall_z: f64,
    pub wall_x_half: f64,
    pub wall_y: [f64; 2],
    pub wall_grid: [usize; 2],
    /// Plate-like rigid object: half extents, sample grid, sliding center
    /// endpoints and total spin about +y.
    pub obj_half: [f64; 3],
    pub obj_grid: [usize; 3],
    pub obj_center0: [f64; 3],
    pub obj_center1: [f64; 3],
    pub obj_spin: f64,
    /// Hand blob: spheres around a travelling cluster center, each with a
    /// sinusoidal wiggle on its own axis and frequency.
    pub hand_spheres: usize,
    pub hand_points_per_sphere: usize,
    pub hand_radius: f64,
    pub hand_spread: f64,
    pub hand_center0: [f64; 3],
    pub hand_center1: [f64; 3],
    pub hand_wiggle_amp: f64,
    /// Initialization cloud: keep fraction of ground-truth points and
    /// positional jitter as a fraction of the scene extent.
    pub init_keep: f64,
    pub init_jitter: f64,
}

impl Default for SceneScript {
    fn default() -> Self {
        SceneScript {
            seed: 7,
            frames: 60,
            width: 128,
            height: 128,
            fov_deg: 62.0,
            cam_radius: 2.3,
            cam_height: 1.0,
            cam_arc: 0.45,
            cam_start_angle: -0.22,
            cam_target: [0.0, 0.1, 0.0],
            floor_y: -0.5,
            floor_x_half: 3.9,
            floor_z: [-2.0, 1.6],
            floor_grid: [104, 56],
            wall_z: -2.0,
            wall_x_half: 3.9,
            wall_y: [-0.5, 2.2],
            wall_grid: [104, 46],
            obj_half: [0.22, 0.035, 0.16],
            obj_grid: [23, 4, 17],
            obj_center0: [0.45, -0.46, 0.35],
            obj_center1: [-0.25, -0.46, 0.05],
            obj_spin: 0.6,
            hand_spheres: 5,
            hand_points_per_sphere: 360,
            hand_radius: 0.085,
            hand_spread: 0.11,
            hand_center0: [-0.9, 0.35, 0.9],
            hand_center1: [-0.15, 0.1, 0.35],
            hand_wiggle_amp: 0.05,
            init_keep: 0.36,
            init_jitter: 0.01,
        }
    }
}

impl SceneScript {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("scene script: {m}")));
        if self.frames < 2 {
            return bad("needs at least 2 frames");
        }
        if self.width < 16 || self.height < 16 {
            return bad("raster smaller than 16x16");
        }
        if !(10.0..170.0).contains(&self.fov_deg) {
            return bad("fov outside (10, 170) degrees");
        }
        if self.cam_radius <= 0.0 {
            return bad("camera radius must be positive");
        }
        if self.floor_grid.iter().chain(&self.wall_grid).chain(&self.obj_grid).any(|&g| g < 2) {
            return bad("grids need at least 2 samples per axis");
        }
        if self.floor_z[1] <= self.floor_z[0] || self.wall_y[1] <= self.wall_y[0] {
            return bad("degenerate floor or wall span");
        }
        if self.obj_half.iter().any(|&h| h <= 0.0) {
            return bad("object half extents must be positive");
        }
        if self.hand_spheres == 0 || self.hand_points_per_sphere < 8 {
            return bad("hand needs at least one sphere of 8 points");
        }
        if self.hand_radius <= 0.0 {
            return bad("hand sphere radius must be positive");
        }
        if !(self.init_keep > 0.0 && self.init_keep <= 1.0) {
            return bad("init keep fraction outside (0, 1]");
        }
        if self.init_jitter < 0.0 {
            return bad("init jitter must be non-negative");
        }
        Ok(())
    }
}

/// Rigid piece of the scripted world a ground-truth point belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Background,
    Object,
    Hand(usize),
}

impl Component {
    pub fn category(self) -> Category {
        match self {
            Component::Background => Category::Background,
            Component::Object => Category::Object,
            Component::Hand(_) => Category::Hand,
        }
    }
}

/// One ground-truth point in its component's rest frame: background points
/// in world coordinates, object points relative to the plate pivot, hand
/// points relative to their sphere center.
struct GtPoint {
    pos: Vector3<f64>,
    color: [f64; 3],
    sigma: Vector3<f64>,
    component: Component,
}

/// The scripted world, sampleable at any time in [0, 1].
pub struct GtModel {
    script: SceneScript,
    points: Vec<GtPoint>,
}

/// Timestamp of frame `i` out of `frames`.
pub fn frame_t(i: usize, frames: usize) -> f64 {
    i as f64 / (frames - 1) as f64
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Pinhole camera at `pos` looking at `target`, +y up, square pixels from
/// a vertical field of view. Screen x goes right, screen y goes down.
pub fn look_at(
    pos: &Vector3<f64>,
    target: &Vector3<f64>,
    width: usize,
    height: usize,
    fov_deg: f64,
) -> PinholeCamera {
    let f = (target - pos).normalize();
    let mut up = Vector3::new(0.0, 1.0, 0.0);
    if f.cross(&up).norm() < 1e-9 {
        up = Vector3::new(0.0, 0.0, 1.0);
    }
    let r = f.cross(&up).normalize();
    let d = f.cross(&r);
    let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
    let t = -rot * pos;
    let mut w2c = Matrix4::identity();
    w2c.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    w2c.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    let fy = 0.5 * height as f64 / (0.5 * fov_deg.to_radians()).tan();
    PinholeCamera {
        fx: fy,
        fy,
        cx: 0.5 * width as f64,
        cy: 0.5 * height as f64,
        width: width as u32,
        height: height as u32,
        world_to_camera: w2c,
    }
}

fn clamp_color(c: [f64; 3]) -> [f64; 3] {
    [c[0].clamp(0.15, 0.85), c[1].clamp(0.15, 0.85), c[2].clamp(0.15, 0.85)]
}

impl GtModel {
    pub fn build(script: &SceneScript) -> Result<GtModel> {
        script.validate()?;
        let s = script;
        let mut rng = ChaCha20Rng::seed_from_u64(s.seed);
        let mut noise = |amp: f64| amp * (2.0 * rng.gen::<f64>() - 1.0);
        let mut points = Vec::new();

        let [fnx, fnz] = s.floor_grid;
        let fsx = 2.0 * s.floor_x_half / (fnx - 1) as f64;
        let fsz = (s.floor_z[1] - s.floor_z[0]) / (fnz - 1) as f64;
        for iz in 0..fnz {
            for ix in 0..fnx {
                let x = -s.floor_x_half + ix as f64 * fsx;
                let z = s.floor_z[0] + iz as f64 * fsz;
                let checker = (ix / 6 + iz / 6) % 2 == 0;
                let base = if checker { [0.46, 0.36, 0.27] } else { [0.55, 0.44, 0.33] };
                let color = clamp_color([
                    base[0] + noise(0.03),
                    base[1] + noise(0.03),
                    base[2] + noise(0.03),
                ]);
                points.push(GtPoint {
                    pos: Vector3::new(x, s.floor_y, z),
                    color,
                    sigma: Vector3::new(0.68 * fsx, 0.012, 0.68 * fsz),
                    component: Component::Background,
                });
            }
        }

        let [wnx, wny] = s.wall_grid;
        let wsx = 2.0 * s.wall_x_half / (wnx - 1) as f64;
        let wsy = (s.wall_y[1] - s.wall_y[0]) / (wny - 1) as f64;
        for iy in 0..wny {
            for ix in 0..wnx {
                let x = -s.wall_x_half + ix as f64 * wsx;
                let y = s.wall_y[0] + iy as f64 * wsy;
                let grad = 0.12 * (y - s.wall_y[0]) / (s.wall_y[1] - s.wall_y[0]);
                let checker = if (ix / 5 + iy / 5) % 2 == 0 { 0.02 } else { -0.02 };
                let color = clamp_color([
                    0.38 + grad + checker + noise(0.025),
                    0.42 + grad + checker + noise(0.025),
                    0.52 + grad + checker + noise(0.025),
                ]);
                points.push(GtPoint {
                    pos: Vector3::new(x, y, s.wall_z),
                    color,
                    sigma: Vector3::new(0.68 * wsx, 0.68 * wsy, 0.012),
                    component: Component::Background,
                });
            }
        }

        let [onx, ony, onz] = s.obj_grid;
        let osp = [
            2.0 * s.obj_half[0] / (onx - 1) as f64,
            2.0 * s.obj_half[1] / (ony - 1) as f64,
            2.0 * s.obj_half[2] / (onz - 1) as f64,
        ];
        for iy in 0..ony {
            for iz in 0..onz {
                for ix in 0..onx {
                    let p = Vector3::new(
                        -s.obj_half[0] + ix as f64 * osp[0],
                        -s.obj_half[1] + iy as f64 * osp[1],
                        -s.obj_half[2] + iz as f64 * osp[2],
                    );
                    let rim =
                        (p.x.abs() / s.obj_half[0]).max(p.z.abs() / s.obj_half[2]).powi(4) * 0.10;
                    let top = 0.06 * (p.y / s.obj_half[1]);
                    let color = clamp_color([
                        0.64 + top - rim + noise(0.02),
                        0.20 + 0.5 * top - 0.5 * rim + noise(0.02),
                        0.18 + noise(0.02),
                    ]);
                    points.push(GtPoint {
                        pos: p,
                        color,
                        sigma: Vector3::new(
                            (0.6 * osp[0]).max(0.008),
                            (0.6 * osp[1]).max(0.008),
                            (0.6 * osp[2]).max(0.008),
                        ),
                        component: Component::Object,
                    });
                }
            }
        }

        let k = s.hand_points_per_sphere;
        let spacing = (4.0 * std::f64::consts::PI * s.hand_radius * s.hand_radius / k as f64)
            .sqrt();
        let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
        for sp in 0..s.hand_spheres {
            let tint = [noise(0.04), noise(0.03), noise(0.03)];
            for i in 0..k {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / k as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = i as f64 * golden;
                let p = Vector3::new(r * phi.cos(), z, r * phi.sin()) * s.hand_radius;
                let color = clamp_color([
                    0.72 + tint[0] + noise(0.02),
                    0.52 + tint[1] + noise(0.02),
                    0.40 + tint[2] + noise(0.02),
                ]);
                points.push(GtPoint {
                    pos: p,
                    color,
                    sigma: Vector3::repeat((0.6 * spacing).max(0.004)),
                    component: Component::Hand(sp),
                });
            }
        }

        Ok(GtModel { script: script.clone(), points })
    }

    pub fn script(&self) -> &SceneScript {
        &self.script
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn components(&self) -> Vec<Component> {
        self.points.iter().map(|p| p.component).collect()
    }

    pub fn labels(&self) -> Vec<Category> {
        self.points.iter().map(|p| p.component.category()).collect()
    }

    fn object_pose(&self, t: f64) -> (Matrix3<f64>, Vector3<f64>, f64) {
        let s = &self.script;
        let a = s.obj_spin * t;
        let c0 = Vector3::from(s.obj_center0);
        let c1 = Vector3::from(s.obj_center1);
        (rot_y(a), c0 + (c1 - c0) * t, a)
    }

    fn hand_center(&self, sphere: usize, t: f64) -> Vector3<f64> {
        let s = &self.script;
        let h0 = Vector3::from(s.hand_center0);
        let h1 = Vector3::from(s.hand_center1);
        let ang = TAU * sphere as f64 / s.hand_spheres as f64;
        let offset =
            Vector3::new(ang.cos(), 0.3 * (2.0 * ang).sin(), ang.sin()) * s.hand_spread;
        let axis = [Vector3::x(), Vector3::y(), Vector3::z()][sphere % 3];
        let freq = 1.0 + 0.5 * sphere as f64;
        let wiggle = s.hand_wiggle_amp * (TAU * freq * t + 1.3 * sphere as f64).sin();
        h0 + (h1 - h0) * t + offset + axis * wiggle
    }

    /// Where a world point of `comp` at time `t0` sits at time `t1`.
    pub fn move_point(
        &self,
        comp: Component,
        p: &Vector3<f64>,
        t0: f64,
        t1: f64,
    ) -> Vector3<f64> {
        match comp {
            Component::Background => *p,
            Component::Object => {
                let (r0, c0, _) = self.object_pose(t0);
                let (r1, c1, _) = self.object_pose(t1);
                r1 * (r0.transpose() * (p - c0)) + c1
            }
            Component::Hand(k) => p + (self.hand_center(k, t1) - self.hand_center(k, t0)),
        }
    }

    pub fn camera_at(&self, t: f64) -> PinholeCamera {
        let s = &self.script;
        let ang = s.cam_start_angle + s.cam_arc * t;
        let target = Vector3::from(s.cam_target);
        let pos = target
            + Vector3::new(s.cam_radius * ang.sin(), s.cam_height, s.cam_radius * ang.cos());
        look_at(&pos, &target, s.width, s.height, s.fov_deg)
    }

    /// Pose the world at time `t` as a renderable Gaussian set (degree-0
    /// color, near-opaque, one-hot category logits).
    pub fn scene_at(&self, t: f64) -> GaussianScene {
        let (r_obj, c_obj, ang) = self.object_pose(t);
        let q_obj = [(0.5 * ang).cos(), 0.0, (0.5 * ang).sin(), 0.0];
        let opacity_logit = logit(GT_OPACITY);
        let gaussians: Vec<AugmentedGaussian> = self
            .points
            .iter()
            .map(|pt| {
                let (mu, rot) = match pt.component {
                    Component::Background => (pt.pos, [1.0, 0.0, 0.0, 0.0]),
                    Component::Object => (r_obj * pt.pos + c_obj, q_obj),
                    Component::Hand(k) => {
                        (pt.pos + self.hand_center(k, t), [1.0, 0.0, 0.0, 0.0])
                    }
                };
                let mut cat_logits = [-GT_LOGIT; 3];
                cat_logits[pt.component.category().index()] = GT_LOGIT;
                AugmentedGaussian {
                    mu,
                    rot,
                    log_scale: pt.sigma.map(f64::ln),
                    opacity_logit,
                    sh: vec![
                        (pt.color[0] - 0.5) / SH_C0,
                        (pt.color[1] - 0.5) / SH_C0,
                        (pt.color[2] - 0.5) / SH_C0,
                    ],
                    brightness: GT_BRIGHTNESS,
                    cat_logits,
                }
            })
            .collect();
        let bounds = SceneBounds::from_points(gaussians.iter().map(|g| &g.mu))
            .expect("non-empty by construction");
        GaussianScene { gaussians, sh_degree: 0, bounds }
    }
}

/// Project a static scene into sorted splats plus per-splat opacities.
pub fn splat_static(
    scene: &GaussianScene,
    cam: &PinholeCamera,
    settings: &RenderSettings,
) -> (Vec<Splat2D>, Vec<f64>) {
    let center = cam.center();
    let mut splats = Vec::new();
    for (gi, g) in scene.gaussians.iter().enumerate() {
        let Some(geom) = project_splat(cam, &g.mu, &g.rot, &g.log_scale, settings) else {
            continue;
        };
        let dir = (g.mu - center).normalize();
        let rgb = eval_sh(scene.sh_degree, &g.sh, &dir);
        splats.push(Splat2D {
            gaussian_index: gi as u32,
            mean: geom.mean,
            cov: geom.cov,
            conic: geom.conic,
            depth: geom.depth,
            rgb,
            brightness: g.brightness,
            flow: [0.0; 2],
            x0: geom.x0,
            x1: geom.x1,
            y0: geom.y0,
            y1: geom.y1,
        });
    }
    sort_splats(&mut splats);
    let alpha = splats.iter().map(|s| scene.gaussians[s.gaussian_index as usize].opacity()).collect();
    (splats, alpha)
}

/// Render a static scene with no deformation or category weighting.
pub fn render_static(
    scene: &GaussianScene,
    cam: &PinholeCamera,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    let (splats, alpha) = splat_static(scene, cam, settings);
    composite(cam.width as usize, cam.height as usize, &splats, &alpha, None, settings)
}

/// Forward flow from the rendered surface: unproject each pixel's mean
/// depth, move the point with its dominant contributor's component, project
/// into the next camera. Mirrors the validity rules of the camera-flow
/// formula so static content cancels exactly.
fn flow_field(
    model: &GtModel,
    out: &RenderOutput,
    attr: &Attribution,
    comps: &[Component],
    cam0: &PinholeCamera,
    cam1: &PinholeCamera,
    t0: f64,
    t1: f64,
    near: f64,
) -> Vec<f64> {
    let (w, h) = (out.width, out.height);
    let mut flow = vec![0.0; 2 * w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let a = out.alpha[i];
            if a < 0.5 || attr.dominant[i] < 0 {
                continue;
            }
            let depth = out.depth[i] / a;
            if !(depth > near) {
                continue;
            }
            let (u0, v0) = (x as f64 + 0.5, y as f64 + 0.5);
            let p = cam0.unproject(u0, v0, depth);
            let comp = comps[attr.dominant[i] as usize];
            let p1 = model.move_point(comp, &p, t0, t1);
            let q1 = cam1.to_camera(&p1);
            if !(q1.z > near) {
                continue;
            }
            let (u1, v1) = cam1.project_cam(&q1);
            flow[2 * i] = u1 - u0;
            flow[2 * i + 1] = v1 - v0;
        }
    }
    flow
}

/// Generate the full dataset for `script` under `dir`.
pub fn generate(script: &SceneScript, dir: &Path) -> Result<()> {
    let model = GtModel::build(script)?;
    let settings = RenderSettings::default();
    let (w, h, f) = (script.width, script.height, script.frames);
    let cams: Vec<PinholeCamera> = (0..f).map(|i| model.camera_at(frame_t(i, f))).collect();
    let labels = model.labels();
    let comps = model.components();

    for i in 0..f {
        let t = frame_t(i, f);
        let scene = model.scene_at(t);
        let (splats, alpha) = splat_static(&scene, &cams[i], &settings);
        for sp in &splats {
            let area = (sp.x1 - sp.x0 + 1) as usize * (sp.y1 - sp.y0 + 1) as usize;
            if area * 4 > w * h {
                return Err(Error::invalid(format!(
                    "ground-truth splat {} smears over frame {i} (box {}x{}); it sits too \
                     close to the camera, shrink the scene or widen the orbit",
                    sp.gaussian_index,
                    sp.x1 - sp.x0 + 1,
                    sp.y1 - sp.y0 + 1
                )));
            }
        }
        let out = composite(w, h, &splats, &alpha, None, &settings)?;
        let min_alpha = out.alpha.iter().copied().fold(f64::INFINITY, f64::min);
        if min_alpha < MIN_COVERAGE {
            return Err(Error::invalid(format!(
                "scene script leaves frame {i} uncovered: min composite alpha {min_alpha:.3}"
            )));
        }
        let attr = attribute(w, h, &splats, &alpha, &labels, &settings);
        let mask_obj: Vec<f64> =
            attr.weight[1].iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
        let mask_hand: Vec<f64> =
            attr.weight[2].iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
        let flow = if i + 1 < f {
            flow_field(
                &model,
                &out,
                &attr,
                &comps,
                &cams[i],
                &cams[i + 1],
                t,
                frame_t(i + 1, f),
                settings.near,
            )
        } else {
            vec![0.0; 2 * w * h]
        };
        write_png_rgb(&dir.join(format!("frames/{i:05}.png")), w, h, &out.rgb)?;
        write_png_mask(&dir.join(format!("masks_obj/{i:05}.png")), w, h, &mask_obj)?;
        write_png_mask(&dir.join(format!("masks_hand/{i:05}.png")), w, h, &mask_hand)?;
        write_dpfl(&dir.join(format!("flow/{i:05}.dpfl")), w, h, &flow)?;
    }
    write_cameras(&dir.join("cameras.json"), &cams)?;

    // Initialization cloud: subsample the posed t=0 world with jitter.
    let scene0 = model.scene_at(0.0);
    let extent = (scene0.bounds.max - scene0.bounds.min).norm();
    let mut rng = ChaCha20Rng::seed_from_u64(script.seed ^ 0x9E37_79B9_7F4A_7C15);
    let kept: Vec<usize> =
        (0..model.points.len()).filter(|_| rng.gen::<f64>() < script.init_keep).collect();
    if kept.len() < 16 {
        return Err(Error::invalid("init keep fraction leaves fewer than 16 points"));
    }
    let amp = script.init_jitter * extent;
    let mut init_points = Vec::with_capacity(kept.len());
    let mut init_colors = Vec::with_capacity(kept.len());
    let mut label_lines = String::new();
    for &i in &kept {
        let jitter =
            Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()).map(|v| {
                amp * (2.0 * v - 1.0)
            });
        init_points.push(scene0.gaussians[i].mu + jitter);
        init_colors.push(model.points[i].color);
        label_lines.push_str(&format!("{}\n", labels[i].index()));
    }
    write_ply(&dir.join("init.ply"), &init_points, &init_colors)?;
    atomic_write(&dir.join("labels.txt"), label_lines.as_bytes())?;
    Ok(())
}

/// Default script with all motion removed: static world, orbiting camera.
pub fn camera_only_script() -> SceneScript {
    let mut s = SceneScript::default();
    s.obj_center1 = s.obj_center0;
    s.obj_spin = 0.0;
    s.hand_center1 = s.hand_center0;
    s.hand_wiggle_amp = 0.0;
    s
}

/// Default script with the camera held still and only the object sliding.
pub fn object_translation_script() -> SceneScript {
    let mut s = SceneScript::default();
    s.cam_arc = 0.0;
    s.obj_spin = 0.0;
    s.hand_center1 = s.hand_center0;
    s.hand_wiggle_amp = 0.0;
    s
}
