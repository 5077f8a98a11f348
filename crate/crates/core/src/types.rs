use crate::error::{Error, Result};
use nalgebra::{Matrix3, Matrix4, Vector3};

pub const CATEGORY_COUNT: usize = 3;

/// Scene categories, in fixed order. The order doubles as the tie-break
/// priority when hardening probabilities into labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    Background = 0,
    Object = 1,
    Hand = 2,
}

impl Category {
    pub const ALL: [Category; CATEGORY_COUNT] = [Category::Background, Category::Object, Category::Hand];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Category> {
        match i {
            0 => Some(Category::Background),
            1 => Some(Category::Object),
            2 => Some(Category::Hand),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Background => "bg",
            Category::Object => "obj",
            Category::Hand => "hand",
        }
    }
}

/// Point on the 3-simplex: one probability per category.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategoryProbs(pub [f64; CATEGORY_COUNT]);

impl CategoryProbs {
    /// Numerically stable softmax.
    pub fn from_logits(logits: &[f64; CATEGORY_COUNT]) -> CategoryProbs {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut e = [0.0; CATEGORY_COUNT];
        let mut sum = 0.0;
        for i in 0..CATEGORY_COUNT {
            e[i] = (logits[i] - m).exp();
            sum += e[i];
        }
        for v in &mut e {
            *v /= sum;
        }
        CategoryProbs(e)
    }

    pub fn get(&self, c: Category) -> f64 {
        self.0[c.index()]
    }

    /// Hard label: argmax with ties resolved in favor of the earlier
    /// category (background over object over hand).
    pub fn argmax(&self) -> Category {
        let mut best = Category::Background;
        let mut best_p = self.0[0];
        for c in [Category::Object, Category::Hand] {
            if self.0[c.index()] > best_p {
                best_p = self.0[c.index()];
                best = c;
            }
        }
        best
    }

    /// Shannon entropy −Σ p ln p (natural log), with 0·ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
            .sum()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One scene element: a 3D Gaussian augmented with appearance, brightness
/// and category attributes. `rot` is a quaternion in (w, x, y, z) order and
/// is normalized on use, not on store. `sh` holds 3·(deg+1)² coefficients,
/// coefficient-major: [k0.r, k0.g, k0.b, k1.r, ...]. `brightness` is an
/// unconstrained scalar; the rasterized brightness map is clamped before
/// activation, not the attribute itself.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedGaussian {
    pub mu: Vector3<f64>,
    pub rot: [f64; 4],
    pub log_scale: Vector3<f64>,
    pub opacity_logit: f64,
    pub sh: Vec<f64>,
    pub brightness: f64,
    pub cat_logits: [f64; CATEGORY_COUNT],
}

impl AugmentedGaussian {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn category_probs(&self) -> CategoryProbs {
        CategoryProbs::from_logits(&self.cat_logits)
    }

    pub fn hard_label(&self) -> Category {
        self.category_probs().argmax()
    }
}

/// Axis-aligned box used to map positions into the unit cube for the
/// deformation encoder. Queries outside the box clamp to its faces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneBounds {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl SceneBounds {
    pub fn from_points<'a>(points: impl Iterator<Item = &'a Vector3<f64>>) -> Result<SceneBounds> {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        let mut n = 0usize;
        for p in points {
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::invalid("cannot build scene bounds from zero points"));
        }
        // Pad by 5% of the diagonal so points sit strictly inside; keeps the
        // normalized coordinates away from the clamp region at init.
        let diag = (max - min).norm().max(1e-6);
        let pad = Vector3::repeat(0.05 * diag);
        Ok(SceneBounds { min: min - pad, max: max + pad })
    }

    /// Map a world position into [0,1]^3, clamped.
    pub fn normalize(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for k in 0..3 {
            let span = (self.max[k] - self.min[k]).max(1e-12);
            out[k] = ((p[k] - self.min[k]) / span).clamp(0.0, 1.0);
        }
        out
    }
}

/// The full Gaussian set plus the static metadata needed to pose it.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianScene {
    pub gaussians: Vec<AugmentedGaussian>,
    pub sh_degree: u32,
    pub bounds: SceneBounds,
}

impl GaussianScene {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn sh_coeff_count(&self) -> usize {
        let n = (self.sh_degree + 1) * (self.sh_degree + 1);
        3 * n as usize
    }
}

/// Pinhole camera with a rigid world-to-camera transform (row-major when
/// serialized). Camera looks down +z; points with z <= near are culled.
#[derive(Clone, Debug, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: Matrix4<f64>,
}

impl PinholeCamera {
    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p_world + self.translation()
    }

    /// Project a camera-space point to pixel coordinates.
    pub fn project_cam(&self, p_cam: &Vector3<f64>) -> (f64, f64) {
        (
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }

    /// Invert the projection: pixel plus camera-space depth to world space.
    pub fn unproject(&self, px: f64, py: f64, depth: f64) -> Vector3<f64> {
        let p_cam = Vector3::new(
            (px - self.cx) / self.fx * depth,
            (py - self.cy) / self.fy * depth,
            depth,
        );
        self.rotation().transpose() * (p_cam - self.translation())
    }

    /// World-space camera center.
    pub fn center(&self) -> Vector3<f64> {
        -self.rotation().transpose() * self.translation()
    }
}

pub const INIT_OPACITY: f64 = 0.1;
pub const INIT_BRIGHTNESS: f64 = 0.25;

/// Build the initial Gaussian set from a point cloud. Every point becomes an
/// isotropic Gaussian: scale from the mean distance to its 3 nearest
/// neighbors, opacity 0.1, SH degree-0 color matching the point color, and
/// category logits shared from `prior`.
pub fn init_from_pointcloud(
    points: &[Vector3<f64>],
    colors: &[[f64; 3]],
    prior: &[f64; CATEGORY_COUNT],
    sh_degree: u32,
) -> Result<GaussianScene> {
    if points.is_empty() {
        return Err(Error::invalid("point cloud is empty"));
    }
    if points.len() != colors.len() {
        return Err(Error::invalid(format!(
            "point/color count mismatch: {} vs {}",
            points.len(),
            colors.len()
        )));
    }
    if sh_degree > 3 {
        return Err(Error::invalid(format!("sh degree {} exceeds 3", sh_degree)));
    }
    let sum: f64 = prior.iter().sum();
    if prior.iter().any(|&p| p <= 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("prior {:?} is not a simplex point", prior)));
    }
    let cat_logits = [prior[0].ln(), prior[1].ln(), prior[2].ln()];

    let bounds = SceneBounds::from_points(points.iter())?;
    let fallback = 0.1 * (bounds.max - bounds.min).norm() / 3.0_f64.sqrt();
    let scales = mean_knn_distance(points, 3, fallback);

    let n_coeff = 3 * ((sh_degree + 1) * (sh_degree + 1)) as usize;
    let opacity_logit = logit(INIT_OPACITY);
    let gaussians = points
        .iter()
        .zip(colors)
        .zip(&scales)
        .map(|((p, c), &s)| {
            let mut sh = vec![0.0; n_coeff];
            for ch in 0..3 {
                sh[ch] = (c[ch] - 0.5) / crate::sh::SH_C0;
            }
            AugmentedGaussian {
                mu: *p,
                rot: [1.0, 0.0, 0.0, 0.0],
                log_scale: Vector3::repeat(s.max(1e-6).ln()),
                opacity_logit,
                sh,
                brightness: INIT_BRIGHTNESS,
                cat_logits,
            }
        })
        .collect();

    Ok(GaussianScene { gaussians, sh_degree, bounds })
}

/// Mean distance to the k nearest neighbors, per point. Brute force; fine
/// for the scene sizes this library targets.
fn mean_knn_distance(points: &[Vector3<f64>], k: usize, fallback: f64) -> Vec<f64> {
    let n = points.len();
    if n <= 1 {
        return vec![fallback; n];
    }
    let k = k.min(n - 1);
    use rayon::prelude::*;
    points
        .par_iter()
        .map(|p| {
            // Keep the k smallest squared distances in a tiny insertion heap.
            let mut best = [f64::INFINITY; 8];
            for q in points {
                let d2 = (p - q).norm_squared();
                if d2 == 0.0 {
                    continue;
                }
                if d2 < best[k - 1] {
                    let mut i = k - 1;
                    while i > 0 && best[i - 1] > d2 {
                        best[i] = best[i - 1];
                        i -= 1;
                    }
                    best[i] = d2;
                }
            }
            let mut sum = 0.0;
            let mut cnt = 0usize;
            for &b in best.iter().take(k) {
                if b.is_finite() {
                    sum += b.sqrt();
                    cnt += 1;
                }
            }
            if cnt == 0 {
                fallback
            } else {
                sum / cnt as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softmax_matches_reference() {
        let p = CategoryProbs::from_logits(&[10.0, 0.0, 0.0]);
        assert_relative_eq!(p.0[0], 0.9999092083843409, max_relative = 1e-12);
        assert_relative_eq!(p.0[1], 4.539580782951091e-5, max_relative = 1e-9);
        assert_relative_eq!(p.0[2], 4.539580782951091e-5, max_relative = 1e-9);
        let s: f64 = p.0.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let a = CategoryProbs::from_logits(&[1.0, 2.0, 3.0]);
        let b = CategoryProbs::from_logits(&[1001.0, 1002.0, 1003.0]);
        for i in 0..3 {
            assert_relative_eq!(a.0[i], b.0[i], max_relative = 1e-12);
            assert!(b.0[i].is_finite());
        }
    }

    #[test]
    fn argmax_tie_breaks_toward_background_then_object() {
        let tie_all = CategoryProbs([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(tie_all.argmax(), Category::Background);
        let tie_oh = CategoryProbs([0.2, 0.4, 0.4]);
        assert_eq!(tie_oh.argmax(), Category::Object);
        let hand = CategoryProbs([0.2, 0.3, 0.5]);
        assert_eq!(hand.argmax(), Category::Hand);
    }

    #[test]
    fn entropy_of_uniform_is_ln3() {
        let u = CategoryProbs([1.0 / 3.0; 3]);
        assert_relative_eq!(u.entropy(), 3.0_f64.ln(), max_relative = 1e-12);
        let onehot = CategoryProbs([1.0, 0.0, 0.0]);
        assert_eq!(onehot.entropy(), 0.0);
    }

    #[test]
    fn sigmoid_logit_roundtrip() {
        for p in [0.01, 0.1, 0.5, 0.9, 0.99] {
            assert_relative_eq!(sigmoid(logit(p)), p, max_relative = 1e-12);
        }
        assert_relative_eq!(logit(0.1), -2.1972245773362196, max_relative = 1e-12);
        // Stable far into both tails.
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn init_sets_documented_defaults() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let cols = vec![[0.5, 0.5, 0.5]; 4];
        let scene = init_from_pointcloud(&pts, &cols, &[0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!(scene.len(), 4);
        let g = &scene.gaussians[0];
        assert_relative_eq!(g.opacity(), 0.1, max_relative = 1e-12);
        assert_eq!(g.brightness, 0.25);
        // Prior round-trips through the softmax.
        let p = g.category_probs();
        assert_relative_eq!(p.0[0], 0.8, max_relative = 1e-12);
        assert_relative_eq!(p.0[1], 0.1, max_relative = 1e-12);
        assert_relative_eq!(p.0[2], 0.1, max_relative = 1e-12);
        assert_eq!(g.hard_label(), Category::Background);
        // Neighbors of the origin point sit at distance 1.
        assert_relative_eq!(g.log_scale[0], 0.0, epsilon = 1e-12);
        assert_eq!(g.sh.len(), 12);
        // Degree-0 color of 0.5 means a zero DC coefficient.
        assert_relative_eq!(g.sh[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn init_rejects_bad_input() {
        let pts = vec![Vector3::new(0.0, 0.0, 0.0)];
        let cols = vec![[0.0, 0.0, 0.0]];
        assert!(init_from_pointcloud(&[], &[], &[0.8, 0.1, 0.1], 1).is_err());
        assert!(init_from_pointcloud(&pts, &cols, &[0.8, 0.3, 0.1], 1).is_err());
        assert!(init_from_pointcloud(&pts, &cols, &[1.0, 0.0, 0.0], 1).is_err());
        assert!(init_from_pointcloud(&pts, &cols, &[0.8, 0.1, 0.1], 4).is_err());
    }

    #[test]
    fn camera_project_unproject_roundtrip() {
        let cam = PinholeCamera {
            fx: 100.0,
            fy: 110.0,
            cx: 64.0,
            cy: 60.0,
            width: 128,
            height: 120,
            world_to_camera: Matrix4::new(
                0.0, 1.0, 0.0, 0.1, //
                -1.0, 0.0, 0.0, 0.2, //
                0.0, 0.0, 1.0, 1.5, //
                0.0, 0.0, 0.0, 1.0,
            ),
        };
        let w = Vector3::new(0.3, -0.2, 0.9);
        let c = cam.to_camera(&w);
        let (px, py) = cam.project_cam(&c);
        let back = cam.unproject(px, py, c.z);
        assert_relative_eq!(back, w, epsilon = 1e-12);
        let center = cam.center();
        assert_relative_eq!(cam.to_camera(&center).norm(), 0.0, epsilon = 1e-12);
    }
}
