//! Per-pixel attribution of a composite to labeled contributors. Walks the
//! sorted splats with exactly the compositor's blending rules, so the
//! per-category weights sum to the composite alpha and thresholding them
//! yields masks consistent with the rendered frame.

use crate::render::{RenderSettings, Splat2D, ALPHA_MAX, ALPHA_MIN, T_EPS};
use crate::types::Category;

pub struct Attribution {
    /// Accumulated blend weight per category, pixel-major.
    pub weight: [Vec<f64>; 3],
    /// Gaussian index of the heaviest contributor, -1 when none.
    pub dominant: Vec<i64>,
}

/// Attribute blend weights of `splats` (depth-sorted, plain opacities in
/// `alpha`) to each gaussian's category.
pub fn attribute(
    width: usize,
    height: usize,
    splats: &[Splat2D],
    alpha: &[f64],
    labels: &[Category],
    settings: &RenderSettings,
) -> Attribution {
    assert_eq!(alpha.len(), splats.len());
    let n = width * height;
    let mut weight = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut dominant = vec![-1i64; n];
    let mut best = vec![0.0; n];
    let mut trans = vec![1.0; n];
    let cutoff2 = settings.sigma_cutoff * settings.sigma_cutoff;
    for (s, sp) in splats.iter().enumerate() {
        let cat = labels[sp.gaussian_index as usize].index();
        for y in sp.y0..=sp.y1 {
            let dy = (y as f64 + 0.5) - sp.mean[1];
            for x in sp.x0..=sp.x1 {
                let i = y as usize * width + x as usize;
                let t = trans[i];
                if t < T_EPS {
                    continue;
                }
                let dx = (x as f64 + 0.5) - sp.mean[0];
                let q = sp.conic[0] * dx * dx + 2.0 * sp.conic[1] * dx * dy + sp.conic[2] * dy * dy;
                if q > cutoff2 {
                    continue;
                }
                let a = (alpha[s] * (-0.5 * q).exp()).min(ALPHA_MAX);
                if a < ALPHA_MIN {
                    continue;
                }
                let w = a * t;
                weight[cat][i] += w;
                if w > best[i] {
                    best[i] = w;
                    dominant[i] = sp.gaussian_index as i64;
                }
                trans[i] = t * (1.0 - a);
            }
        }
    }
    Attribution { weight, dominant }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::composite;

    fn splat(gi: u32, x: f64, y: f64, depth: f64) -> Splat2D {
        Splat2D {
            gaussian_index: gi,
            mean: [x, y],
            cov: [2.0, 0.0, 2.0],
            conic: [0.5, 0.0, 0.5],
            depth,
            rgb: [0.5; 3],
            brightness: 0.0,
            flow: [0.0; 2],
            x0: 0,
            x1: 7,
            y0: 0,
            y1: 7,
        }
    }

    #[test]
    fn weights_sum_to_composite_alpha_and_dominant_is_set() {
        let splats =
            vec![splat(0, 3.1, 3.7, 1.0), splat(1, 4.2, 3.3, 2.0), splat(2, 3.9, 4.4, 3.0)];
        let alpha = vec![0.7, 0.6, 0.5];
        let labels = vec![Category::Background, Category::Object, Category::Hand];
        let settings = RenderSettings::default();
        let out = composite(8, 8, &splats, &alpha, None, &settings).unwrap();
        let attr = attribute(8, 8, &splats, &alpha, &labels, &settings);
        for i in 0..64 {
            let sum: f64 = (0..3).map(|l| attr.weight[l][i]).sum();
            assert!((sum - out.alpha[i]).abs() < 1e-12, "pixel {i}");
            assert_eq!(attr.dominant[i] >= 0, out.alpha[i] > 0.0, "pixel {i}");
        }
    }

    #[test]
    fn front_splat_dominates_when_opaque() {
        let mut s0 = splat(5, 4.0, 4.0, 1.0);
        s0.conic = [2.0, 0.0, 2.0];
        let splats = vec![s0, splat(9, 4.0, 4.0, 2.0)];
        let alpha = vec![0.95, 0.95];
        let labels: Vec<Category> = (0..10).map(|_| Category::Object).collect();
        let attr = attribute(8, 8, &splats, &alpha, &labels, &RenderSettings::default());
        assert_eq!(attr.dominant[4 * 8 + 4], 5);
        // Far from the tight front splat the broad back one wins.
        assert_eq!(attr.dominant[0], 9);
    }
}
