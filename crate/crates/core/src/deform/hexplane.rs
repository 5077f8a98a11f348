//! Six-plane spatio-temporal feature grid. Coordinates live in the unit
//! 4-cube (x, y, z, t). Each level keeps one plane per coordinate pair;
//! features fuse by elementwise products of complementary pairs
//! (xy*zt, xz*yt, yz*xt) concatenated across levels.

use nalgebra::DMatrix;
use rand::Rng;

/// Coordinate-axis pairs per plane, in storage order.
pub const PLANE_AXES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];
/// Complementary plane of each spatial plane (xy<->zt, xz<->yt, yz<->xt).
pub const COMPLEMENT: [usize; 3] = [5, 4, 3];
pub const PLANE_NAMES: [&str; 6] = ["xy", "xz", "yz", "xt", "yt", "zt"];

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneLevel {
    pub res: usize,
    pub channels: usize,
    /// Each plane is res*res*channels, laid out ((i * res) + j) * channels + c
    /// where i indexes the first axis of the pair.
    pub planes: [Vec<f64>; 6],
}

#[derive(Clone, Debug, PartialEq)]
pub struct HexPlane {
    pub levels: Vec<PlaneLevel>,
}

#[derive(Clone, Debug)]
pub struct HexPlaneGrads {
    pub levels: Vec<[Vec<f64>; 6]>,
}

impl HexPlane {
    /// Spatial planes start as small noise, temporal planes near one, so
    /// the fused products neither vanish nor dominate at init.
    pub fn new(resolutions: &[usize], channels: usize, rng: &mut impl Rng) -> HexPlane {
        let levels = resolutions
            .iter()
            .map(|&res| {
                let n = res * res * channels;
                let planes = std::array::from_fn(|p| {
                    let temporal = PLANE_AXES[p].1 == 3;
                    (0..n)
                        .map(|_| {
                            if temporal {
                                1.0 + rng.gen_range(-0.01..0.01)
                            } else {
                                rng.gen_range(-0.1..0.1)
                            }
                        })
                        .collect()
                });
                PlaneLevel { res, channels, planes }
            })
            .collect();
        HexPlane { levels }
    }

    pub fn feature_dim(&self) -> usize {
        self.levels.iter().map(|l| 3 * l.channels).sum()
    }

    /// Encode a batch of unit-cube coordinates into (N x feature_dim).
    pub fn encode_batch(&self, coords: &[[f64; 4]]) -> DMatrix<f64> {
        let dim = self.feature_dim();
        let mut out = DMatrix::zeros(coords.len(), dim);
        let mut vals = vec![0.0; self.max_channels()];
        let mut vals_b = vec![0.0; self.max_channels()];
        for (row, c) in coords.iter().enumerate() {
            let mut off = 0;
            for level in &self.levels {
                for pair in 0..3 {
                    let (pa, pb) = (pair, COMPLEMENT[pair]);
                    sample_plane(level, pa, c, &mut vals);
                    sample_plane(level, pb, c, &mut vals_b);
                    for ch in 0..level.channels {
                        out[(row, off + ch)] = vals[ch] * vals_b[ch];
                    }
                    off += level.channels;
                }
            }
        }
        out
    }

    /// Backward of `encode_batch`: coordinate adjoints per sample plus
    /// plane-value adjoints.
    pub fn encode_batch_grad(
        &self,
        coords: &[[f64; 4]],
        d_feat: &DMatrix<f64>,
    ) -> (Vec<[f64; 4]>, HexPlaneGrads) {
        assert_eq!(d_feat.nrows(), coords.len());
        assert_eq!(d_feat.ncols(), self.feature_dim());
        let mut d_coords = vec![[0.0; 4]; coords.len()];
        let mut grads = HexPlaneGrads {
            levels: self
                .levels
                .iter()
                .map(|l| std::array::from_fn(|_| vec![0.0; l.res * l.res * l.channels]))
                .collect(),
        };
        let mut vals = vec![0.0; self.max_channels()];
        let mut vals_b = vec![0.0; self.max_channels()];
        let mut d_vals = vec![0.0; self.max_channels()];
        let mut d_vals_b = vec![0.0; self.max_channels()];
        for (row, c) in coords.iter().enumerate() {
            let mut off = 0;
            for (li, level) in self.levels.iter().enumerate() {
                for pair in 0..3 {
                    let (pa, pb) = (pair, COMPLEMENT[pair]);
                    sample_plane(level, pa, c, &mut vals);
                    sample_plane(level, pb, c, &mut vals_b);
                    for ch in 0..level.channels {
                        let d = d_feat[(row, off + ch)];
                        d_vals[ch] = d * vals_b[ch];
                        d_vals_b[ch] = d * vals[ch];
                    }
                    sample_plane_grad(level, pa, c, &d_vals, &mut grads.levels[li][pa], &mut d_coords[row]);
                    sample_plane_grad(level, pb, c, &d_vals_b, &mut grads.levels[li][pb], &mut d_coords[row]);
                    off += level.channels;
                }
            }
        }
        (d_coords, grads)
    }

    fn max_channels(&self) -> usize {
        self.levels.iter().map(|l| l.channels).max().unwrap_or(0)
    }

    pub fn for_each_tensor(&self, f: &mut impl FnMut(String, &[f64])) {
        for (li, level) in self.levels.iter().enumerate() {
            for (p, name) in PLANE_NAMES.iter().enumerate() {
                f(format!("planes.l{}.{}", li, name), &level.planes[p]);
            }
        }
    }

    pub fn for_each_tensor_mut(&mut self, f: &mut impl FnMut(String, &mut [f64])) {
        for (li, level) in self.levels.iter_mut().enumerate() {
            for (p, name) in PLANE_NAMES.iter().enumerate() {
                f(format!("planes.l{}.{}", li, name), &mut level.planes[p]);
            }
        }
    }
}

impl HexPlaneGrads {
    pub fn for_each_tensor(&self, f: &mut impl FnMut(String, &[f64])) {
        for (li, level) in self.levels.iter().enumerate() {
            for (p, name) in PLANE_NAMES.iter().enumerate() {
                f(format!("planes.l{}.{}", li, name), &level[p]);
            }
        }
    }

    pub fn add_assign(&mut self, other: &HexPlaneGrads) {
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            for p in 0..6 {
                for (x, y) in a[p].iter_mut().zip(&b[p]) {
                    *x += y;
                }
            }
        }
    }
}

struct Corner {
    i0: usize,
    j0: usize,
    fu: f64,
    fv: f64,
}

fn locate(level: &PlaneLevel, plane: usize, c: &[f64; 4]) -> Corner {
    let (au, av) = PLANE_AXES[plane];
    let last = (level.res - 2) as f64;
    let gu = c[au].clamp(0.0, 1.0) * (level.res - 1) as f64;
    let gv = c[av].clamp(0.0, 1.0) * (level.res - 1) as f64;
    let i0 = gu.floor().min(last).max(0.0);
    let j0 = gv.floor().min(last).max(0.0);
    Corner { i0: i0 as usize, j0: j0 as usize, fu: gu - i0, fv: gv - j0 }
}

fn sample_plane(level: &PlaneLevel, plane: usize, c: &[f64; 4], out: &mut [f64]) {
    let k = locate(level, plane, c);
    let ch = level.channels;
    let data = &level.planes[plane];
    let base00 = (k.i0 * level.res + k.j0) * ch;
    let base10 = ((k.i0 + 1) * level.res + k.j0) * ch;
    let (w00, w10) = ((1.0 - k.fu) * (1.0 - k.fv), k.fu * (1.0 - k.fv));
    let (w01, w11) = ((1.0 - k.fu) * k.fv, k.fu * k.fv);
    for c in 0..ch {
        out[c] = w00 * data[base00 + c]
            + w10 * data[base10 + c]
            + w01 * data[base00 + ch + c]
            + w11 * data[base10 + ch + c];
    }
}

fn sample_plane_grad(
    level: &PlaneLevel,
    plane: usize,
    c: &[f64; 4],
    d_vals: &[f64],
    d_plane: &mut [f64],
    d_coord: &mut [f64; 4],
) {
    let k = locate(level, plane, c);
    let (au, av) = PLANE_AXES[plane];
    let ch = level.channels;
    let data = &level.planes[plane];
    let base00 = (k.i0 * level.res + k.j0) * ch;
    let base10 = ((k.i0 + 1) * level.res + k.j0) * ch;
    let (w00, w10) = ((1.0 - k.fu) * (1.0 - k.fv), k.fu * (1.0 - k.fv));
    let (w01, w11) = ((1.0 - k.fu) * k.fv, k.fu * k.fv);
    let scale = (level.res - 1) as f64;
    let mut d_fu = 0.0;
    let mut d_fv = 0.0;
    for cc in 0..ch {
        let d = d_vals[cc];
        d_plane[base00 + cc] += w00 * d;
        d_plane[base10 + cc] += w10 * d;
        d_plane[base00 + ch + cc] += w01 * d;
        d_plane[base10 + ch + cc] += w11 * d;
        let v00 = data[base00 + cc];
        let v10 = data[base10 + cc];
        let v01 = data[base00 + ch + cc];
        let v11 = data[base10 + ch + cc];
        d_fu += d * ((v10 - v00) * (1.0 - k.fv) + (v11 - v01) * k.fv);
        d_fv += d * ((v01 - v00) * (1.0 - k.fu) + (v11 - v10) * k.fu);
    }
    // Clamp gate: no gradient once the coordinate leaves the unit range.
    if c[au] > 0.0 && c[au] < 1.0 {
        d_coord[au] += d_fu * scale;
    }
    if c[av] > 0.0 && c[av] < 1.0 {
        d_coord[av] += d_fv * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny(rng_seed: u64) -> HexPlane {
        let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
        HexPlane::new(&[4, 8], 2, &mut rng)
    }

    #[test]
    fn feature_dim_counts_levels_and_pairs() {
        let h = tiny(0);
        assert_eq!(h.feature_dim(), 2 * 3 * 2);
    }

    #[test]
    fn constant_planes_encode_constant_product() {
        let mut h = tiny(1);
        for level in &mut h.levels {
            for (p, plane) in level.planes.iter_mut().enumerate() {
                let v = 0.5 + 0.25 * p as f64;
                plane.iter_mut().for_each(|x| *x = v);
            }
        }
        let f = h.encode_batch(&[[0.3, 0.7, 0.2, 0.9]]);
        // Pair products: xy*zt, xz*yt, yz*xt.
        let expect = [
            (0.5) * (0.5 + 0.25 * 5.0),
            (0.75) * (0.5 + 0.25 * 4.0),
            (1.0) * (0.5 + 0.25 * 3.0),
        ];
        for level in 0..2 {
            for pair in 0..3 {
                for ch in 0..2 {
                    assert_relative_eq!(
                        f[(0, level * 6 + pair * 2 + ch)],
                        expect[pair],
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn bilinear_interpolates_between_grid_nodes() {
        let mut h = HexPlane::new(&[3], 1, &mut ChaCha20Rng::seed_from_u64(2));
        // Make every plane constant 1 except the xy plane, which ramps
        // along x: value = i (grid row).
        for (p, plane) in h.levels[0].planes.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    plane[i * 3 + j] = if p == 0 { i as f64 } else { 1.0 };
                }
            }
        }
        // x = 0.25 on a res-3 grid is grid position 0.5: halfway between
        // rows 0 and 1.
        let f = h.encode_batch(&[[0.25, 0.1, 0.8, 0.3]]);
        assert_relative_eq!(f[(0, 0)], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = tiny(5);
        let coords = vec![[0.31, 0.62, 0.17, 0.54], [0.85, 0.12, 0.73, 0.29]];
        let d_feat = DMatrix::from_fn(2, h.feature_dim(), |r, c| 0.1 + 0.05 * r as f64 + 0.01 * c as f64);
        let (d_coords, d_planes) = h.encode_batch_grad(&coords, &d_feat);

        let probe = |h: &HexPlane, coords: &[[f64; 4]]| -> f64 {
            let f = h.encode_batch(coords);
            f.zip_fold(&d_feat, 0.0, |acc, a, b| acc + a * b)
        };
        let eps = 1e-6;
        for s in 0..2 {
            for axis in 0..4 {
                let mut hi = coords.clone();
                let mut lo = coords.clone();
                hi[s][axis] += eps;
                lo[s][axis] -= eps;
                let fd = (probe(&h, &hi) - probe(&h, &lo)) / (2.0 * eps);
                assert_relative_eq!(d_coords[s][axis], fd, max_relative = 1e-5, epsilon = 1e-9);
            }
        }
        // Probe a few plane parameters, including one actually touched.
        let mut dense_slot = None;
        'outer: for (li, lg) in d_planes.levels.iter().enumerate() {
            for p in 0..6 {
                for (i, &g) in lg[p].iter().enumerate() {
                    if g.abs() > 1e-6 {
                        dense_slot = Some((li, p, i, g));
                        break 'outer;
                    }
                }
            }
        }
        let (li, p, i, g) = dense_slot.expect("some plane received gradient");
        let mut hi = h.clone();
        hi.levels[li].planes[p][i] += eps;
        let mut lo = h.clone();
        lo.levels[li].planes[p][i] -= eps;
        let fd = (probe(&hi, &coords) - probe(&lo, &coords)) / (2.0 * eps);
        assert_relative_eq!(g, fd, max_relative = 1e-5, epsilon = 1e-9);
    }

    #[test]
    fn tensor_walk_is_stable_and_named() {
        let h = tiny(9);
        let mut names = Vec::new();
        h.for_each_tensor(&mut |n, d| {
            names.push((n, d.len()));
        });
        assert_eq!(names.len(), 12);
        assert_eq!(names[0].0, "planes.l0.xy");
        assert_eq!(names[0].1, 4 * 4 * 2);
        assert_eq!(names[11].0, "planes.l1.zt");
        assert_eq!(names[11].1, 8 * 8 * 2);
    }
}
