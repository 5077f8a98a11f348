//! EWA splat projection: perspective-project each 3D Gaussian to a 2D
//! Gaussian via the local affine approximation, with the standard 0.3 px
//! low-pass floor on the projected covariance.

use super::{RenderSettings, Splat2D};
use crate::types::PinholeCamera;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

/// Anti-aliasing floor added to both eigenvalues of the 2D covariance.
pub const COV2D_FLOOR: f64 = 0.3;
/// Visibility cull radius in standard deviations (fixed; the evaluation
/// radius from `RenderSettings` may be larger).
pub const CULL_SIGMA: f64 = 3.0;

/// Screen-space geometry of one projected Gaussian.
#[derive(Clone, Copy, Debug)]
pub struct SplatGeom {
    pub mean: [f64; 2],
    pub cov: [f64; 3],
    pub conic: [f64; 3],
    pub depth: f64,
    /// Evaluation box (inclusive, clipped to the viewport).
    pub x0: i32,
    pub x1: i32,
    pub y0: i32,
    pub y1: i32,
}

pub fn quat_to_rot(q: &[f64; 4]) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Adjoint of `quat_to_rot` for a unit quaternion.
pub fn quat_to_rot_grad(q: &[f64; 4], d_r: &Matrix3<f64>) -> [f64; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dw = Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = Matrix3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let dy = Matrix3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let dz = Matrix3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    [d_r.dot(&dw), d_r.dot(&dx), d_r.dot(&dy), d_r.dot(&dz)]
}

fn normalize_quat(q: &[f64; 4]) -> ([f64; 4], f64) {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    ([q[0] / n, q[1] / n, q[2] / n, q[3] / n], n)
}

/// Adjoint of quaternion normalization: project out the radial component.
fn normalize_quat_grad(q_unit: &[f64; 4], norm: f64, d_unit: &[f64; 4]) -> [f64; 4] {
    let dot: f64 = (0..4).map(|i| q_unit[i] * d_unit[i]).sum();
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (d_unit[i] - q_unit[i] * dot) / norm;
    }
    out
}

/// Project a world point; returns pixel coordinates and camera depth, or
/// None behind the near plane.
pub fn project_point(cam: &PinholeCamera, p: &Vector3<f64>, near: f64) -> Option<(Vector2<f64>, f64)> {
    let pc = cam.to_camera(p);
    if pc.z <= near {
        return None;
    }
    let (u, v) = cam.project_cam(&pc);
    Some((Vector2::new(u, v), pc.z))
}

/// Backward of `project_point` w.r.t. the world point.
pub fn project_point_grad(
    cam: &PinholeCamera,
    p: &Vector3<f64>,
    d_uv: &Vector2<f64>,
    d_depth: f64,
) -> Vector3<f64> {
    let pc = cam.to_camera(p);
    let z2 = pc.z * pc.z;
    let d_pc = Vector3::new(
        cam.fx / pc.z * d_uv.x,
        cam.fy / pc.z * d_uv.y,
        -cam.fx * pc.x / z2 * d_uv.x - cam.fy * pc.y / z2 * d_uv.y + d_depth,
    );
    cam.rotation().transpose() * d_pc
}

fn cov2d_of(
    cam: &PinholeCamera,
    mu: &Vector3<f64>,
    rot: &[f64; 4],
    log_scale: &Vector3<f64>,
) -> Option<(Vector3<f64>, Matrix2x3<f64>, Matrix3<f64>, Matrix2<f64>)> {
    let w_mat = cam.rotation();
    let pc = w_mat * mu + cam.translation();
    let (q, _) = normalize_quat(rot);
    let r = quat_to_rot(&q);
    let s = Vector3::new(log_scale.x.exp(), log_scale.y.exp(), log_scale.z.exp());
    let m3 = Matrix3::from_columns(&[r.column(0) * s.x, r.column(1) * s.y, r.column(2) * s.z]);
    let sigma = m3 * m3.transpose();
    let z2 = pc.z * pc.z;
    let j = Matrix2x3::new(
        cam.fx / pc.z,
        0.0,
        -cam.fx * pc.x / z2,
        0.0,
        cam.fy / pc.z,
        -cam.fy * pc.y / z2,
    );
    let m = j * w_mat;
    let mut c = m * sigma * m.transpose();
    c[(0, 0)] += COV2D_FLOOR;
    c[(1, 1)] += COV2D_FLOOR;
    Some((pc, m, sigma, c))
}

/// Largest eigenvalue of a symmetric 2x2.
fn lambda_max(c: &Matrix2<f64>) -> f64 {
    let half_tr = 0.5 * (c[(0, 0)] + c[(1, 1)]);
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(0, 1)];
    half_tr + (half_tr * half_tr - det).max(0.0).sqrt()
}

/// Project one Gaussian. Returns None when culled (behind the near plane,
/// degenerate covariance, or the 3-sigma box misses the viewport).
pub fn project_splat(
    cam: &PinholeCamera,
    mu: &Vector3<f64>,
    rot: &[f64; 4],
    log_scale: &Vector3<f64>,
    settings: &RenderSettings,
) -> Option<SplatGeom> {
    let (pc, _, _, c) = cov2d_of(cam, mu, rot, log_scale)?;
    if pc.z <= settings.near {
        return None;
    }
    let (u, v) = cam.project_cam(&pc);
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(0, 1)];
    if !(det > 0.0) || !u.is_finite() || !v.is_finite() {
        return None;
    }
    let radius = lambda_max(&c).sqrt();
    let r_cull = CULL_SIGMA * radius;
    let (w, h) = (cam.width as f64, cam.height as f64);
    if u + r_cull < 0.0 || u - r_cull > w || v + r_cull < 0.0 || v - r_cull > h {
        return None;
    }
    let r_eval = settings.sigma_cutoff.max(CULL_SIGMA) * radius;
    // Pixel (ix, iy) samples at its center (ix + 0.5, iy + 0.5).
    let x0 = ((u - r_eval - 0.5).ceil() as i64).clamp(0, cam.width as i64 - 1) as i32;
    let x1 = ((u + r_eval - 0.5).floor() as i64).clamp(0, cam.width as i64 - 1) as i32;
    let y0 = ((v - r_eval - 0.5).ceil() as i64).clamp(0, cam.height as i64 - 1) as i32;
    let y1 = ((v + r_eval - 0.5).floor() as i64).clamp(0, cam.height as i64 - 1) as i32;
    let inv_det = 1.0 / det;
    Some(SplatGeom {
        mean: [u, v],
        cov: [c[(0, 0)], c[(0, 1)], c[(1, 1)]],
        conic: [c[(1, 1)] * inv_det, -c[(0, 1)] * inv_det, c[(0, 0)] * inv_det],
        depth: pc.z,
        x0,
        x1,
        y0,
        y1,
    })
}

/// Adjoints flowing back into one projected splat's geometry.
/// `d_cov` follows the same (c00, c01, c11) packing with c01 receiving the
/// combined gradient of both off-diagonal entries.
#[derive(Clone, Copy, Debug, Default)]
pub struct GeomAdjoint {
    pub d_mean: [f64; 2],
    pub d_cov: [f64; 3],
    pub d_depth: f64,
}

/// Backward of `project_splat` for a splat that survived culling.
pub fn project_splat_grad(
    cam: &PinholeCamera,
    mu: &Vector3<f64>,
    rot: &[f64; 4],
    log_scale: &Vector3<f64>,
    adj: &GeomAdjoint,
) -> (Vector3<f64>, [f64; 4], Vector3<f64>) {
    let w_mat = cam.rotation();
    let (pc, m, sigma, _) = cov2d_of(cam, mu, rot, log_scale).expect("splat was projected");
    let (q, qn) = normalize_quat(rot);
    let r = quat_to_rot(&q);
    let s = Vector3::new(log_scale.x.exp(), log_scale.y.exp(), log_scale.z.exp());

    // Mean and depth chain.
    let z2 = pc.z * pc.z;
    let mut d_pc = Vector3::new(
        cam.fx / pc.z * adj.d_mean[0],
        cam.fy / pc.z * adj.d_mean[1],
        -cam.fx * pc.x / z2 * adj.d_mean[0] - cam.fy * pc.y / z2 * adj.d_mean[1] + adj.d_depth,
    );

    // Covariance chain. d_cov packs the symmetric adjoint; rebuild the
    // matrix form with halved off-diagonals.
    let dc = Matrix2::new(adj.d_cov[0], 0.5 * adj.d_cov[1], 0.5 * adj.d_cov[1], adj.d_cov[2]);
    let d_sigma = m.transpose() * dc * m;
    let d_m = (dc + dc.transpose()) * m * sigma;
    let d_j = d_m * w_mat.transpose();

    // J entries depend on pc.
    let (fx, fy) = (cam.fx, cam.fy);
    let z3 = z2 * pc.z;
    d_pc.x += -fx / z2 * d_j[(0, 2)];
    d_pc.y += -fy / z2 * d_j[(1, 2)];
    d_pc.z += -fx / z2 * d_j[(0, 0)] - fy / z2 * d_j[(1, 1)]
        + 2.0 * fx * pc.x / z3 * d_j[(0, 2)]
        + 2.0 * fy * pc.y / z3 * d_j[(1, 2)];

    let d_mu = w_mat.transpose() * d_pc;

    // Sigma = (R S)(R S)^T with S diagonal.
    let d_sym = d_sigma + d_sigma.transpose();
    let m3 = Matrix3::from_columns(&[r.column(0) * s.x, r.column(1) * s.y, r.column(2) * s.z]);
    let d_m3 = d_sym * m3;
    // d_m3 column k splits into rotation column and log-scale k.
    let mut d_r = Matrix3::zeros();
    let mut d_log_scale = Vector3::zeros();
    for k in 0..3 {
        let col = d_m3.column(k);
        d_r.set_column(k, &(col * s[k]));
        d_log_scale[k] = col.dot(&r.column(k)) * s[k];
    }
    let d_q_unit = quat_to_rot_grad(&q, &d_r);
    let d_rot = normalize_quat_grad(&q, qn, &d_q_unit);

    (d_mu, d_rot, d_log_scale)
}

/// Sort splats front to back: by depth, ties by original index so the
/// order is a deterministic total order.
pub fn sort_splats(splats: &mut [Splat2D]) {
    splats.sort_unstable_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .expect("splat depths are finite")
            .then(a.gaussian_index.cmp(&b.gaussian_index))
    });
}
