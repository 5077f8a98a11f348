//! Real spherical harmonics up to degree 3, evaluated on unit directions.
//! Color channels share the basis; coefficients are coefficient-major RGB
//! triplets. Decoded color is offset by +0.5 and clamped to [0,1].

use nalgebra::Vector3;

pub const SH_C0: f64 = 0.28209479177387814;
pub const SH_C1: f64 = 0.4886025119029199;
pub const SH_C2: [f64; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
pub const SH_C3: [f64; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

pub const MAX_SH_DEGREE: u32 = 3;
pub const MAX_SH_BASIS: usize = 16;

pub fn basis_len(degree: u32) -> usize {
    ((degree + 1) * (degree + 1)) as usize
}

/// Evaluate the basis at a unit direction. Only the first
/// `basis_len(degree)` slots are written.
pub fn sh_basis(degree: u32, dir: &Vector3<f64>) -> [f64; MAX_SH_BASIS] {
    debug_assert!((dir.norm() - 1.0).abs() < 1e-6, "sh basis needs a unit direction");
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut b = [0.0; MAX_SH_BASIS];
    b[0] = SH_C0;
    if degree >= 1 {
        b[1] = -SH_C1 * y;
        b[2] = SH_C1 * z;
        b[3] = -SH_C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = SH_C2[0] * x * y;
        b[5] = SH_C2[1] * y * z;
        b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        b[7] = SH_C2[3] * x * z;
        b[8] = SH_C2[4] * (xx - yy);
        if degree >= 3 {
            b[9] = SH_C3[0] * y * (3.0 * xx - yy);
            b[10] = SH_C3[1] * x * y * z;
            b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
            b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
            b[14] = SH_C3[5] * z * (xx - yy);
            b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
        }
    }
    b
}

/// Basis values plus their partials w.r.t. the (unconstrained) direction
/// components. The unit-sphere projection is applied by the caller.
pub fn sh_basis_grad(degree: u32, dir: &Vector3<f64>) -> ([f64; MAX_SH_BASIS], [[f64; 3]; MAX_SH_BASIS]) {
    let b = sh_basis(degree, dir);
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut g = [[0.0; 3]; MAX_SH_BASIS];
    if degree >= 1 {
        g[1] = [0.0, -SH_C1, 0.0];
        g[2] = [0.0, 0.0, SH_C1];
        g[3] = [-SH_C1, 0.0, 0.0];
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        g[4] = [SH_C2[0] * y, SH_C2[0] * x, 0.0];
        g[5] = [0.0, SH_C2[1] * z, SH_C2[1] * y];
        g[6] = [-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z];
        g[7] = [SH_C2[3] * z, 0.0, SH_C2[3] * x];
        g[8] = [2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, 0.0];
        if degree >= 3 {
            g[9] = [SH_C3[0] * 6.0 * x * y, SH_C3[0] * (3.0 * xx - 3.0 * yy), 0.0];
            g[10] = [SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y];
            g[11] = [
                SH_C3[2] * -2.0 * x * y,
                SH_C3[2] * (4.0 * zz - xx - 3.0 * yy),
                SH_C3[2] * 8.0 * y * z,
            ];
            g[12] = [
                SH_C3[3] * -6.0 * x * z,
                SH_C3[3] * -6.0 * y * z,
                SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
            ];
            g[13] = [
                SH_C3[4] * (4.0 * zz - 3.0 * xx - yy),
                SH_C3[4] * -2.0 * x * y,
                SH_C3[4] * 8.0 * x * z,
            ];
            g[14] = [SH_C3[5] * 2.0 * x * z, SH_C3[5] * -2.0 * y * z, SH_C3[5] * (xx - yy)];
            g[15] = [SH_C3[6] * (3.0 * xx - 3.0 * yy), SH_C3[6] * -6.0 * x * y, 0.0];
        }
    }
    (b, g)
}

/// Decode RGB from SH coefficients viewed along `dir` (unit length).
pub fn eval_sh(degree: u32, coeffs: &[f64], dir: &Vector3<f64>) -> [f64; 3] {
    let n = basis_len(degree);
    debug_assert_eq!(coeffs.len(), 3 * n);
    let b = sh_basis(degree, dir);
    let mut rgb = [0.0; 3];
    for c in 0..3 {
        let mut v = 0.5;
        for k in 0..n {
            v += coeffs[3 * k + c] * b[k];
        }
        rgb[c] = v.clamp(0.0, 1.0);
    }
    rgb
}

/// Backward pass of `eval_sh`. Accumulates coefficient gradients into
/// `d_coeffs` and returns the direction gradient (pre-normalization space).
pub fn eval_sh_grad(
    degree: u32,
    coeffs: &[f64],
    dir: &Vector3<f64>,
    d_rgb: &[f64; 3],
    d_coeffs: &mut [f64],
) -> Vector3<f64> {
    let n = basis_len(degree);
    debug_assert_eq!(coeffs.len(), 3 * n);
    debug_assert_eq!(d_coeffs.len(), 3 * n);
    let (b, gb) = sh_basis_grad(degree, dir);
    let mut d_dir = Vector3::zeros();
    for c in 0..3 {
        let mut raw = 0.5;
        for k in 0..n {
            raw += coeffs[3 * k + c] * b[k];
        }
        // Clamp gate: saturated channels pass no gradient.
        if raw <= 0.0 || raw >= 1.0 {
            continue;
        }
        for k in 0..n {
            d_coeffs[3 * k + c] += d_rgb[c] * b[k];
            let co = coeffs[3 * k + c] * d_rgb[c];
            d_dir.x += co * gb[k][0];
            d_dir.y += co * gb[k][1];
            d_dir.z += co * gb[k][2];
        }
    }
    d_dir
}
