//! Binary mask dilation (square structuring element) and the occlusion
//! gradient mask: image-space gradients are zeroed wherever another
//! branch's dilated mask covers the pixel, so occluded regions never push
//! on the occluded branch.

use crate::error::{Error, Result};

/// Dilate a binary mask by a square structuring element of the given
/// radius (side 2r+1). Separable two-pass max filter.
pub fn dilate(mask: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    assert_eq!(mask.len(), width * height);
    if radius == 0 {
        return mask.to_vec();
    }
    let r = radius as isize;
    let mut tmp = vec![0.0; mask.len()];
    for y in 0..height {
        let row = y * width;
        for x in 0..width {
            let x0 = (x as isize - r).max(0) as usize;
            let x1 = ((x as isize + r) as usize).min(width - 1);
            let mut m: f64 = 0.0;
            for xx in x0..=x1 {
                m = m.max(mask[row + xx]);
            }
            tmp[row + x] = m;
        }
    }
    let mut out = vec![0.0; mask.len()];
    for y in 0..height {
        let y0 = (y as isize - r).max(0) as usize;
        let y1 = ((y as isize + r) as usize).min(height - 1);
        for x in 0..width {
            let mut m: f64 = 0.0;
            for yy in y0..=y1 {
                m = m.max(tmp[yy * width + x]);
            }
            out[y * width + x] = m;
        }
    }
    out
}

/// Zero `image_grad` (any channel count) wherever the dilated occlusion
/// mask is set. Returns how many pixels were zeroed.
pub fn apply_occlusion_gradient_mask(
    image_grad: &mut [f64],
    occ_mask: &[f64],
    width: usize,
    height: usize,
    dilation_radius: usize,
) -> Result<usize> {
    let n = width * height;
    if occ_mask.len() != n {
        return Err(Error::invalid(format!(
            "occlusion mask has {} pixels, image is {}x{}",
            occ_mask.len(),
            width,
            height
        )));
    }
    if n == 0 || image_grad.len() % n != 0 {
        return Err(Error::invalid("image gradient size is not a multiple of the mask size"));
    }
    let dilated = dilate(occ_mask, width, height, dilation_radius);
    zero_masked(image_grad, &dilated, n)
}

/// Same zeroing against an already-dilated mask (the training loop caches
/// dilations per frame).
pub fn zero_masked(image_grad: &mut [f64], dilated_mask: &[f64], n: usize) -> Result<usize> {
    if image_grad.len() % n != 0 {
        return Err(Error::invalid("image gradient size is not a multiple of the mask size"));
    }
    let channels = image_grad.len() / n;
    let mut zeroed = 0;
    for (p, &m) in dilated_mask.iter().enumerate() {
        if m > 0.5 {
            zeroed += 1;
            for c in 0..channels {
                image_grad[p * channels + c] = 0.0;
            }
        }
    }
    Ok(zeroed)
}
