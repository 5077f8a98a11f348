//! SSIM with an 11x11 Gaussian window (sigma 1.5), zero-padded 'same'
//! convolution, and an analytic backward pass. Images are interleaved
//! (channel-fastest); statistics are computed per channel plane and the
//! score is averaged over every pixel and channel.

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
const RADIUS: usize = 5;
const TAPS: usize = 2 * RADIUS + 1;

/// Normalized 11-tap Gaussian, sigma 1.5.
fn window() -> [f64; TAPS] {
    let mut w = [0.0; TAPS];
    let inv = 1.0 / (2.0 * 1.5 * 1.5);
    let mut sum = 0.0;
    for (i, slot) in w.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *slot = (-d * d * inv).exp();
        sum += *slot;
    }
    for slot in w.iter_mut() {
        *slot /= sum;
    }
    w
}

/// Separable zero-padded blur of one plane. The kernel is symmetric, so this
/// routine is its own adjoint.
fn blur(src: &[f64], width: usize, height: usize, tmp: &mut [f64], dst: &mut [f64]) {
    let k = window();
    // Horizontal pass.
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            let lo = x.saturating_sub(RADIUS);
            let hi = (x + RADIUS).min(width - 1);
            for sx in lo..=hi {
                acc += k[sx + RADIUS - x] * row[sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    // Vertical pass.
    for y in 0..height {
        let lo = y.saturating_sub(RADIUS);
        let hi = (y + RADIUS).min(height - 1);
        for x in 0..width {
            let mut acc = 0.0;
            for sy in lo..=hi {
                acc += k[sy + RADIUS - y] * tmp[sy * width + x];
            }
            dst[y * width + x] = acc;
        }
    }
}

struct PlaneStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    gxx: Vec<f64>,
    gyy: Vec<f64>,
    gxy: Vec<f64>,
}

fn plane_stats(x: &[f64], y: &[f64], width: usize, height: usize) -> PlaneStats {
    let n = width * height;
    let mut tmp = vec![0.0; n];
    let mut st = PlaneStats {
        mu_x: vec![0.0; n],
        mu_y: vec![0.0; n],
        gxx: vec![0.0; n],
        gyy: vec![0.0; n],
        gxy: vec![0.0; n],
    };
    blur(x, width, height, &mut tmp, &mut st.mu_x);
    blur(y, width, height, &mut tmp, &mut st.mu_y);
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    blur(&sq, width, height, &mut tmp, &mut st.gxx);
    let sq: Vec<f64> = y.iter().map(|v| v * v).collect();
    blur(&sq, width, height, &mut tmp, &mut st.gyy);
    let pr: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    blur(&pr, width, height, &mut tmp, &mut st.gxy);
    st
}

fn extract_plane(img: &[f64], channels: usize, c: usize) -> Vec<f64> {
    img.iter().skip(c).step_by(channels).copied().collect()
}

/// Per-pixel, per-channel SSIM map (interleaved like the inputs).
pub fn ssim_map(pred: &[f64], gt: &[f64], width: usize, height: usize, channels: usize) -> Vec<f64> {
    assert_eq!(pred.len(), width * height * channels);
    assert_eq!(gt.len(), pred.len());
    let n = width * height;
    let mut map = vec![0.0; n * channels];
    for c in 0..channels {
        let x = extract_plane(pred, channels, c);
        let y = extract_plane(gt, channels, c);
        let st = plane_stats(&x, &y, width, height);
        for i in 0..n {
            let (mx, my) = (st.mu_x[i], st.mu_y[i]);
            let sx2 = st.gxx[i] - mx * mx;
            let sy2 = st.gyy[i] - my * my;
            let sxy = st.gxy[i] - mx * my;
            let n1 = 2.0 * mx * my + SSIM_C1;
            let n2 = 2.0 * sxy + SSIM_C2;
            let d1 = mx * mx + my * my + SSIM_C1;
            let d2 = sx2 + sy2 + SSIM_C2;
            map[i * channels + c] = n1 * n2 / (d1 * d2);
        }
    }
    map
}

/// Mean SSIM over all pixels and channels.
pub fn ssim_value(pred: &[f64], gt: &[f64], width: usize, height: usize, channels: usize) -> f64 {
    let map = ssim_map(pred, gt, width, height, channels);
    map.iter().sum::<f64>() / map.len() as f64
}

/// Mean SSIM plus its gradient with respect to `pred`. The gradient treats
/// `gt` as constant.
pub fn ssim_value_grad(
    pred: &[f64],
    gt: &[f64],
    width: usize,
    height: usize,
    channels: usize,
) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), width * height * channels);
    assert_eq!(gt.len(), pred.len());
    let n = width * height;
    let ds = 1.0 / (n * channels) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; pred.len()];
    let mut tmp = vec![0.0; n];
    let mut conv = vec![0.0; n];
    for c in 0..channels {
        let x = extract_plane(pred, channels, c);
        let y = extract_plane(gt, channels, c);
        let st = plane_stats(&x, &y, width, height);
        // Upstream fields for the three convolution inputs that touch x:
        // mu_x = G*x, gxx = G*(x^2), gxy = G*(x*y).
        let mut a_mu = vec![0.0; n];
        let mut a_gxx = vec![0.0; n];
        let mut a_gxy = vec![0.0; n];
        for i in 0..n {
            let (mx, my) = (st.mu_x[i], st.mu_y[i]);
            let sx2 = st.gxx[i] - mx * mx;
            let sy2 = st.gyy[i] - my * my;
            let sxy = st.gxy[i] - mx * my;
            let n1 = 2.0 * mx * my + SSIM_C1;
            let n2 = 2.0 * sxy + SSIM_C2;
            let d1 = mx * mx + my * my + SSIM_C1;
            let d2 = sx2 + sy2 + SSIM_C2;
            let inv = 1.0 / (d1 * d2);
            let s = n1 * n2 * inv;
            total += s;
            a_mu[i] = ds * (2.0 * my * (n2 - n1) * inv + 2.0 * mx * s * (1.0 / d2 - 1.0 / d1));
            a_gxx[i] = ds * (-s / d2);
            a_gxy[i] = ds * (2.0 * n1 * inv);
        }
        blur(&a_mu, width, height, &mut tmp, &mut conv);
        for i in 0..n {
            grad[i * channels + c] += conv[i];
        }
        blur(&a_gxx, width, height, &mut tmp, &mut conv);
        for i in 0..n {
            grad[i * channels + c] += 2.0 * x[i] * conv[i];
        }
        blur(&a_gxy, width, height, &mut tmp, &mut conv);
        for i in 0..n {
            grad[i * channels + c] += y[i] * conv[i];
        }
    }
    (total * ds, grad)
}
