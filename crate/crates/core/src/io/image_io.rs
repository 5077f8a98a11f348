//! PNG (8-bit) and PFM (float32) raster codecs. Pixel data is row-major
//! from the top-left, values in [0,1] for PNG; PFM stores raw floats and
//! follows the format's bottom-up row order with a little-endian scale.

use crate::error::{Error, Result};
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, ImageReader};
use std::io::Cursor;
use std::path::Path;

/// `data` is pixel-major RGB, length 3*w*h, clamped and quantized.
pub fn write_png_rgb(path: &Path, width: usize, height: usize, data: &[f64]) -> Result<()> {
    if data.len() != 3 * width * height {
        return Err(Error::invalid("rgb buffer does not match dimensions"));
    }
    let bytes: Vec<u8> = data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut png = Vec::new();
    PngEncoder::new(&mut png)
        .write_image(&bytes, width as u32, height as u32, ExtendedColorType::Rgb8)
        .map_err(|e| Error::format(format!("png encode: {e}")))?;
    super::atomic_write(path, &png)
}

pub fn read_png_rgb(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = ImageReader::open(path)?
        .decode()
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Ok((w, h, data))
}

/// Binary mask: nonzero pixels are written as 255.
pub fn write_png_mask(path: &Path, width: usize, height: usize, mask: &[f64]) -> Result<()> {
    if mask.len() != width * height {
        return Err(Error::invalid("mask buffer does not match dimensions"));
    }
    let bytes: Vec<u8> = mask.iter().map(|&v| if v > 0.5 { 255u8 } else { 0 }).collect();
    let mut png = Vec::new();
    PngEncoder::new(&mut png)
        .write_image(&bytes, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::format(format!("png encode: {e}")))?;
    super::atomic_write(path, &png)
}

/// Values come back as exactly 0.0 or 1.0 (threshold at 128).
pub fn read_png_mask(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = ImageReader::open(path)?
        .decode()
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().iter().map(|&b| if b >= 128 { 1.0 } else { 0.0 }).collect();
    Ok((w, h, data))
}

/// `channels` must be 1 ("Pf") or 3 ("PF"); data is pixel-major, top-down,
/// and gets flipped into the format's bottom-up order.
pub fn write_pfm(
    path: &Path,
    width: usize,
    height: usize,
    channels: usize,
    data: &[f64],
) -> Result<()> {
    if !(channels == 1 || channels == 3) {
        return Err(Error::invalid("pfm supports 1 or 3 channels"));
    }
    if data.len() != channels * width * height {
        return Err(Error::invalid("pfm buffer does not match dimensions"));
    }
    let mut out = Vec::new();
    out.extend_from_slice(if channels == 3 { b"PF\n" } else { b"Pf\n" });
    out.extend_from_slice(format!("{} {}\n-1.0\n", width, height).as_bytes());
    for y in (0..height).rev() {
        for x in 0..width {
            for c in 0..channels {
                let v = data[(y * width + x) * channels + c] as f32;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    super::atomic_write(path, &out)
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path)?;
    let bad = |msg: &str| Error::format(format!("{}: {}", path.display(), msg));
    let mut cur = Cursor::new(&bytes);
    let mut token = || -> Result<String> {
        let mut s = String::new();
        let mut started = false;
        loop {
            let pos = cur.position() as usize;
            if pos >= bytes.len() {
                return Err(bad("truncated header"));
            }
            let b = bytes[pos];
            cur.set_position(pos as u64 + 1);
            if b.is_ascii_whitespace() {
                if started {
                    return Ok(s);
                }
            } else {
                started = true;
                s.push(b as char);
            }
        }
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("bad pfm magic")),
    };
    let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = token()?.parse().map_err(|_| bad("bad scale"))?;
    if scale >= 0.0 {
        return Err(bad("big-endian pfm is not supported"));
    }
    let start = cur.position() as usize;
    let need = channels * width * height * 4;
    if bytes.len() - start != need {
        return Err(bad("pixel payload size mismatch"));
    }
    let mut data = vec![0.0; channels * width * height];
    for y in 0..height {
        let src_row = height - 1 - y;
        for x in 0..width {
            for c in 0..channels {
                let o = start + ((src_row * width + x) * channels + c) * 4;
                let v = f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
                data[(y * width + x) * channels + c] = v as f64;
            }
        }
    }
    Ok((width, height, channels, data))
}
