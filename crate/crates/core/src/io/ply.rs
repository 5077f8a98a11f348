//! ASCII PLY point clouds with x,y,z position and red,green,blue uchar
//! color, the initialization format emitted by the synthetic generator.

use crate::error::{Error, Result};
use nalgebra::Vector3;
use std::path::Path;

/// Colors are given in [0,1] and quantized to uchar.
pub fn write_ply(path: &Path, points: &[Vector3<f64>], colors: &[[f64; 3]]) -> Result<()> {
    if points.len() != colors.len() {
        return Err(Error::invalid("point and color counts differ"));
    }
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", points.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    out.push_str("end_header\n");
    for (p, c) in points.iter().zip(colors) {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            p.x as f32, p.y as f32, p.z as f32, q(c[0]), q(c[1]), q(c[2])
        ));
    }
    super::atomic_write(path, out.as_bytes())
}

/// Accepts float or double position properties; colors come back in [0,1].
pub fn read_ply(path: &Path) -> Result<(Vec<Vector3<f64>>, Vec<[f64; 3]>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |msg: &str| Error::format(format!("{}: {}", path.display(), msg));

    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing ply magic"));
    }
    if lines.next().map(str::trim) != Some("format ascii 1.0") {
        return Err(bad("only ascii 1.0 is supported"));
    }
    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        let mut words = line.split_whitespace();
        match words.next() {
            Some("comment") => {}
            Some("element") => {
                if words.next() == Some("vertex") {
                    count = Some(
                        words
                            .next()
                            .and_then(|w| w.parse().ok())
                            .ok_or_else(|| bad("bad vertex count"))?,
                    );
                } else {
                    return Err(bad("only vertex elements are supported"));
                }
            }
            Some("property") => {
                let ty = words.next().unwrap_or("");
                if !matches!(ty, "float" | "double" | "uchar") {
                    return Err(bad("unsupported property type"));
                }
                props.push(words.next().unwrap_or("").to_string());
            }
            _ => return Err(bad("unrecognized header line")),
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    let expected = ["x", "y", "z", "red", "green", "blue"];
    if props != expected {
        return Err(bad("expected properties x y z red green blue"));
    }

    let mut points = Vec::with_capacity(count);
    let mut colors = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| bad("truncated vertex data"))?;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != 6 {
            return Err(bad("vertex line does not have 6 values"));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float"));
        let u = |s: &str| s.parse::<u16>().map_err(|_| bad("bad color")).map(|v| v.min(255));
        points.push(Vector3::new(f(vals[0])?, f(vals[1])?, f(vals[2])?));
        colors.push([
            u(vals[3])? as f64 / 255.0,
            u(vals[4])? as f64 / 255.0,
            u(vals[5])? as f64 / 255.0,
        ]);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing data after vertices"));
    }
    Ok((points, colors))
}
