//! Binary checkpoint format, version 1. Everything numeric is stored as
//! little-endian f32 (the persistence lattice: training snaps parameters and
//! moments to this grid after every step, so save/load round-trips are
//! bitwise and resuming reproduces the uninterrupted run exactly).
//!
//! Layout: magic "DPGS", version u32, sh_degree u32, gaussian count u32,
//! step u64, scene bounds 6xf32, per-gaussian records (mu 3, rot 4,
//! log_scale 3, opacity logit 1, sh coefficients, brightness 1, category
//! logits 3), named f32 tensors (deformation tensors under "field.", Adam
//! moments under "adam.<group>.m/.v"), named u64 counters
//! ("adam.<group>.steps"). Strict EOF: trailing bytes are an error.

use super::{OptState, TrainState};
use crate::deform::{DeformationField, FieldConfig};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::types::{AugmentedGaussian, GaussianScene, SceneBounds};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DPGS";
pub const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

fn put_name(buf: &mut Vec<u8>, name: &str) {
    put_u32(buf, name.len() as u32);
    buf.extend_from_slice(name.as_bytes());
}

fn put_tensor(buf: &mut Vec<u8>, name: &str, data: &[f64]) {
    put_name(buf, name);
    put_u32(buf, data.len() as u32);
    for &v in data {
        put_f32(buf, v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, what: &str) -> Error {
        Error::format(format!("checkpoint {}: {what}", self.path.display()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.fail("truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    fn name(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        if len > 4096 {
            return Err(self.fail("unreasonable name length"));
        }
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| self.fail("non-utf8 name"))
    }

    fn tensor(&mut self) -> Result<(String, Vec<f64>)> {
        let name = self.name()?;
        let len = self.u32()? as usize;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(self.f32()?);
        }
        Ok((name, data))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.fail(&format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn save(path: &Path, state: &TrainState) -> Result<()> {
    let scene = &state.scene;
    let stride = scene.sh_coeff_count();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, scene.sh_degree);
    put_u32(&mut buf, scene.len() as u32);
    put_u64(&mut buf, state.step);
    for v in [scene.bounds.min, scene.bounds.max] {
        for k in 0..3 {
            put_f32(&mut buf, v[k]);
        }
    }
    for g in &scene.gaussians {
        debug_assert_eq!(g.sh.len(), stride);
        for k in 0..3 {
            put_f32(&mut buf, g.mu[k]);
        }
        for &v in &g.rot {
            put_f32(&mut buf, v);
        }
        for k in 0..3 {
            put_f32(&mut buf, g.log_scale[k]);
        }
        put_f32(&mut buf, g.opacity_logit);
        for &v in &g.sh {
            put_f32(&mut buf, v);
        }
        put_f32(&mut buf, g.brightness);
        for &v in &g.cat_logits {
            put_f32(&mut buf, v);
        }
    }

    let mut tensors: Vec<(String, Vec<f64>)> = Vec::new();
    state.field.for_each_tensor(&mut |name, data| {
        tensors.push((format!("field.{name}"), data.to_vec()));
    });
    for (name, adam) in &state.opt.groups {
        tensors.push((format!("adam.{name}.m"), adam.m.clone()));
        tensors.push((format!("adam.{name}.v"), adam.v.clone()));
    }
    put_u32(&mut buf, tensors.len() as u32);
    for (name, data) in &tensors {
        put_tensor(&mut buf, name, data);
    }

    put_u32(&mut buf, state.opt.groups.len() as u32);
    for (name, adam) in &state.opt.groups {
        put_name(&mut buf, &format!("adam.{name}.steps"));
        put_u64(&mut buf, adam.steps);
    }
    atomic_write(path, &buf)
}

/// Load a checkpoint. The deformation field is rebuilt from `field_cfg`
/// (its architecture is configuration, not state) and must match the stored
/// tensor shapes.
pub fn load(path: &Path, field_cfg: &FieldConfig) -> Result<TrainState> {
    let buf = std::fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(r.fail("bad magic, expected \"DPGS\""));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(&format!("unsupported version {version}, this build reads {VERSION}")));
    }
    let sh_degree = r.u32()?;
    if sh_degree > 3 {
        return Err(r.fail(&format!("sh degree {sh_degree} exceeds 3")));
    }
    let n = r.u32()? as usize;
    let step = r.u64()?;
    let mut bounds = SceneBounds { min: Vector3::zeros(), max: Vector3::zeros() };
    for k in 0..3 {
        bounds.min[k] = r.f32()?;
    }
    for k in 0..3 {
        bounds.max[k] = r.f32()?;
    }
    let stride = 3 * ((sh_degree + 1) * (sh_degree + 1)) as usize;
    let mut gaussians = Vec::with_capacity(n);
    for _ in 0..n {
        let mut mu = Vector3::zeros();
        for k in 0..3 {
            mu[k] = r.f32()?;
        }
        let mut rot = [0.0; 4];
        for v in &mut rot {
            *v = r.f32()?;
        }
        let mut log_scale = Vector3::zeros();
        for k in 0..3 {
            log_scale[k] = r.f32()?;
        }
        let opacity_logit = r.f32()?;
        let mut sh = Vec::with_capacity(stride);
        for _ in 0..stride {
            sh.push(r.f32()?);
        }
        let brightness = r.f32()?;
        let mut cat_logits = [0.0; 3];
        for v in &mut cat_logits {
            *v = r.f32()?;
        }
        gaussians.push(AugmentedGaussian {
            mu,
            rot,
            log_scale,
            opacity_logit,
            sh,
            brightness,
            cat_logits,
        });
    }
    let scene = GaussianScene { gaussians, sh_degree, bounds };

    // Architecture comes from config; every stored tensor must land in an
    // existing slot of matching shape.
    let mut field = DeformationField::new(field_cfg, &mut ChaCha20Rng::seed_from_u64(0));
    let mut opt = OptState::new(&scene, &field);
    let tensor_count = r.u32()? as usize;
    for _ in 0..tensor_count {
        let (name, data) = r.tensor()?;
        if let Some(rest) = name.strip_prefix("field.") {
            field
                .set_tensor(rest, &data)
                .map_err(|e| r.fail(&format!("tensor {name}: {e}")))?;
        } else if let Some(rest) = name.strip_prefix("adam.") {
            let (group, which) = rest
                .rsplit_once('.')
                .ok_or_else(|| r.fail(&format!("malformed tensor name {name}")))?;
            let adam = opt
                .get_mut(group)
                .ok_or_else(|| r.fail(&format!("unknown optimizer group in {name}")))?;
            let slot = match which {
                "m" => &mut adam.m,
                "v" => &mut adam.v,
                _ => return Err(r.fail(&format!("unknown moment {which} in {name}"))),
            };
            if slot.len() != data.len() {
                return Err(r.fail(&format!(
                    "tensor {name} has {} values, expected {}",
                    data.len(),
                    slot.len()
                )));
            }
            *slot = data;
        } else {
            return Err(r.fail(&format!("unknown tensor {name}")));
        }
    }
    let counter_count = r.u32()? as usize;
    for _ in 0..counter_count {
        let name = r.name()?;
        let value = r.u64()?;
        let group = name
            .strip_prefix("adam.")
            .and_then(|rest| rest.strip_suffix(".steps"))
            .ok_or_else(|| r.fail(&format!("unknown counter {name}")))?;
        opt.get_mut(group).ok_or_else(|| r.fail(&format!("unknown counter {name}")))?.steps =
            value;
    }
    r.finish()?;
    Ok(TrainState { scene, field, opt, step })
}
