//! Category-specific deformation: a shared spatio-temporal encoder feeds
//! per-category MLP decoders (background is the identity branch) and a
//! probability head that nudges category logits over time. Soft gating
//! blends branch outputs by category probability; hard gating routes each
//! Gaussian exclusively through its labeled branch.

pub mod hexplane;
pub mod mlp;

pub use hexplane::{HexPlane, HexPlaneGrads};
pub use mlp::{Mlp, MlpCache, MlpGrads};

use crate::error::{Error, Result};
use crate::types::{AugmentedGaussian, Category, CategoryProbs, SceneBounds, CATEGORY_COUNT};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Channels in a decoder output: 3 position + 4 rotation + 3 log-scale +
/// 1 opacity logit + 3 color DC + 1 brightness.
pub const DELTA_DIM: usize = 15;

/// Additive per-Gaussian offsets for one branch at one timestamp.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DeformationDelta {
    pub d_mu: [f64; 3],
    pub d_rot: [f64; 4],
    pub d_log_scale: [f64; 3],
    pub d_opacity_logit: f64,
    pub d_sh_dc: [f64; 3],
    pub d_brightness: f64,
}

impl DeformationDelta {
    pub fn from_slice(v: &[f64]) -> DeformationDelta {
        debug_assert_eq!(v.len(), DELTA_DIM);
        DeformationDelta {
            d_mu: [v[0], v[1], v[2]],
            d_rot: [v[3], v[4], v[5], v[6]],
            d_log_scale: [v[7], v[8], v[9]],
            d_opacity_logit: v[10],
            d_sh_dc: [v[11], v[12], v[13]],
            d_brightness: v[14],
        }
    }

    pub fn to_array(self) -> [f64; DELTA_DIM] {
        let d = &self;
        [
            d.d_mu[0],
            d.d_mu[1],
            d.d_mu[2],
            d.d_rot[0],
            d.d_rot[1],
            d.d_rot[2],
            d.d_rot[3],
            d.d_log_scale[0],
            d.d_log_scale[1],
            d.d_log_scale[2],
            d.d_opacity_logit,
            d.d_sh_dc[0],
            d.d_sh_dc[1],
            d.d_sh_dc[2],
            d.d_brightness,
        ]
    }

    pub fn scaled_add(&mut self, w: f64, o: &DeformationDelta) {
        let a = self.to_array();
        let b = o.to_array();
        let mut out = [0.0; DELTA_DIM];
        for i in 0..DELTA_DIM {
            out[i] = a[i] + w * b[i];
        }
        *self = DeformationDelta::from_slice(&out);
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Apply a delta to a Gaussian. The quaternion is stored unnormalized and
/// normalized on use; color delta lands on the SH DC coefficients.
pub fn apply_delta(g: &AugmentedGaussian, d: &DeformationDelta) -> AugmentedGaussian {
    let mut out = g.clone();
    for k in 0..3 {
        out.mu[k] += d.d_mu[k];
        out.log_scale[k] += d.d_log_scale[k];
        out.sh[k] += d.d_sh_dc[k];
    }
    for k in 0..4 {
        out.rot[k] += d.d_rot[k];
    }
    out.opacity_logit += d.d_opacity_logit;
    out.brightness += d.d_brightness;
    out
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub plane_resolutions: Vec<usize>,
    pub plane_channels: usize,
    pub decoder_hidden: usize,
    pub decoder_layers: usize,
    pub head_hidden: usize,
    pub head_layers: usize,
    pub delta_p_scale: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            plane_resolutions: vec![32, 64],
            plane_channels: 16,
            decoder_hidden: 64,
            decoder_layers: 2,
            head_hidden: 32,
            head_layers: 2,
            delta_p_scale: 0.1,
        }
    }
}

/// The trainable deformation model: shared encoder, two decoders, one
/// probability head.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    pub hexplane: HexPlane,
    pub dec_obj: Mlp,
    pub dec_hand: Mlp,
    pub head: Mlp,
    pub delta_p_scale: f64,
}

impl DeformationField {
    pub fn new(cfg: &FieldConfig, rng: &mut impl Rng) -> DeformationField {
        let hexplane = HexPlane::new(&cfg.plane_resolutions, cfg.plane_channels, rng);
        let fdim = hexplane.feature_dim();
        let mut dec_dims = vec![fdim];
        dec_dims.extend(std::iter::repeat(cfg.decoder_hidden).take(cfg.decoder_layers));
        dec_dims.push(DELTA_DIM);
        let mut head_dims = vec![fdim];
        head_dims.extend(std::iter::repeat(cfg.head_hidden).take(cfg.head_layers));
        head_dims.push(CATEGORY_COUNT);
        DeformationField {
            hexplane,
            dec_obj: Mlp::new(&dec_dims, rng),
            dec_hand: Mlp::new(&dec_dims, rng),
            head: Mlp::new(&head_dims, rng),
            delta_p_scale: cfg.delta_p_scale,
        }
    }

    pub fn decoder_for(&self, c: Category) -> Option<&Mlp> {
        match c {
            Category::Background => None,
            Category::Object => Some(&self.dec_obj),
            Category::Hand => Some(&self.dec_hand),
        }
    }

    /// Encoder coordinates for one Gaussian at time t.
    pub fn coords(bounds: &SceneBounds, g: &AugmentedGaussian, t: f64) -> [f64; 4] {
        let n = bounds.normalize(&g.mu);
        [n.x, n.y, n.z, t.clamp(0.0, 1.0)]
    }

    fn features1(&self, bounds: &SceneBounds, g: &AugmentedGaussian, t: f64) -> DMatrix<f64> {
        self.hexplane.encode_batch(&[Self::coords(bounds, g, t)])
    }

    /// Branch delta for one Gaussian (convenience path; training uses the
    /// batched pipeline).
    pub fn deform_branch(
        &self,
        bounds: &SceneBounds,
        l: Category,
        g: &AugmentedGaussian,
        t: f64,
    ) -> DeformationDelta {
        match self.decoder_for(l) {
            None => DeformationDelta::default(),
            Some(dec) => {
                let feat = self.features1(bounds, g, t);
                let (y, _) = dec.forward_batch(feat);
                DeformationDelta::from_slice(y.row(0).transpose().as_slice())
            }
        }
    }

    /// Logit-space probability update for one Gaussian.
    pub fn delta_p(&self, bounds: &SceneBounds, g: &AugmentedGaussian, t: f64) -> [f64; 3] {
        let feat = self.features1(bounds, g, t);
        let (y, _) = self.head.forward_batch(feat);
        [
            self.delta_p_scale * y[(0, 0)],
            self.delta_p_scale * y[(0, 1)],
            self.delta_p_scale * y[(0, 2)],
        ]
    }

    /// Updated category logits (base + head output) for one Gaussian.
    pub fn update_probs(&self, bounds: &SceneBounds, g: &AugmentedGaussian, t: f64) -> [f64; 3] {
        let dp = self.delta_p(bounds, g, t);
        [
            g.cat_logits[0] + dp[0],
            g.cat_logits[1] + dp[1],
            g.cat_logits[2] + dp[2],
        ]
    }

    /// Probability-weighted blend of branch deltas (background contributes
    /// zero), using the updated probabilities.
    pub fn soft_gate(&self, bounds: &SceneBounds, g: &AugmentedGaussian, t: f64) -> DeformationDelta {
        let p = CategoryProbs::from_logits(&self.update_probs(bounds, g, t));
        let mut out = DeformationDelta::default();
        out.scaled_add(p.get(Category::Object), &self.deform_branch(bounds, Category::Object, g, t));
        out.scaled_add(p.get(Category::Hand), &self.deform_branch(bounds, Category::Hand, g, t));
        out
    }

    /// Exclusive routing through the branch of the Gaussian's hard label
    /// (from its stored logits).
    pub fn hard_gate(&self, bounds: &SceneBounds, g: &AugmentedGaussian, t: f64) -> DeformationDelta {
        self.deform_branch(bounds, g.hard_label(), g, t)
    }

    /// Visit every trainable tensor in a fixed, documented order.
    pub fn for_each_tensor(&self, f: &mut impl FnMut(String, &[f64])) {
        self.hexplane.for_each_tensor(f);
        self.dec_obj.for_each_tensor("dec_obj", f);
        self.dec_hand.for_each_tensor("dec_hand", f);
        self.head.for_each_tensor("head", f);
    }

    pub fn for_each_tensor_mut(&mut self, f: &mut impl FnMut(String, &mut [f64])) {
        self.hexplane.for_each_tensor_mut(f);
        self.dec_obj.for_each_tensor_mut("dec_obj", f);
        self.dec_hand.for_each_tensor_mut("dec_hand", f);
        self.head.for_each_tensor_mut("head", f);
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_tensor(&mut |n, _| names.push(n));
        names
    }

    /// Overwrite one named tensor; length must match.
    pub fn set_tensor(&mut self, name: &str, data: &[f64]) -> Result<()> {
        let mut found = false;
        let mut bad_len = None;
        self.for_each_tensor_mut(&mut |n, slot| {
            if n == name {
                found = true;
                if slot.len() == data.len() {
                    slot.copy_from_slice(data);
                } else {
                    bad_len = Some(slot.len());
                }
            }
        });
        if let Some(want) = bad_len {
            return Err(Error::format(format!(
                "tensor {} has {} values, expected {}",
                name,
                data.len(),
                want
            )));
        }
        if !found {
            return Err(Error::format(format!("unknown tensor {}", name)));
        }
        Ok(())
    }
}

/// Gradients for every tensor of a `DeformationField`, in the same order.
#[derive(Clone, Debug)]
pub struct FieldGrads {
    pub hexplane: HexPlaneGrads,
    pub dec_obj: MlpGrads,
    pub dec_hand: MlpGrads,
    pub head: MlpGrads,
}

impl FieldGrads {
    pub fn zeros_like(field: &DeformationField) -> FieldGrads {
        FieldGrads {
            hexplane: HexPlaneGrads {
                levels: field
                    .hexplane
                    .levels
                    .iter()
                    .map(|l| std::array::from_fn(|_| vec![0.0; l.res * l.res * l.channels]))
                    .collect(),
            },
            dec_obj: MlpGrads::zeros_like(&field.dec_obj),
            dec_hand: MlpGrads::zeros_like(&field.dec_hand),
            head: MlpGrads::zeros_like(&field.head),
        }
    }

    pub fn for_each_tensor(&self, f: &mut impl FnMut(String, &[f64])) {
        self.hexplane.for_each_tensor(f);
        self.dec_obj.for_each_tensor("dec_obj", f);
        self.dec_hand.for_each_tensor("dec_hand", f);
        self.head.for_each_tensor("head", f);
    }

    pub fn add_assign(&mut self, other: &FieldGrads) {
        self.hexplane.add_assign(&other.hexplane);
        self.dec_obj.add_assign(&other.dec_obj);
        self.dec_hand.add_assign(&other.dec_hand);
        self.head.add_assign(&other.head);
    }
}
