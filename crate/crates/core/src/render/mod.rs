//! Projection of 3D Gaussians to screen-space splats and front-to-back
//! alpha compositing with auxiliary payload channels (depth, brightness,
//! 2D flow). Forward passes record a small tape (final transmittance and
//! last-contributor positions) so the backward pass can replay each pixel
//! exactly, back to front.

pub mod composite;
pub mod project;

pub use composite::{composite, composite_backward, OutputAdjoint, RenderOutput, SplatAdjoint};
pub use project::{
    project_point, project_point_grad, project_splat, project_splat_grad, sort_splats, GeomAdjoint,
    SplatGeom,
};

use crate::types::Category;

/// Contributions with effective alpha below this are dropped, forward and
/// backward alike. Kept tiny so the cutoff never shows up in finite
/// difference probes.
pub const ALPHA_MIN: f64 = 1e-10;
/// Per-contribution alpha ceiling; keeps 1 - alpha bounded away from zero
/// so the backward transmittance recovery stays finite.
pub const ALPHA_MAX: f64 = 1.0 - 1e-7;
/// Early termination threshold on accumulated transmittance.
pub const T_EPS: f64 = 1e-12;
/// Rows per scheduling band. Bands are the parallelism unit; results are
/// identical for any thread count because merges happen in band order.
pub const BAND_ROWS: usize = 8;

#[derive(Clone, Copy, Debug)]
pub struct RenderSettings {
    /// Evaluation radius in standard deviations. Pixels outside this
    /// Mahalanobis distance do not see the splat. At least 3.
    pub sigma_cutoff: f64,
    /// Camera-space near plane; splats at or behind it are culled.
    pub near: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings { sigma_cutoff: 3.5, near: 0.01 }
    }
}

/// How a compositing pass selects and weights splats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    /// Every splat, plain opacity.
    Composite,
    /// Every splat, opacity scaled by its probability for the category
    /// (scaling acts in both emission and transmittance).
    SoftCategory(Category),
    /// Only splats hard-labeled with the category, plain opacity.
    HardCategory(Category),
}

/// A projected Gaussian ready for compositing: screen-space geometry plus
/// every payload the compositor can accumulate. Kept sorted by `depth`.
#[derive(Clone, Debug)]
pub struct Splat2D {
    pub gaussian_index: u32,
    pub mean: [f64; 2],
    /// Upper triangle of the 2D covariance (c00, c01, c11).
    pub cov: [f64; 3],
    /// Upper triangle of the inverse covariance.
    pub conic: [f64; 3],
    pub depth: f64,
    pub rgb: [f64; 3],
    pub brightness: f64,
    pub flow: [f64; 2],
    /// Inclusive pixel bounds of the evaluation box, already clipped.
    pub x0: i32,
    pub x1: i32,
    pub y0: i32,
    pub y1: i32,
}

impl Splat2D {
    pub fn rows(&self) -> std::ops::RangeInclusive<i32> {
        self.y0..=self.y1
    }
}
