//! Differentiable Gaussian splatting with a probabilistic decomposition of
//! the scene into background, manipulated object and hand. One Gaussian set
//! carries per-element category probabilities; category-specific deformation
//! branches are blended through those probabilities (softly during early
//! training, hard-routed later). Rendering, losses and the optimizer are all
//! hand-rolled reverse-mode, in f64, with deterministic scheduling.

pub mod deform;
pub mod error;
pub mod grad;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod sh;
pub mod synth;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use io::{load_dataset, Dataset, FrameRecord};
pub use types::{
    init_from_pointcloud, AugmentedGaussian, Category, CategoryProbs, GaussianScene,
    PinholeCamera, SceneBounds, CATEGORY_COUNT,
};
