//! Gradient-side utilities: occlusion-aware gradient masking and the Adam
//! optimizer. The heavy reverse-mode passes live next to their forward
//! counterparts (render, deform, loss).

pub mod adam;
pub mod mask;

pub use adam::AdamState;
pub use mask::{apply_occlusion_gradient_mask, dilate, zero_masked};
