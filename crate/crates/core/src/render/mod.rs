//! Tile-based splatting and its exact reverse pass.
//!
//! A pixel's color is `C = Σ_i c_i α_i T_i + T_final · background`, with
//! `α_i = min(α_max, η_i · exp(-½ dᵀ Σ_i⁻¹ d))` and `T_i = Π_{j<i} (1 - α_j)`.
//! Splats are ordered front-to-back by camera-space depth, ties by index.

mod backward;
mod forward;
mod image;

pub use backward::{render_backward, CloudGrads};
pub use forward::{render, render_with, RenderOptions, RenderOutput};
pub use image::Image;
