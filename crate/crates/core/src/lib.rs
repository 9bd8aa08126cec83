//! Score-distillation optimization of dynamic 3D Gaussians.
//!
//! The crate is organized bottom-up:
//!
//! * [`scene`]: Gaussian clouds, spherical-harmonics color, cameras, composition.
//! * [`render`]: tile-based splatting with an exact reverse pass.
//! * [`deform`]: the time-gated MLP deformation field and k-NN graph.
//! * [`regularize`]: distribution (JSD), rigidity and interpolation penalties.
//! * [`distill`]: noise schedule, forward diffusion and guidance-gradient assembly.
//! * [`guidance`]: the score-provider contract, analytic oracles and the HTTP client.
//! * [`schedules`]: fps/time, camera and diffusion-time samplers; densification.
//! * [`pipeline`]: the two optimization stages, sequence extension, export and checkpoints.

pub mod deform;
pub mod distill;
pub mod error;
pub mod gradcheck;
pub mod guidance;
pub mod pipeline;
pub mod regularize;
pub mod render;
pub mod scene;
pub mod schedules;

pub use error::{Error, Result};
