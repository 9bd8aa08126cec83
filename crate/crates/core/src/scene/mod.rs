//! Static Gaussian scenes: the cloud itself, spherical-harmonics color,
//! pinhole cameras and multi-asset composition.

pub(crate) mod camera;
mod cloud;
mod compose;
pub mod sh;

pub use camera::{project_gaussian, splat_gaussian, Camera, ProjectParams, Splat2D, DEFAULT_LOWPASS, DEFAULT_NEAR};
pub use cloud::{init_cloud, init_cloud_with, GaussianCloud, InitOptions, SH_COEFFS};
pub use compose::{compose_scene, ComposedScene, RigidPose, SceneAsset};
pub use sh::eval_sh;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Rounds to the nearest `f32`. Parameters live on the `f32` grid so that the
/// 32-bit checkpoint format round-trips them exactly.
#[inline]
pub fn to_f32_grid(x: f64) -> f64 {
    x as f32 as f64
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
