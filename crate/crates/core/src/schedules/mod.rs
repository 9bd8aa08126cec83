//! Stochastic sampling policies and the densification controller.

mod densify;
mod sampling;

pub use densify::{densify_prune_step, DensifyConfig, DensifyOutcome, DensifyStats};
pub use sampling::{
    multiview_group, sample_camera_path_stage2, sample_camera_stage1, sample_diffusion_time, sample_fps_and_times,
    sampler_rng, view_suffix, FpsDistribution, OrbitSample, Stage, Stage1Cameras, Stage2Cameras, TimeRange,
    TimeSchedules,
};
