//! Forward diffusion and assembly of score-distillation gradients in pixel space.

mod assemble;
mod chain;
mod schedule;
mod tensor;

pub use assemble::{
    assemble_image_gradient, assemble_stage1_gradient, assemble_video_gradient, motion_amplify, DistillMode,
    GuidanceWeights, ScoreBatch,
};
pub use chain::{chain_deformed, chain_static, DeformedFrame};
pub use schedule::{diffuse, NoiseSchedule};
pub use tensor::{images_to_model, model_grad_to_images, Tensor4};
