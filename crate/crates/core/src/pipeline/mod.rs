//! Stage orchestration, sequences, persistence and export.

mod checkpoint;
mod config;
mod export;
mod metrics;
mod optim;
mod stage1;
mod stage2;
mod targets;

pub use checkpoint::{SequenceSpec, CHECKPOINT_VERSION};
pub use config::{Background, Config, ExportConfig, NoiseConfig, Profile, Stage1Config, Stage2Config};
pub use export::{
    export_cameras, export_composed, export_frames, pad_to_square, read_ppm, write_png, write_ppm, ExportManifest, ExportedFrame,
};
pub use metrics::{MetricsRecord, Observer, RunRecorder, Silent};
pub use optim::{position_lr, Adam, CloudOptimizer, CloudRates};
pub use stage1::run_stage1;
pub use stage2::{extend_sequence, new_segment_field, optimize_segment, refine_last_segment, run_stage2};
pub use targets::{load_target, scene_target, ProviderArg, TargetManifest};
