//! Places two animated assets in one scene on a shared clock.
//!
//! cargo run --release --example compose_scene -- [out_dir]

use std::path::PathBuf;

use nalgebra::{Rotation3, Vector3};
use splat4d::deform::{init_field, Sequence};
use splat4d::pipeline::{export_cameras, export_composed, ExportConfig};
use splat4d::scene::{compose_scene, init_cloud, RigidPose, SceneAsset, Vec3};

fn main() -> splat4d::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "composed".into()));

    // Random untrained fields stand in for learned motion.
    let mut dancer = SceneAsset::still(init_cloud(150, 0.3, 1)?);
    dancer.motion = Sequence::single(init_field(32, 3, 5)?);
    let mut drummer = SceneAsset::still(init_cloud(150, 0.3, 2)?);
    drummer.motion = Sequence::single(init_field(32, 3, 6)?);
    drummer.pose = RigidPose::new(
        Rotation3::from_axis_angle(&Vector3::y_axis(), 0.8),
        Vec3::new(0.6, 0.0, 0.0),
        0.7,
    )?;
    drummer.time_offset = 0.25;
    let assets = [dancer, drummer];

    for tau in [0.0, 0.5, 1.0] {
        let scene = compose_scene(&assets, tau)?;
        let ranges: Vec<String> = scene.provenance.iter().map(|r| format!("{r:?}")).collect();
        println!("tau {tau:.1}: {} Gaussians, assets at {}", scene.cloud.len(), ranges.join(" "));
    }

    let cfg = ExportConfig {
        width: 128,
        height: 96,
        ..ExportConfig::default()
    };
    let times: Vec<f64> = (0..12).map(|i| 1.25 * i as f64 / 11.0).collect();
    let cameras = export_cameras(&cfg, times.len(), 60.0)?;
    let manifest = export_composed(&assets, &cameras, &times, &out, &cfg)?;
    println!("wrote {} frames to {}", manifest.frames.len(), out.display());
    Ok(())
}
