//! Renders a random cloud from an orbit of cameras and writes PPM/PNG frames.
//!
//! Also compares the tiled renderer against its exact mode on the same views.
//!
//! cargo run --release --example render_turntable -- [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use splat4d::pipeline::{export_cameras, export_frames, ExportConfig, SequenceSpec};
use splat4d::render::{render_with, RenderOptions};
use splat4d::scene::{init_cloud_with, InitOptions};

fn main() -> splat4d::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "turntable".into()));
    let cloud = init_cloud_with(
        400,
        0.5,
        3,
        &InitOptions {
            initial_opacity: 0.4,
            ..InitOptions::default()
        },
    )?;
    let cfg = ExportConfig {
        width: 160,
        height: 120,
        png: true,
        ..ExportConfig::default()
    };
    let cameras = export_cameras(&cfg, 24, 345.0)?;

    let start = Instant::now();
    let spec = SequenceSpec::still(cloud.clone());
    let manifest = export_frames(&spec, &cameras, &vec![0.0; cameras.len()], &out, &cfg)?;
    println!("{} frames in {:.1?} -> {}", manifest.frames.len(), start.elapsed(), out.display());

    let mut worst = 0.0f64;
    for cam in &cameras {
        let tiled = render_with(&cloud, cam, &RenderOptions::default()).image;
        let exact = render_with(&cloud, cam, &RenderOptions::exact()).image;
        worst = worst.max(tiled.data.iter().flatten().zip(exact.data.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    println!("largest tiled vs exact pixel difference: {worst:.2e}");
    Ok(())
}
