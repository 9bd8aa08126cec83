//! Static stage on a known target: recovers a 10-Gaussian scene from an
//! analytic multiview teacher that renders the scene at the requested cameras.
//!
//! cargo run --release --example static_reconstruction -- [iterations]

use std::time::Instant;

use splat4d::guidance::{AnalyticProvider, SceneTarget, Target};
use splat4d::pipeline::{run_stage1, Background, Config, MetricsRecord};
use splat4d::render::render;
use splat4d::scene::{init_cloud_with, Camera, InitOptions};

fn main() -> splat4d::Result<()> {
    let iterations: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let truth = init_cloud_with(
        10,
        0.4,
        3,
        &InitOptions {
            initial_opacity: 0.9,
            ..InitOptions::default()
        },
    )?;

    let mut config = Config::default();
    let s1 = &mut config.stage1;
    s1.iterations = iterations;
    s1.init_gaussians = 40;
    s1.init_radius = 0.5;
    s1.cameras.width = 48;
    s1.cameras.height = 48;
    s1.background = Background::Random;
    s1.weights.view = 0.0;
    s1.weights.negative = 0.0;
    s1.densify.interval = 500;
    s1.densify.max_gaussians = 120;
    config.validate()?;

    let provider = AnalyticProvider::with_schedule(Target::Scene(SceneTarget::new(truth.clone())), config.noise_schedule()?);
    let start = Instant::now();
    let mut log: Vec<MetricsRecord> = Vec::new();
    let cloud = run_stage1(&config, &provider, &provider, None, &mut log)?;
    println!("{iterations} iterations in {:.1?}, {} Gaussians", start.elapsed(), cloud.len());

    for azimuth in [0.0, 90.0, 180.0, 270.0] {
        let cam = Camera::orbit(15.0, azimuth, 2.5, 40.0, 64, 64)?.with_background([1.0; 3]);
        let psnr = render(&cloud, &cam).image.psnr(&render(&truth, &cam).image);
        println!("azimuth {azimuth:5.1}  psnr {psnr:6.2} dB");
    }
    Ok(())
}
