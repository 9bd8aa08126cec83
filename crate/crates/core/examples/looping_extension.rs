//! Extends a learned motion with a second segment that returns to the start.
//!
//! The first segment learns a swing away from rest; the looping extension
//! follows the target back, and its last frame is pinned to the first.
//!
//! cargo run --release --example looping_extension -- [iterations]

use splat4d::deform::Side;
use splat4d::guidance::{AnalyticProvider, SceneTarget, Target};
use splat4d::pipeline::{extend_sequence, run_stage2, Background, Config, Silent};
use splat4d::scene::{init_cloud_with, InitOptions, Vec3};

// Out and back over the 1.5 time units two segments cover.
fn offset(u: f64) -> Vec3 {
    let s = (2.0 * std::f64::consts::PI * u / 3.0).sin();
    Vec3::new(0.25 * s, 0.0, 0.1 * s)
}

fn max_gap(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

fn main() -> splat4d::Result<()> {
    let iterations: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(600);
    let cloud = init_cloud_with(
        20,
        0.35,
        11,
        &InitOptions {
            initial_opacity: 0.8,
            ..InitOptions::default()
        },
    )?;
    let base = cloud.positions.clone();
    let target = SceneTarget::new(cloud.clone()).with_motion(move |u| base.iter().map(|p| p + offset(u)).collect());

    let mut config = Config::default();
    let s2 = &mut config.stage2;
    s2.iterations = iterations;
    s2.cameras.width = 48;
    s2.cameras.height = 32;
    s2.weights.motion_amp = 1.0;
    s2.weights.negative = 0.0;
    s2.lambda_jsd = 0.0;
    s2.field_width = 64;
    s2.background = Background::White;
    let provider = AnalyticProvider::with_schedule(Target::Scene(target), config.noise_schedule()?);

    let first = run_stage2(&cloud, &config, &provider, &provider, &mut Silent)?;
    let looped = extend_sequence(&first, &config, &provider, &provider, true, &mut Silent)?;
    let seq = &looped.sequence;
    println!("{} segments covering u in [0, {:.2}]", seq.len(), looped.duration());

    let seam = seq.start(1);
    let left = seq.positions_at_from(&cloud.positions, seam, Side::Left)?;
    let right = seq.positions_at_from(&cloud.positions, seam, Side::Right)?;
    println!("seam at u = {seam}: left/right gap {:.1e}", max_gap(&left, &right));
    let end = looped.positions_at(looped.duration())?;
    println!("last frame vs first frame: {:.1e}", max_gap(&end, &cloud.positions));
    for i in 0..=6 {
        let u = looped.duration() * i as f64 / 6.0;
        let want: Vec<Vec3> = cloud.positions.iter().map(|p| p + offset(u)).collect();
        println!("u {u:.2}  distance to target motion {:.4}", max_gap(&looped.positions_at(u)?, &want));
    }
    Ok(())
}
