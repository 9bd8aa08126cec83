use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::guidance::noise::derive_seed;
use crate::guidance::ModelKind;
use crate::scene::Camera;

/// Independent generator for one `(seed, iteration, stream)` triple.
pub fn sampler_rng(seed: u64, iteration: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[iteration, stream]))
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Frame-rate distribution and the span of a clip in sequence time.
#[derive(Clone, Debug, PartialEq)]
pub struct FpsDistribution {
    pub values: Vec<u32>,
    pub probabilities: Vec<f64>,
    /// Clip duration in `τ` units is `span / fps`.
    pub span: f64,
    pub frames: usize,
}

impl Default for FpsDistribution {
    fn default() -> Self {
        Self {
            values: vec![4, 8, 12],
            probabilities: vec![0.81, 0.14, 0.05],
            span: 3.0,
            frames: 16,
        }
    }
}

/// Draws a frame rate and `frames` uniformly spaced times inside `[0, 1]`.
pub fn sample_fps_and_times(dist: &FpsDistribution, rng: &mut impl Rng) -> (u32, Vec<f64>) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut fps = *dist.values.last().expect("non-empty fps set");
    for (v, p) in dist.values.iter().zip(&dist.probabilities) {
        acc += p;
        if u < acc {
            fps = *v;
            break;
        }
    }
    let dur = (dist.span / fps as f64).min(1.0);
    let start = (1.0 - dur) * rng.random::<f64>();
    let last = (dist.frames.max(2) - 1) as f64;
    let times = (0..dist.frames)
        .map(|i| (start + dur * i as f64 / last).min(1.0))
        .collect();
    (fps, times)
}

/// Orbit parameters of a camera looking at the origin; angles in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitSample {
    pub fov: f64,
    pub elevation: f64,
    pub azimuth: f64,
    pub distance: f64,
}

impl OrbitSample {
    pub fn camera(&self, width: u32, height: u32) -> Camera {
        Camera::orbit(self.elevation, self.azimuth, self.distance, self.fov, width, height)
            .expect("sampled orbit is a valid camera")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Cameras {
    pub fov: (f64, f64),
    pub elevation: (f64, f64),
    pub azimuth: (f64, f64),
    /// Distance is `s / tan(fov / 2)` with `s` drawn from this range.
    pub scale: (f64, f64),
    pub width: u32,
    pub height: u32,
}

impl Default for Stage1Cameras {
    fn default() -> Self {
        Self {
            fov: (15.0, 60.0),
            elevation: (10.0, 45.0),
            azimuth: (0.0, 360.0),
            scale: (0.8, 1.0),
            width: 256,
            height: 256,
        }
    }
}

pub fn sample_camera_stage1(dist: &Stage1Cameras, rng: &mut impl Rng) -> OrbitSample {
    let fov = uniform(rng, dist.fov);
    let elevation = uniform(rng, dist.elevation);
    let azimuth = uniform(rng, dist.azimuth);
    let s = uniform(rng, dist.scale);
    OrbitSample {
        fov,
        elevation,
        azimuth,
        distance: s / (fov / 2.0).to_radians().tan(),
    }
}

/// Four views sharing elevation, fov and distance at azimuths `+0, +90, +180, +270`.
pub fn multiview_group(base: &OrbitSample) -> [OrbitSample; 4] {
    std::array::from_fn(|k| OrbitSample {
        azimuth: (base.azimuth + 90.0 * k as f64).rem_euclid(360.0),
        ..*base
    })
}

/// Directional text appended to the image-model prompt for a view.
pub fn view_suffix(azimuth: f64, elevation: f64) -> &'static str {
    let a = azimuth.rem_euclid(360.0);
    if a <= 30.0 || a >= 330.0 {
        ", front view"
    } else if (150.0..=210.0).contains(&a) {
        ", back view"
    } else if elevation >= 60.0 {
        ", overhead view"
    } else {
        ", side view"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Cameras {
    pub fov: (f64, f64),
    pub elevation: (f64, f64),
    pub azimuth: (f64, f64),
    pub distance: (f64, f64),
    pub elevation_offset: (f64, f64),
    pub azimuth_offset: (f64, f64),
    pub frames: usize,
    pub width: u32,
    pub height: u32,
}

impl Default for Stage2Cameras {
    fn default() -> Self {
        Self {
            fov: (40.0, 70.0),
            elevation: (-10.0, 45.0),
            azimuth: (0.0, 360.0),
            distance: (1.5, 3.0),
            elevation_offset: (-13.5, 30.0),
            azimuth_offset: (-45.0, 45.0),
            frames: 16,
            width: 256,
            height: 160,
        }
    }
}

/// A camera path whose elevation and azimuth ramp linearly across the frames.
pub fn sample_camera_path_stage2(dist: &Stage2Cameras, rng: &mut impl Rng) -> Vec<OrbitSample> {
    let fov = uniform(rng, dist.fov);
    let elv = uniform(rng, dist.elevation);
    let azm = uniform(rng, dist.azimuth);
    let distance = uniform(rng, dist.distance);
    let elv_off = uniform(rng, dist.elevation_offset);
    let azm_off = uniform(rng, dist.azimuth_offset);
    let last = (dist.frames.max(2) - 1) as f64;
    (0..dist.frames)
        .map(|i| {
            let r = i as f64 / last;
            OrbitSample {
                fov,
                elevation: elv + elv_off * r,
                azimuth: azm + azm_off * r,
                distance,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

/// Uniform range whose endpoints move linearly from `start` to `end` over `decay_iters`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeRange {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub decay_iters: u64,
}

impl TimeRange {
    pub fn fixed(lo: f64, hi: f64) -> Self {
        Self {
            start: (lo, hi),
            end: (lo, hi),
            decay_iters: 0,
        }
    }

    pub fn bounds(&self, iteration: u64) -> (f64, f64) {
        let r = if self.decay_iters == 0 {
            1.0
        } else {
            (iteration as f64 / self.decay_iters as f64).min(1.0)
        };
        (
            self.start.0 + (self.end.0 - self.start.0) * r,
            self.start.1 + (self.end.1 - self.start.1) * r,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSchedules {
    pub stage1_image: TimeRange,
    pub stage1_multiview: TimeRange,
    pub stage2: TimeRange,
}

impl Default for TimeSchedules {
    fn default() -> Self {
        Self {
            stage1_image: TimeRange {
                start: (0.02, 0.98),
                end: (0.02, 0.5),
                decay_iters: 6000,
            },
            stage1_multiview: TimeRange {
                start: (0.98, 0.98),
                end: (0.02, 0.5),
                decay_iters: 8000,
            },
            stage2: TimeRange::fixed(0.02, 0.98),
        }
    }
}

impl TimeSchedules {
    pub fn range(&self, stage: Stage, kind: ModelKind) -> &TimeRange {
        match (stage, kind) {
            (Stage::One, ModelKind::Image) => &self.stage1_image,
            (Stage::One, ModelKind::Multiview) => &self.stage1_multiview,
            _ => &self.stage2,
        }
    }
}

/// Continuous diffusion time in `[0, 1]`.
pub fn sample_diffusion_time(
    schedules: &TimeSchedules,
    iteration: u64,
    stage: Stage,
    kind: ModelKind,
    rng: &mut impl Rng,
) -> f64 {
    let (lo, hi) = schedules.range(stage, kind).bounds(iteration);
    let u: f64 = rng.random();
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * u
    }
}
