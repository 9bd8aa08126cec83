use std::path::Path;
use std::str::FromStr;

use crate::distill::{DistillMode, GuidanceWeights, NoiseSchedule};
use crate::error::{Error, Result};
use crate::schedules::{DensifyConfig, FpsDistribution, Stage1Cameras, Stage2Cameras, TimeRange, TimeSchedules};

/// Background colour policy for training renders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Background {
    White,
    Black,
    /// Black or white, drawn per iteration.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Config {
    pub iterations: u64,
    /// Multiview groups per iteration, four views each.
    pub groups: usize,
    pub init_gaussians: usize,
    pub init_radius: f64,
    pub lr_position_init: f64,
    pub lr_position_final: f64,
    pub lr_position_steps: u64,
    pub lr_rgb: f64,
    pub lr_sh: f64,
    pub lr_opacity: f64,
    pub lr_scaling: f64,
    pub weights: GuidanceWeights,
    pub mode: DistillMode,
    pub cameras: Stage1Cameras,
    pub background: Background,
    pub prompt: String,
    pub negative_prompt: String,
    pub densify: DensifyConfig,
    pub checkpoint_every: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            groups: 4,
            init_gaussians: 1000,
            init_radius: 0.3,
            lr_position_init: 0.001,
            lr_position_final: 0.0002,
            lr_position_steps: 500,
            lr_rgb: 0.01,
            lr_sh: 0.0005,
            lr_opacity: 0.05,
            lr_scaling: 0.005,
            weights: GuidanceWeights {
                video: 0.0,
                image: 0.4,
                multiview: 1.6,
                view: 3.0,
                negative: 0.8,
                motion_amp: 1.0,
            },
            mode: DistillMode::Csd,
            cameras: Stage1Cameras::default(),
            background: Background::Random,
            prompt: String::new(),
            negative_prompt: String::new(),
            densify: DensifyConfig::default(),
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Config {
    pub iterations: u64,
    /// Camera paths whose gradients are accumulated per update.
    pub paths_per_update: usize,
    /// Frames of each path also scored by the image model (the middle one plus random others).
    pub image_frames: usize,
    pub lr_field: f64,
    pub field_width: usize,
    pub field_depth: usize,
    pub gate_exponent: f64,
    pub knn: usize,
    pub lambda_rigidity: f64,
    pub lambda_jsd: f64,
    pub lambda_interp: f64,
    pub weights: GuidanceWeights,
    pub mode: DistillMode,
    pub cameras: Stage2Cameras,
    pub fps: FpsDistribution,
    pub background: Background,
    pub prompt: String,
    pub negative_prompt: String,
    pub overlap: f64,
    pub checkpoint_every: u64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            paths_per_update: 4,
            image_frames: 4,
            lr_field: 0.001,
            field_width: 128,
            field_depth: 5,
            gate_exponent: 0.35,
            knn: 40,
            lambda_rigidity: 100.0,
            lambda_jsd: 30.0,
            lambda_interp: 1.0,
            weights: GuidanceWeights {
                video: 1.0,
                image: 1.0,
                multiview: 0.0,
                view: 0.0,
                negative: 0.8,
                motion_amp: 24.0,
            },
            mode: DistillMode::Csd,
            cameras: Stage2Cameras::default(),
            fps: FpsDistribution::default(),
            background: Background::White,
            prompt: String::new(),
            negative_prompt: String::new(),
            overlap: 0.5,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportConfig {
    pub width: u32,
    pub height: u32,
    /// Pad frames with the background colour to a square.
    pub pad_square: bool,
    pub png: bool,
    pub fov: f64,
    pub distance: f64,
    pub elevation: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 320,
            pad_square: true,
            png: false,
            fov: 50.0,
            distance: 2.0,
            elevation: 15.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 8.5e-4,
            beta_end: 1.2e-2,
        }
    }
}

/// Every tunable constant of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub times: TimeSchedules,
    pub noise: NoiseConfig,
    pub export: ExportConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Default,
    /// Shorter motion stage.
    Ablation,
    /// Continued optimization of an existing asset: uncapped densification,
    /// rates divided by five, higher static-stage resolution.
    Finetune,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Profile::Default),
            "ablation" => Ok(Profile::Ablation),
            "finetune" => Ok(Profile::Finetune),
            _ => Err(Error::Config(format!("unknown profile {s:?}"))),
        }
    }
}

trait Value: Sized {
    fn parse(s: &str) -> Option<Self>;
    fn show(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(f64, u64, u32, usize, bool);

impl Value for String {
    fn parse(s: &str) -> Option<Self> {
        let s = s.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(s);
        Some(s.to_string())
    }
    fn show(&self) -> String {
        format!("\"{self}\"")
    }
}

impl Value for (f64, f64) {
    fn parse(s: &str) -> Option<Self> {
        let (a, b) = s.split_once(',')?;
        let (a, b) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        (a <= b).then_some((a, b))
    }
    fn show(&self) -> String {
        format!("{}, {}", self.0, self.1)
    }
}

impl<T: Value> Value for Vec<T> {
    fn parse(s: &str) -> Option<Self> {
        s.split(',').map(|p| T::parse(p.trim())).collect()
    }
    fn show(&self) -> String {
        self.iter().map(T::show).collect::<Vec<_>>().join(", ")
    }
}

impl Value for DistillMode {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "csd" => Some(DistillMode::Csd),
            "sds" => Some(DistillMode::Sds),
            _ => None,
        }
    }
    fn show(&self) -> String {
        match self {
            DistillMode::Csd => "csd",
            DistillMode::Sds => "sds",
        }
        .to_string()
    }
}

impl Value for Background {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "white" => Some(Background::White),
            "black" => Some(Background::Black),
            "random" => Some(Background::Random),
            _ => None,
        }
    }
    fn show(&self) -> String {
        match self {
            Background::White => "white",
            Background::Black => "black",
            Background::Random => "random",
        }
        .to_string()
    }
}

fn set<T: Value>(slot: &mut T, key: &str, raw: &str) -> Result<()> {
    *slot = T::parse(raw).ok_or_else(|| Error::Config(format!("bad value {raw:?} for {key}")))?;
    Ok(())
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        impl Config {
            /// Sets one `key = value` entry.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => set(&mut self.$($field).+, key, value),)*
                    _ => Err(Error::Config(format!("unknown key {key:?}"))),
                }
            }

            /// All keys with their current values, in file order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$($field).+.show()),)*]
            }
        }
    };
}

config_keys! {
    "seed" => seed;
    "stage1.iterations" => stage1.iterations;
    "stage1.groups" => stage1.groups;
    "stage1.init_gaussians" => stage1.init_gaussians;
    "stage1.init_radius" => stage1.init_radius;
    "stage1.lr_position_init" => stage1.lr_position_init;
    "stage1.lr_position_final" => stage1.lr_position_final;
    "stage1.lr_position_steps" => stage1.lr_position_steps;
    "stage1.lr_rgb" => stage1.lr_rgb;
    "stage1.lr_sh" => stage1.lr_sh;
    "stage1.lr_opacity" => stage1.lr_opacity;
    "stage1.lr_scaling" => stage1.lr_scaling;
    "stage1.w_3d" => stage1.weights.multiview;
    "stage1.w_im" => stage1.weights.image;
    "stage1.w_vg" => stage1.weights.view;
    "stage1.w_neg" => stage1.weights.negative;
    "stage1.mode" => stage1.mode;
    "stage1.fov" => stage1.cameras.fov;
    "stage1.elevation" => stage1.cameras.elevation;
    "stage1.azimuth" => stage1.cameras.azimuth;
    "stage1.distance_scale" => stage1.cameras.scale;
    "stage1.width" => stage1.cameras.width;
    "stage1.height" => stage1.cameras.height;
    "stage1.background" => stage1.background;
    "stage1.prompt" => stage1.prompt;
    "stage1.negative_prompt" => stage1.negative_prompt;
    "stage1.checkpoint_every" => stage1.checkpoint_every;
    "densify.grad_threshold" => stage1.densify.grad_threshold;
    "densify.prune_opacity" => stage1.densify.prune_opacity;
    "densify.interval" => stage1.densify.interval;
    "densify.warmup" => stage1.densify.warmup;
    "densify.max_gaussians" => stage1.densify.max_gaussians;
    "densify.enforce_cap" => stage1.densify.enforce_cap;
    "densify.opacity_reset_interval" => stage1.densify.opacity_reset_interval;
    "densify.opacity_reset_cap" => stage1.densify.opacity_reset_cap;
    "densify.scene_extent" => stage1.densify.scene_extent;
    "densify.split_fraction" => stage1.densify.split_fraction;
    "densify.split_scale_divisor" => stage1.densify.split_scale_divisor;
    "stage2.iterations" => stage2.iterations;
    "stage2.paths_per_update" => stage2.paths_per_update;
    "stage2.image_frames" => stage2.image_frames;
    "stage2.lr_field" => stage2.lr_field;
    "stage2.field_width" => stage2.field_width;
    "stage2.field_depth" => stage2.field_depth;
    "stage2.gate_exponent" => stage2.gate_exponent;
    "stage2.knn" => stage2.knn;
    "stage2.lambda_rigidity" => stage2.lambda_rigidity;
    "stage2.lambda_jsd" => stage2.lambda_jsd;
    "stage2.lambda_interp" => stage2.lambda_interp;
    "stage2.w_vid" => stage2.weights.video;
    "stage2.w_im" => stage2.weights.image;
    "stage2.w_neg" => stage2.weights.negative;
    "stage2.w_ma" => stage2.weights.motion_amp;
    "stage2.mode" => stage2.mode;
    "stage2.fov" => stage2.cameras.fov;
    "stage2.elevation" => stage2.cameras.elevation;
    "stage2.azimuth" => stage2.cameras.azimuth;
    "stage2.distance" => stage2.cameras.distance;
    "stage2.elevation_offset" => stage2.cameras.elevation_offset;
    "stage2.azimuth_offset" => stage2.cameras.azimuth_offset;
    "stage2.frames" => stage2.cameras.frames;
    "stage2.width" => stage2.cameras.width;
    "stage2.height" => stage2.cameras.height;
    "stage2.fps_values" => stage2.fps.values;
    "stage2.fps_probabilities" => stage2.fps.probabilities;
    "stage2.fps_span" => stage2.fps.span;
    "stage2.background" => stage2.background;
    "stage2.prompt" => stage2.prompt;
    "stage2.negative_prompt" => stage2.negative_prompt;
    "stage2.overlap" => stage2.overlap;
    "stage2.checkpoint_every" => stage2.checkpoint_every;
    "time.stage1_image_start" => times.stage1_image.start;
    "time.stage1_image_end" => times.stage1_image.end;
    "time.stage1_image_decay" => times.stage1_image.decay_iters;
    "time.stage1_multiview_start" => times.stage1_multiview.start;
    "time.stage1_multiview_end" => times.stage1_multiview.end;
    "time.stage1_multiview_decay" => times.stage1_multiview.decay_iters;
    "time.stage2_start" => times.stage2.start;
    "time.stage2_end" => times.stage2.end;
    "time.stage2_decay" => times.stage2.decay_iters;
    "noise.steps" => noise.steps;
    "noise.beta_start" => noise.beta_start;
    "noise.beta_end" => noise.beta_end;
    "export.width" => export.width;
    "export.height" => export.height;
    "export.pad_square" => export.pad_square;
    "export.png" => export.png;
    "export.fov" => export.fov;
    "export.distance" => export.distance;
    "export.elevation" => export.elevation;
}

impl Config {
    pub fn for_profile(profile: Profile) -> Self {
        let mut c = Config::default();
        match profile {
            Profile::Default => {}
            Profile::Ablation => c.stage2.iterations = 4000,
            Profile::Finetune => {
                let s1 = &mut c.stage1;
                s1.iterations = 7000;
                s1.densify.enforce_cap = false;
                for lr in [
                    &mut s1.lr_position_init,
                    &mut s1.lr_position_final,
                    &mut s1.lr_rgb,
                    &mut s1.lr_sh,
                    &mut s1.lr_opacity,
                    &mut s1.lr_scaling,
                ] {
                    *lr *= 0.2;
                }
                s1.cameras.width = 512;
                s1.cameras.height = 512;
                c.stage2.iterations = 3000;
                c.stage2.lr_field *= 0.2;
            }
        }
        c
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        self.validate()
    }

    pub fn load(path: &Path, profile: Profile) -> Result<Self> {
        let mut c = Self::for_profile(profile);
        c.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(c)
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::scaled_linear(self.noise.steps, self.noise.beta_start, self.noise.beta_end)
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let s1 = &self.stage1;
        let s2 = &self.stage2;
        if s1.iterations == 0 || s2.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        let rates = [
            s1.lr_position_init,
            s1.lr_position_final,
            s1.lr_rgb,
            s1.lr_sh,
            s1.lr_opacity,
            s1.lr_scaling,
            s2.lr_field,
        ];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("learning rates must be positive");
        }
        if s1.groups == 0 || s2.paths_per_update == 0 || s2.cameras.frames < 2 {
            return bad("batch sizes must be positive and paths need at least two frames");
        }
        if s2.image_frames == 0 || s2.image_frames > s2.cameras.frames {
            return bad("image sub-batch must be between 1 and the frame count");
        }
        if s2.fps.values.is_empty() || s2.fps.values.len() != s2.fps.probabilities.len() {
            return bad("fps values and probabilities must pair up");
        }
        if (s2.fps.probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9 || s2.fps.values.contains(&0) {
            return bad("fps probabilities must sum to one over positive rates");
        }
        if !(s2.overlap > 0.0 && s2.overlap < 1.0) {
            return bad("overlap must lie in (0, 1)");
        }
        s1.weights.validate()?;
        s2.weights.validate()?;
        let ranges: [&TimeRange; 3] = [&self.times.stage1_image, &self.times.stage1_multiview, &self.times.stage2];
        for r in ranges {
            let ok = |(a, b): (f64, f64)| (0.0..=1.0).contains(&a) && a <= b && b <= 1.0;
            if !ok(r.start) || !ok(r.end) {
                return bad("diffusion time ranges must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut c = Config::for_profile(Profile::Finetune);
        c.stage2.prompt = "a dog # wagging".into();
        let mut d = Config::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn comments_and_errors() {
        let mut c = Config::default();
        c.apply_text("# header\nstage2.w_ma = 2.5  # amplify\n\nseed=9").unwrap();
        assert_eq!(c.stage2.weights.motion_amp, 2.5);
        assert_eq!(c.seed, 9);
        assert!(matches!(c.apply_text("nope = 1"), Err(Error::Config(_))));
        assert!(matches!(c.apply_text("seed = x"), Err(Error::Config(_))));
        assert!(matches!(c.apply_text("stage1.lr_rgb = 0"), Err(Error::Config(_))));
    }

    #[test]
    fn profiles() {
        assert_eq!(Config::for_profile(Profile::Ablation).stage2.iterations, 4000);
        let f = Config::for_profile(Profile::Finetune);
        assert!(!f.stage1.densify.enforce_cap);
        assert!((f.stage1.lr_rgb - 0.002).abs() < 1e-15);
        assert_eq!(f.stage1.cameras.width, 512);
    }
}
