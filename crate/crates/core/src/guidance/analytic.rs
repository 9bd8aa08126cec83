use std::sync::Arc;

use super::noise::standard_normal;
use super::{FrameMeta, ScoreProvider, ScoreRequest};
use crate::distill::{images_to_model, NoiseSchedule, ScoreBatch, Tensor4};
use crate::error::{invalid, Result};
use crate::render::{render_with, Image, RenderOptions};
use crate::scene::{GaussianCloud, Vec3};

type Motion = Arc<dyn Fn(f64) -> Vec<Vec3> + Send + Sync>;

/// A known cloud, optionally animated, rendered on demand at each request frame's camera and time.
#[derive(Clone)]
pub struct SceneTarget {
    cloud: GaussianCloud,
    motion: Option<Motion>,
    options: RenderOptions,
}

impl std::fmt::Debug for SceneTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SceneTarget")
            .field("gaussians", &self.cloud.len())
            .field("animated", &self.motion.is_some())
            .finish()
    }
}

impl SceneTarget {
    pub fn new(cloud: GaussianCloud) -> Self {
        Self {
            cloud,
            motion: None,
            options: RenderOptions::default(),
        }
    }

    /// `positions(tau)` gives the absolute Gaussian positions at sequence time `tau`.
    pub fn with_motion(mut self, positions: impl Fn(f64) -> Vec<Vec3> + Send + Sync + 'static) -> Self {
        self.motion = Some(Arc::new(positions));
        self
    }

    pub fn cloud(&self) -> &GaussianCloud {
        &self.cloud
    }

    pub fn render(&self, meta: &FrameMeta) -> Image {
        let out = match &self.motion {
            Some(m) => render_with(&self.cloud.with_positions(m(meta.tau)), &meta.camera, &self.options),
            None => render_with(&self.cloud, &meta.camera, &self.options),
        };
        out.image
    }

    /// Target frames in model range on the `f32` grid.
    pub fn frames(&self, meta: &[FrameMeta]) -> Tensor4 {
        let images: Vec<Image> = meta.iter().map(|m| self.render(m)).collect();
        images_to_model(&images).quantized()
    }
}

#[derive(Clone, Debug)]
pub enum Target {
    /// Fixed reference frames in model range; must match the request shape.
    Fixed(Tensor4),
    Scene(SceneTarget),
}

/// Oracle teacher whose data distribution is a point mass at the target.
///
/// For `z = α x + σ ε` it returns `eps_cond = (z − α·target)/σ` and `eps_uncond = ε`,
/// so `eps_cond − eps_uncond = (α/σ)(x − target)`. Negative and augmented
/// prompts, when requested, score as the unconditional and conditional model.
#[derive(Clone, Debug)]
pub struct AnalyticProvider {
    target: Target,
    schedule: NoiseSchedule,
}

impl AnalyticProvider {
    pub fn new(target: Target) -> Self {
        Self::with_schedule(target, NoiseSchedule::default())
    }

    pub fn with_schedule(target: Target, schedule: NoiseSchedule) -> Self {
        Self { target, schedule }
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn target_frames(&self, request: &ScoreRequest) -> Result<Tensor4> {
        match &self.target {
            Target::Fixed(t) => {
                if t.shape != request.frames.shape {
                    return Err(invalid(format!(
                        "target {:?} does not match request {:?}",
                        t.shape, request.frames.shape
                    )));
                }
                Ok(t.clone().quantized())
            }
            Target::Scene(s) => {
                if request.meta.len() != request.frames.frames() {
                    return Err(invalid("scene target needs per-frame metadata"));
                }
                let t = s.frames(&request.meta);
                if t.shape != request.frames.shape {
                    return Err(invalid("scene target rendered at a different resolution"));
                }
                Ok(t)
            }
        }
    }
}

impl ScoreProvider for AnalyticProvider {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreBatch> {
        request.validate()?;
        self.schedule.check_step(request.t)?;
        let target = self.target_frames(request)?;
        Ok(analytic_scores(request, &target, &self.schedule))
    }
}

pub(crate) fn analytic_scores(request: &ScoreRequest, target: &Tensor4, schedule: &NoiseSchedule) -> ScoreBatch {
    let shape = request.frames.shape;
    let eps = Tensor4::from_vec(shape, standard_normal(request.seed, request.frames.data.len())).expect("sized");
    let (a, s) = (schedule.alpha(request.t), schedule.sigma(request.t));
    let data = request
        .frames
        .data
        .iter()
        .zip(&target.data)
        .zip(&eps.data)
        .map(|((&x, &y), &e)| {
            let x = x as f32 as f64;
            let z = a * x + s * e;
            (z - a * y) / s
        })
        .collect();
    let cond = Tensor4 { shape, data }.quantized();
    ScoreBatch {
        eps_neg: request.negative_prompt.as_ref().map(|_| eps.clone()),
        eps_aug: request.augmented_prompt.as_ref().map(|_| cond.clone()),
        eps_uncond: eps.clone(),
        eps_cond: cond,
        eps_used: Some(eps),
    }
}

/// Returns zeros for every tensor; drives the engine to zero updates.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroProvider;

impl ScoreProvider for ZeroProvider {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreBatch> {
        request.validate()?;
        let z = Tensor4::zeros(request.frames.shape);
        Ok(ScoreBatch {
            eps_neg: request.negative_prompt.as_ref().map(|_| z.clone()),
            eps_aug: request.augmented_prompt.as_ref().map(|_| z.clone()),
            eps_uncond: z.clone(),
            eps_used: Some(z.clone()),
            eps_cond: z,
        })
    }
}
