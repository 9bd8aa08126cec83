use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use super::optim::{position_lr, CloudOptimizer, CloudRates};
use super::{Background, Config, MetricsRecord, Observer, SequenceSpec};
use crate::distill::{assemble_stage1_gradient, images_to_model, model_grad_to_images, NoiseSchedule, ScoreBatch};
use crate::error::Result;
use crate::guidance::noise::derive_seed;
use crate::guidance::{FrameMeta, ModelKind, ScoreProvider, ScoreRequest};
use crate::render::{render_backward, render_with, CloudGrads, RenderOptions};
use crate::scene::{init_cloud, Camera, GaussianCloud};
use crate::schedules::{
    densify_prune_step, multiview_group, sample_camera_stage1, sample_diffusion_time, sampler_rng, view_suffix,
    DensifyStats, OrbitSample, Stage,
};

const STREAM: u64 = 1;

pub(crate) fn background(policy: Background, rng: &mut impl Rng) -> [f64; 3] {
    match policy {
        Background::White => [1.0; 3],
        Background::Black => [0.0; 3],
        Background::Random => {
            if rng.random::<bool>() {
                [1.0; 3]
            } else {
                [0.0; 3]
            }
        }
    }
}

/// Static synthesis: optimizes a cloud with multiview and image guidance.
///
/// Starts from `init` when given (fine-tuning), otherwise from a random cloud.
pub fn run_stage1(
    config: &Config,
    multiview: &dyn ScoreProvider,
    image: &dyn ScoreProvider,
    init: Option<GaussianCloud>,
    observer: &mut dyn Observer,
) -> Result<GaussianCloud> {
    config.validate()?;
    let s1 = &config.stage1;
    let schedule = config.noise_schedule()?;
    let mut cloud = match init {
        Some(c) => c,
        None => init_cloud(s1.init_gaussians, s1.init_radius, derive_seed(config.seed, &[STREAM]))?,
    };
    cloud.validate()?;
    cloud.quantize();
    let mut optimizer = CloudOptimizer::new(cloud.len());
    let mut stats = DensifyStats::new(cloud.len());

    for it in 1..=s1.iterations {
        let mut rng = sampler_rng(config.seed, it, STREAM);
        let bg = background(s1.background, &mut rng);
        let t_mv = sample_diffusion_time(&config.times, it - 1, Stage::One, ModelKind::Multiview, &mut rng);
        let t_im = sample_diffusion_time(&config.times, it - 1, Stage::One, ModelKind::Image, &mut rng);
        let mut total = CloudGrads::zeros(cloud.len());
        let mut score_sq = 0.0;

        for g in 0..s1.groups {
            let orbit = sample_camera_stage1(&s1.cameras, &mut rng);
            let ctx = GroupContext {
                config,
                schedule: &schedule,
                iteration: it,
                group: g as u64,
                t_mv,
                t_im,
                background: bg,
            };
            match score_group(&ctx, &cloud, &orbit, multiview, image) {
                Ok((grads, sq)) => {
                    for cg in &grads {
                        stats.observe(cg);
                        total.accumulate(cg);
                    }
                    score_sq += sq;
                }
                Err(e) => {
                    observer.checkpoint(it - 1, &SequenceSpec::still(cloud.clone()))?;
                    return Err(e);
                }
            }
        }

        let rates = CloudRates {
            position: position_lr(s1.lr_position_init, s1.lr_position_final, s1.lr_position_steps, it - 1),
            rgb: s1.lr_rgb,
            sh: s1.lr_sh,
            opacity: s1.lr_opacity,
            scaling: s1.lr_scaling,
        };
        optimizer.step(&mut cloud, &total, &rates);
        let outcome = densify_prune_step(&mut cloud, &mut stats, it, &s1.densify, &mut rng);
        if outcome.origins.len() != outcome.origins.iter().flatten().count()
            || outcome.origins.iter().enumerate().any(|(i, o)| *o != Some(i))
        {
            optimizer.remap(&outcome.origins);
        }
        if cloud.is_empty() {
            return Err(crate::error::invalid("every Gaussian was pruned"));
        }

        let mut loss = BTreeMap::new();
        loss.insert("score", score_sq / s1.groups as f64);
        observer.iteration(&MetricsRecord {
            iter: it,
            loss,
            n: cloud.len(),
            t: t_mv,
            fps: None,
        })?;
        if s1.checkpoint_every > 0 && it % s1.checkpoint_every == 0 {
            observer.checkpoint(it, &SequenceSpec::still(cloud.clone()))?;
        }
    }
    Ok(cloud)
}

struct GroupContext<'a> {
    config: &'a Config,
    schedule: &'a NoiseSchedule,
    iteration: u64,
    group: u64,
    t_mv: f64,
    t_im: f64,
    background: [f64; 3],
}

// Renders one multiview group, scores it and returns per-view cloud gradients.
fn score_group(
    ctx: &GroupContext,
    cloud: &GaussianCloud,
    orbit: &OrbitSample,
    multiview: &dyn ScoreProvider,
    image: &dyn ScoreProvider,
) -> Result<(Vec<CloudGrads>, f64)> {
    let s1 = &ctx.config.stage1;
    let w = s1.weights;
    let seed = ctx.config.seed;
    let views = multiview_group(orbit);
    let cams: Vec<Camera> = views
        .iter()
        .map(|v| v.camera(s1.cameras.width, s1.cameras.height).with_background(ctx.background))
        .collect();
    let opts = RenderOptions::default();
    let renders: Vec<_> = cams.par_iter().map(|c| render_with(cloud, c, &opts)).collect();
    let images: Vec<_> = renders.iter().map(|r| r.image.clone()).collect();
    let frames = images_to_model(&images);
    let meta: Vec<FrameMeta> = cams
        .iter()
        .map(|c| FrameMeta {
            tau: 0.0,
            camera: c.clone(),
        })
        .collect();

    let mut mv_req = ScoreRequest::new(
        ModelKind::Multiview,
        s1.prompt.clone(),
        ctx.schedule.step_for(ctx.t_mv),
        frames.clone(),
        derive_seed(seed, &[STREAM, ctx.iteration, ctx.group, 0]),
    );
    mv_req.meta = meta.clone();
    if w.negative != 0.0 {
        mv_req.negative_prompt = Some(s1.negative_prompt.clone());
    }
    let im_reqs: Vec<ScoreRequest> = (0..views.len())
        .map(|v| {
            let mut r = ScoreRequest::new(
                ModelKind::Image,
                s1.prompt.clone(),
                ctx.schedule.step_for(ctx.t_im),
                frames.select_frames(&[v]),
                derive_seed(seed, &[STREAM, ctx.iteration, ctx.group, 1 + v as u64]),
            );
            r.meta = vec![meta[v].clone()];
            if w.view != 0.0 {
                r.augmented_prompt = Some(format!("{}{}", s1.prompt, view_suffix(views[v].azimuth, views[v].elevation)));
            }
            r
        })
        .collect();
    let (mv, im) = rayon::join(
        || multiview.score(&mv_req),
        || im_reqs.iter().map(|r| image.score(r)).collect::<Result<Vec<_>>>(),
    );
    let mv = mv?;
    let im = ScoreBatch::concat(&im?)?;
    let grad = assemble_stage1_gradient(&mv, &im, &w, 1.0, s1.mode)?;
    let sq = grad.data.iter().map(|v| v * v).sum::<f64>() / grad.data.len().max(1) as f64;
    let pixel = model_grad_to_images(&grad);
    let grads = renders
        .iter()
        .zip(&pixel)
        .map(|(r, p)| render_backward(r, p))
        .collect::<Result<Vec<_>>>()?;
    Ok((grads, sq))
}
