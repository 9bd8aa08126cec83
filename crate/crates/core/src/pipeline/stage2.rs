use std::collections::BTreeMap;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::optim::Adam;
use super::stage1::background;
use super::{Config, MetricsRecord, Observer, SequenceSpec};
use crate::deform::{init_field, DeformationField, FramePlan, Gate, NNIndex, Sequence};
use crate::distill::{
    assemble_image_gradient, assemble_video_gradient, chain_deformed, images_to_model, model_grad_to_images,
    DeformedFrame, NoiseSchedule,
};
use crate::error::{invalid, Result};
use crate::guidance::noise::derive_seed;
use crate::guidance::{FrameMeta, ModelKind, ScoreProvider, ScoreRequest};
use crate::regularize::{cloud_moments, cloud_moments_backward, interpol_reg, jsd_reg, rigidity_reg, CloudMoments};
use crate::render::{render_with, RenderOptions};
use crate::scene::{to_f32_grid, Camera, GaussianCloud, Vec3};
use crate::schedules::{sample_camera_path_stage2, sample_diffusion_time, sample_fps_and_times, sampler_rng, Stage};

const STREAM: u64 = 2;
const FIELD_STREAM: u64 = 3;

/// Fresh identity field for segment `k` of a run.
pub fn new_segment_field(config: &Config, k: usize, gate: Gate) -> Result<DeformationField> {
    let s2 = &config.stage2;
    let f = init_field(s2.field_width, s2.field_depth, derive_seed(config.seed, &[FIELD_STREAM, k as u64]))?;
    let f = DeformationField::from_parts(s2.field_width, s2.field_depth, f.params().to_vec(), s2.gate_exponent, gate)?;
    Ok(f)
}

/// Motion synthesis: optimizes a deformation field for a frozen cloud.
pub fn run_stage2(
    cloud: &GaussianCloud,
    config: &Config,
    video: &dyn ScoreProvider,
    image: &dyn ScoreProvider,
    observer: &mut dyn Observer,
) -> Result<SequenceSpec> {
    config.validate()?;
    cloud.validate()?;
    let mut spec = SequenceSpec {
        cloud: cloud.clone(),
        sequence: Sequence {
            fields: vec![new_segment_field(config, 0, Gate::Forward)?],
            overlap: config.stage2.overlap,
            looping: false,
        },
    };
    optimize_segment(&mut spec, 0, config, video, image, observer)?;
    Ok(spec)
}

/// Continues optimizing the last segment of an existing sequence (fine-tuning).
pub fn refine_last_segment(
    spec: &SequenceSpec,
    config: &Config,
    video: &dyn ScoreProvider,
    image: &dyn ScoreProvider,
    observer: &mut dyn Observer,
) -> Result<SequenceSpec> {
    config.validate()?;
    if spec.sequence.is_empty() {
        return Err(invalid("nothing to refine: the sequence has no segments"));
    }
    let mut out = spec.clone();
    let k = out.sequence.len() - 1;
    optimize_segment(&mut out, k, config, video, image, observer)?;
    Ok(out)
}

/// Appends a segment starting from the middle frame of the last one and optimizes it.
///
/// With `looping`, the new segment closes the loop: its last frame equals the first frame of the sequence.
pub fn extend_sequence(
    spec: &SequenceSpec,
    config: &Config,
    video: &dyn ScoreProvider,
    image: &dyn ScoreProvider,
    looping: bool,
    observer: &mut dyn Observer,
) -> Result<SequenceSpec> {
    config.validate()?;
    if spec.sequence.is_empty() {
        return Err(invalid("extension needs an optimized segment"));
    }
    if spec.sequence.looping {
        return Err(invalid("the sequence is already closed into a loop"));
    }
    if spec.sequence.overlap != config.stage2.overlap {
        return Err(invalid("config overlap differs from the sequence"));
    }
    let mut out = spec.clone();
    let k = out.sequence.len();
    let gate = if looping { Gate::BothEnds } else { Gate::Forward };
    out.sequence.fields.push(new_segment_field(config, k, gate)?);
    out.sequence.looping = looping;
    optimize_segment(&mut out, k, config, video, image, observer)?;
    Ok(out)
}

struct SegmentContext<'a> {
    config: &'a Config,
    schedule: NoiseSchedule,
    k: usize,
    m0: CloudMoments,
    nn: NNIndex,
}

struct PathResult {
    grad: Vec<f64>,
    losses: [f64; 4],
    t: f64,
    fps: u32,
}

/// Optimizes the field of segment `k` in place; all other segments stay fixed.
pub fn optimize_segment(
    spec: &mut SequenceSpec,
    k: usize,
    config: &Config,
    video: &dyn ScoreProvider,
    image: &dyn ScoreProvider,
    observer: &mut dyn Observer,
) -> Result<()> {
    spec.sequence.validate()?;
    if k >= spec.sequence.len() {
        return Err(invalid(format!("segment {k} does not exist")));
    }
    let s2 = &config.stage2;
    let rest = spec.sequence.rest(&spec.cloud.positions, k)?;
    let ctx = SegmentContext {
        config,
        schedule: config.noise_schedule()?,
        k,
        m0: cloud_moments(&spec.cloud.positions)?,
        nn: NNIndex::build(&rest, s2.knn)?,
    };
    let mut adam = Adam::new(spec.sequence.fields[k].params().len(), 1e-8);
    let seg_seed = derive_seed(config.seed, &[STREAM, k as u64]);

    for it in 1..=s2.iterations {
        let mut grad = vec![0.0; adam.len()];
        let mut losses = [0.0; 4];
        let (mut t, mut fps) = (0.0, 0);
        for p in 0..s2.paths_per_update {
            let r = match score_path(&ctx, spec, seg_seed, it, p as u64, video, image) {
                Ok(r) => r,
                Err(e) => {
                    observer.checkpoint(it - 1, spec)?;
                    return Err(e);
                }
            };
            let inv = 1.0 / s2.paths_per_update as f64;
            grad.iter_mut().zip(&r.grad).for_each(|(a, b)| *a += b * inv);
            losses.iter_mut().zip(&r.losses).for_each(|(a, b)| *a += b * inv);
            (t, fps) = (r.t, r.fps);
        }
        let field = &mut spec.sequence.fields[k];
        adam.step(field.params_mut(), &grad, s2.lr_field);
        debug_assert!(field.params().iter().all(|v| to_f32_grid(*v) == *v));

        let names = ["score", "jsd", "rigidity", "interp"];
        let loss: BTreeMap<_, _> = names.into_iter().zip(losses).collect();
        observer.iteration(&MetricsRecord {
            iter: it,
            loss,
            n: spec.cloud.len(),
            t,
            fps: Some(fps),
        })?;
        if s2.checkpoint_every > 0 && it % s2.checkpoint_every == 0 {
            observer.checkpoint(it, spec)?;
        }
    }
    Ok(())
}

/// Middle frame first, then `count - 1` other frames in increasing order.
fn image_subset(frames: usize, count: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    let middle = frames / 2 - 1;
    let mut others: Vec<usize> = sample(rng, frames - 1, count - 1)
        .into_iter()
        .map(|i| if i >= middle { i + 1 } else { i })
        .collect();
    others.sort_unstable();
    std::iter::once(middle).chain(others).collect()
}

fn score_path(
    ctx: &SegmentContext,
    spec: &SequenceSpec,
    seg_seed: u64,
    it: u64,
    path: u64,
    video: &dyn ScoreProvider,
    image: &dyn ScoreProvider,
) -> Result<PathResult> {
    let config = ctx.config;
    let s2 = &config.stage2;
    let w = s2.weights;
    let seq = &spec.sequence;
    let base = &spec.cloud.positions;
    let mut rng = sampler_rng(seg_seed, it, path);
    let mut fps_dist = s2.fps.clone();
    fps_dist.frames = s2.cameras.frames;
    let (fps, times) = sample_fps_and_times(&fps_dist, &mut rng);
    let orbits = sample_camera_path_stage2(&s2.cameras, &mut rng);
    let bg = background(s2.background, &mut rng);
    let t_vid = sample_diffusion_time(&config.times, it - 1, Stage::Two, ModelKind::Video, &mut rng);
    let t_im = sample_diffusion_time(&config.times, it - 1, Stage::Two, ModelKind::Image, &mut rng);
    let subset = image_subset(times.len(), s2.image_frames, &mut rng);

    let cams: Vec<Camera> = orbits
        .iter()
        .map(|o| o.camera(s2.cameras.width, s2.cameras.height).with_background(bg))
        .collect();
    let plans: Vec<FramePlan> = times
        .par_iter()
        .map(|&tau| seq.plan(base, ctx.k, tau))
        .collect::<Result<_>>()?;
    let opts = RenderOptions::default();
    let renders: Vec<_> = plans
        .par_iter()
        .zip(&cams)
        .map(|(pl, c)| render_with(&spec.cloud.with_positions(pl.positions.clone()), c, &opts))
        .collect();
    let images: Vec<_> = renders.iter().map(|r| r.image.clone()).collect();
    let frames = images_to_model(&images);
    let start = seq.start(ctx.k);
    let meta: Vec<FrameMeta> = times
        .iter()
        .zip(&cams)
        .map(|(tau, c)| FrameMeta {
            tau: start + tau,
            camera: c.clone(),
        })
        .collect();

    let mut vid_req = ScoreRequest::new(
        ModelKind::Video,
        s2.prompt.clone(),
        ctx.schedule.step_for(t_vid),
        frames.clone(),
        derive_seed(seg_seed, &[it, path, 0]),
    );
    vid_req.fps = Some(fps);
    vid_req.meta = meta.clone();
    if w.negative != 0.0 {
        vid_req.negative_prompt = Some(s2.negative_prompt.clone());
    }
    let mut im_req = ScoreRequest::new(
        ModelKind::Image,
        s2.prompt.clone(),
        ctx.schedule.step_for(t_im),
        frames.select_frames(&subset),
        derive_seed(seg_seed, &[it, path, 1]),
    );
    im_req.meta = subset.iter().map(|&i| meta[i].clone()).collect();

    let (vb, ib) = rayon::join(|| video.score(&vid_req), || image.score(&im_req));
    let mut grad = assemble_video_gradient(&vb?, &w, 1.0, s2.mode)?;
    let g_im = assemble_image_gradient(&ib?, &w, 1.0, s2.mode)?;
    let n = grad.frame_len();
    for (j, &f) in subset.iter().enumerate() {
        let src = g_im.frame(j);
        grad.data[f * n..(f + 1) * n].iter_mut().zip(src).for_each(|(a, b)| *a += b);
    }
    let score = grad.data.iter().map(|v| v * v).sum::<f64>() / grad.data.len().max(1) as f64;
    let pixel = model_grad_to_images(&grad);

    let inv_f = 1.0 / plans.len() as f64;
    let regs: Vec<([f64; 3], Vec<Vec3>)> = plans
        .par_iter()
        .map(|pl| frame_regularizers(ctx, pl, inv_f))
        .collect::<Result<_>>()?;
    let mut losses = [score, 0.0, 0.0, 0.0];
    for (l, _) in &regs {
        losses[1] += l[0];
        losses[2] += l[1];
        losses[3] += l[2];
    }
    let extra: Vec<Vec<Vec3>> = regs.into_iter().map(|(_, g)| g).collect();
    let deformed: Vec<DeformedFrame> = plans
        .into_iter()
        .zip(&times)
        .map(|(pl, &tau)| DeformedFrame {
            tau,
            weight: pl.weight,
            rest: pl.rest,
            positions: pl.positions,
        })
        .collect();
    let grad = chain_deformed(&seq.fields[ctx.k], &deformed, &renders, &pixel, &extra)?;
    Ok(PathResult {
        grad,
        losses,
        t: t_vid,
        fps,
    })
}

// Weighted regularizer losses (JSD, rigidity, interpolation) of one frame and their position gradient.
fn frame_regularizers(ctx: &SegmentContext, plan: &FramePlan, scale: f64) -> Result<([f64; 3], Vec<Vec3>)> {
    let s2 = &ctx.config.stage2;
    let n = plan.positions.len();
    let mut d = vec![Vec3::zeros(); n];
    let mut l = [0.0; 3];
    if s2.lambda_jsd != 0.0 {
        let mt = cloud_moments(&plan.positions)?;
        let j = jsd_reg(&ctx.m0, &mt);
        let k = s2.lambda_jsd * scale;
        l[0] = k * j.loss;
        let g = cloud_moments_backward(&plan.positions, &mt, &(j.d_mean * k), &(j.d_var * k));
        d.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    if s2.lambda_rigidity != 0.0 {
        let disp: Vec<Vec3> = plan.positions.iter().zip(&plan.rest).map(|(p, r)| p - r).collect();
        let (loss, g) = rigidity_reg(&disp, &ctx.nn)?;
        let k = s2.lambda_rigidity * scale;
        l[1] = k * loss;
        d.iter_mut().zip(&g).for_each(|(a, b)| *a += b * k);
    }
    if let (Some((prev_rest, prev)), true) = (&plan.previous, s2.lambda_interp != 0.0) {
        let d1: Vec<Vec3> = prev.iter().zip(prev_rest).map(|(p, r)| p - r).collect();
        let di: Vec<Vec3> = plan.positions.iter().zip(prev_rest).map(|(p, r)| p - r).collect();
        let (loss, g) = interpol_reg(&d1, &di)?;
        let k = s2.lambda_interp * scale;
        l[2] = k * loss;
        d.iter_mut().zip(&g).for_each(|(a, b)| *a += b * k);
    }
    Ok((l, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_starts_with_middle_and_is_distinct() {
        let mut rng = sampler_rng(5, 1, 0);
        for _ in 0..100 {
            let s = image_subset(16, 4, &mut rng);
            assert_eq!(s[0], 7);
            let mut u = s.clone();
            u.sort_unstable();
            u.dedup();
            assert_eq!(u.len(), 4);
            assert!(s.iter().all(|&i| i < 16));
        }
    }
}
