use super::Tensor4;
use crate::error::{contract, invalid, Result};

/// Predicted-noise tensors returned by a score provider for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreBatch {
    pub eps_cond: Tensor4,
    pub eps_uncond: Tensor4,
    /// Present when a negative prompt was requested.
    pub eps_neg: Option<Tensor4>,
    /// Present when an augmented prompt was requested.
    pub eps_aug: Option<Tensor4>,
    /// The noise actually used for the diffused input, needed only by `DistillMode::Sds`.
    pub eps_used: Option<Tensor4>,
}

impl ScoreBatch {
    pub fn shape(&self) -> [usize; 4] {
        self.eps_cond.shape
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.shape();
        let ok = self.eps_uncond.shape == s
            && [&self.eps_neg, &self.eps_aug, &self.eps_used]
                .iter()
                .all(|t| t.as_ref().is_none_or(|t| t.shape == s));
        if !ok {
            return Err(contract("score batch tensors disagree in shape"));
        }
        Ok(())
    }

    /// Stacks batches along the frame axis; optional tensors must be present in all or none.
    pub fn concat(parts: &[ScoreBatch]) -> Result<ScoreBatch> {
        let stack = |get: &dyn Fn(&ScoreBatch) -> Option<&Tensor4>| -> Result<Option<Tensor4>> {
            let present: Vec<&Tensor4> = parts.iter().filter_map(get).collect();
            if present.is_empty() {
                return Ok(None);
            }
            if present.len() != parts.len() {
                return Err(contract("optional score tensors present in only some batches"));
            }
            let owned: Vec<Tensor4> = present.into_iter().cloned().collect();
            Tensor4::concat_frames(&owned)
                .map(Some)
                .ok_or_else(|| contract("score batches differ in frame shape"))
        };
        Ok(ScoreBatch {
            eps_cond: stack(&|b| Some(&b.eps_cond))?.ok_or_else(|| contract("nothing to concatenate"))?,
            eps_uncond: stack(&|b| Some(&b.eps_uncond))?.ok_or_else(|| contract("nothing to concatenate"))?,
            eps_neg: stack(&|b| b.eps_neg.as_ref())?,
            eps_aug: stack(&|b| b.eps_aug.as_ref())?,
            eps_used: stack(&|b| b.eps_used.as_ref())?,
        })
    }

    /// Classifier direction `eps_cond - eps_uncond`.
    pub fn classifier(&self) -> Tensor4 {
        self.eps_cond.map2(&self.eps_uncond, |c, u| c - u)
    }

    fn negative(&self, weight: f64) -> Result<Option<Tensor4>> {
        if weight == 0.0 {
            return Ok(None);
        }
        let neg = self
            .eps_neg
            .as_ref()
            .ok_or_else(|| invalid("negative-prompt weight set but no negative score"))?;
        Ok(Some(self.eps_uncond.map2(neg, |u, n| weight * (u - n))))
    }

    fn generative(&self) -> Result<Tensor4> {
        let used = self
            .eps_used
            .as_ref()
            .ok_or_else(|| invalid("SDS mode needs the injected noise"))?;
        Ok(self.eps_cond.map2(used, |c, e| c - e))
    }
}

/// Classifier-only distillation or full score distillation (adds `eps_cond - ε`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistillMode {
    #[default]
    Csd,
    Sds,
}

/// Guidance weights. Defaults match the motion-stage setting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceWeights {
    pub video: f64,
    pub image: f64,
    pub multiview: f64,
    /// View-guidance weight on the augmented-prompt image score.
    pub view: f64,
    pub negative: f64,
    pub motion_amp: f64,
}

impl Default for GuidanceWeights {
    fn default() -> Self {
        Self {
            video: 1.0,
            image: 1.0,
            multiview: 1.0,
            view: 0.0,
            negative: 0.0,
            motion_amp: 1.0,
        }
    }
}

impl GuidanceWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.video, self.image, self.multiview, self.view, self.negative, self.motion_amp];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("guidance weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Scales each frame's deviation from the per-pixel mean over frames by `omega`.
///
/// `omega == 1` returns the input unchanged, bit for bit.
pub fn motion_amplify(scores: &Tensor4, omega: f64) -> Tensor4 {
    if omega == 1.0 || scores.frames() == 0 {
        return scores.clone();
    }
    let n = scores.frame_len();
    let f = scores.frames() as f64;
    let mut mean = vec![0.0; n];
    for k in 0..scores.frames() {
        mean.iter_mut().zip(scores.frame(k)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= f);
    let data = scores
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let m = mean[i % n];
            m + omega * (v - m)
        })
        .collect();
    Tensor4 {
        shape: scores.shape,
        data,
    }
}

fn check_weight(w_t: f64) -> Result<()> {
    if w_t.is_finite() && w_t >= 0.0 {
        Ok(())
    } else {
        Err(invalid("time weighting must be finite and non-negative"))
    }
}

/// Video-model gradient with respect to the model-range frames.
pub fn assemble_video_gradient(
    batch: &ScoreBatch,
    weights: &GuidanceWeights,
    w_t: f64,
    mode: DistillMode,
) -> Result<Tensor4> {
    batch.validate()?;
    weights.validate()?;
    check_weight(w_t)?;
    let mut delta = batch.classifier();
    if let Some(neg) = batch.negative(weights.negative)? {
        delta.add_assign(&neg);
    }
    let mut grad = motion_amplify(&delta, weights.motion_amp).scale(w_t * weights.video);
    if mode == DistillMode::Sds {
        grad.add_assign(&batch.generative()?.scale(w_t));
    }
    Ok(grad)
}

/// Image-model gradient with respect to the model-range frames.
pub fn assemble_image_gradient(
    batch: &ScoreBatch,
    weights: &GuidanceWeights,
    w_t: f64,
    mode: DistillMode,
) -> Result<Tensor4> {
    batch.validate()?;
    weights.validate()?;
    check_weight(w_t)?;
    let mut grad = batch.classifier().scale(w_t * weights.image);
    if mode == DistillMode::Sds {
        grad.add_assign(&batch.generative()?.scale(w_t));
    }
    Ok(grad)
}

/// Static-stage gradient per rendered view, combining the multiview batch and
/// the image batch for the same views.
pub fn assemble_stage1_gradient(
    multiview: &ScoreBatch,
    image: &ScoreBatch,
    weights: &GuidanceWeights,
    w_t: f64,
    mode: DistillMode,
) -> Result<Tensor4> {
    multiview.validate()?;
    image.validate()?;
    weights.validate()?;
    check_weight(w_t)?;
    if multiview.shape() != image.shape() {
        return Err(contract(format!(
            "multiview batch {:?} and image batch {:?} must cover the same views",
            multiview.shape(),
            image.shape()
        )));
    }
    let mut grad = multiview.classifier().scale(weights.multiview);
    grad.add_assign(&image.classifier().scale(weights.image));
    if weights.view != 0.0 {
        let aug = image
            .eps_aug
            .as_ref()
            .ok_or_else(|| invalid("view-guidance weight set but no augmented-prompt score"))?;
        grad.add_assign(&aug.map2(&image.eps_cond, |a, c| weights.view * (a - c)));
    }
    if let Some(neg) = multiview.negative(weights.negative)? {
        grad.add_assign(&neg);
    }
    let mut grad = grad.scale(w_t);
    if mode == DistillMode::Sds {
        grad.add_assign(&multiview.generative()?.scale(w_t));
    }
    Ok(grad)
}
