use serde::{Deserialize, Serialize};

use crate::distill::{ScoreBatch, Tensor4};
use crate::error::{invalid, Result};
use crate::scene::Camera;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Video,
    Image,
    Multiview,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Video => "video",
            ModelKind::Image => "image",
            ModelKind::Multiview => "multiview",
        }
    }
}

/// Where and when a frame was rendered. Scene-backed oracles use it to render
/// their target; teachers ignore it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub tau: f64,
    pub camera: Camera,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRequest {
    pub model_kind: ModelKind,
    pub prompt: String,
    pub negative_prompt: Option<String>,
    pub augmented_prompt: Option<String>,
    /// Diffusion step index.
    pub t: usize,
    pub fps: Option<u32>,
    /// Renders in model range, `F × H × W × 3`.
    pub frames: Tensor4,
    pub seed: u64,
    /// Per-frame render metadata, empty or one entry per frame.
    pub meta: Vec<FrameMeta>,
}

impl ScoreRequest {
    pub fn new(model_kind: ModelKind, prompt: impl Into<String>, t: usize, frames: Tensor4, seed: u64) -> Self {
        Self {
            model_kind,
            prompt: prompt.into(),
            negative_prompt: None,
            augmented_prompt: None,
            t,
            fps: None,
            frames,
            seed,
            meta: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [f, h, w, c] = self.frames.shape;
        if f == 0 || h == 0 || w == 0 || c != 3 {
            return Err(invalid(format!("request frames must be F×H×W×3, got {:?}", self.frames.shape)));
        }
        if self.frames.data.len() != f * h * w * c || !self.frames.is_finite() {
            return Err(invalid("request frames are inconsistent or non-finite"));
        }
        match self.model_kind {
            ModelKind::Video if self.fps.is_none() => return Err(invalid("video requests carry fps")),
            ModelKind::Image | ModelKind::Multiview if self.fps.is_some() => {
                return Err(invalid("only video requests carry fps"))
            }
            ModelKind::Multiview if f != 4 => return Err(invalid("multiview requests carry 4 views")),
            _ => {}
        }
        if !self.meta.is_empty() && self.meta.len() != f {
            return Err(invalid("frame metadata must cover every frame"));
        }
        Ok(())
    }
}

/// Supplies denoiser predictions for a batch of renders. Implementations are
/// deterministic in `(request, seed)` and safe to call concurrently.
pub trait ScoreProvider: Send + Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreBatch>;
}

impl<P: ScoreProvider + ?Sized> ScoreProvider for std::sync::Arc<P> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreBatch> {
        (**self).score(request)
    }
}

impl<P: ScoreProvider + ?Sized> ScoreProvider for &P {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreBatch> {
        (**self).score(request)
    }
}
