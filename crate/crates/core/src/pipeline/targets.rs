use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{read_ppm, SequenceSpec};
use crate::distill::{images_to_model, NoiseSchedule};
use crate::error::{Error, Result};
use crate::guidance::{AnalyticProvider, RemoteConfig, RemoteProvider, SceneTarget, ScoreProvider, Target};

/// Where scores come from: `analytic:<target-manifest>` or `remote:<url>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProviderArg {
    Analytic(PathBuf),
    Remote(String),
}

impl FromStr for ProviderArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("analytic", p)) if !p.is_empty() => Ok(Self::Analytic(PathBuf::from(p))),
            Some(("remote", u)) if !u.is_empty() => Ok(Self::Remote(u.to_string())),
            _ => Err(Error::Config(format!(
                "provider must be analytic:<manifest> or remote:<url>, got {s:?}"
            ))),
        }
    }
}

impl ProviderArg {
    pub fn build(&self, schedule: NoiseSchedule) -> Result<Arc<dyn ScoreProvider>> {
        Ok(match self {
            Self::Analytic(path) => Arc::new(AnalyticProvider::with_schedule(load_target(path)?, schedule)),
            Self::Remote(url) => Arc::new(RemoteProvider::new(RemoteConfig::new(url.clone()))?),
        })
    }
}

/// JSON target manifest. Paths are relative to the manifest's directory.
///
/// `{"scene": "target.ckpt"}` renders a checkpoint (animated if it has motion) at each
/// request's cameras and times; `{"frames": ["a.ppm", ...]}` fixes the target frames.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<PathBuf>>,
}

pub fn load_target(path: &Path) -> Result<Target> {
    let text = std::fs::read_to_string(path)?;
    let manifest: TargetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    match (manifest.scene, manifest.frames) {
        (Some(scene), None) => Ok(Target::Scene(scene_target(SequenceSpec::load(&dir.join(scene))?))),
        (None, Some(frames)) if !frames.is_empty() => {
            let images = frames.iter().map(|f| read_ppm(&dir.join(f))).collect::<Result<Vec<_>>>()?;
            if images.iter().any(|i| (i.width, i.height) != (images[0].width, images[0].height)) {
                return Err(Error::Format("target frames differ in size".into()));
            }
            Ok(Target::Fixed(images_to_model(&images)))
        }
        _ => Err(Error::Format(format!(
            "{}: expected exactly one of \"scene\" or a non-empty \"frames\"",
            path.display()
        ))),
    }
}

/// Analytic target that replays a stored sequence.
pub fn scene_target(spec: SequenceSpec) -> SceneTarget {
    let target = SceneTarget::new(spec.cloud.clone());
    if spec.sequence.is_empty() {
        return target;
    }
    target.with_motion(move |u| {
        spec.positions_at(u.clamp(0.0, spec.duration()))
            .unwrap_or_else(|_| spec.cloud.positions.clone())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provider_arg_parses_both_forms() {
        assert_eq!(
            "analytic:t.json".parse::<ProviderArg>().unwrap(),
            ProviderArg::Analytic("t.json".into())
        );
        assert_eq!(
            "remote:http://h:1".parse::<ProviderArg>().unwrap(),
            ProviderArg::Remote("http://h:1".into())
        );
        assert!("local:x".parse::<ProviderArg>().is_err());
        assert!("analytic:".parse::<ProviderArg>().is_err());
    }

    #[test]
    fn manifest_needs_exactly_one_source() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, r#"{"scene":"a","frames":["b"]}"#).unwrap();
        assert!(matches!(load_target(&p), Err(Error::Format(_))));
        std::fs::write(&p, r#"{}"#).unwrap();
        assert!(matches!(load_target(&p), Err(Error::Format(_))));
    }
}
