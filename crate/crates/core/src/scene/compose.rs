use std::ops::Range;

use nalgebra::{DMatrix, Rotation3};

use crate::deform::Sequence;
use crate::error::{invalid, Result};
use crate::scene::{sh, GaussianCloud, Vec3, SH_COEFFS};

/// Similarity transform `p ↦ s·R·p + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidPose {
    pub rotation: Rotation3<f64>,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vec3, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("pose scale must be positive, got {scale}")));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.translation == Vec3::zeros() && self.rotation == Rotation3::identity()
    }
}

/// One animated object placed in a larger scene.
#[derive(Clone, Debug)]
pub struct SceneAsset {
    pub cloud: GaussianCloud,
    /// Empty for a static asset.
    pub motion: Sequence,
    pub pose: RigidPose,
    /// Scene time at which the asset's own clock reads zero.
    pub time_offset: f64,
}

impl SceneAsset {
    pub fn still(cloud: GaussianCloud) -> Self {
        Self {
            cloud,
            motion: Sequence::still(),
            pose: RigidPose::identity(),
            time_offset: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComposedScene {
    pub cloud: GaussianCloud,
    /// Index range of each asset's Gaussians in `cloud`, in input order.
    pub provenance: Vec<Range<usize>>,
}

/// Deforms every asset at its local time (`τ - offset`, clamped to its duration),
/// poses it and concatenates the results.
pub fn compose_scene(assets: &[SceneAsset], tau: f64) -> Result<ComposedScene> {
    if assets.is_empty() {
        return Err(invalid("compose_scene needs at least one asset"));
    }
    let mut out = GaussianCloud::empty();
    let mut provenance = Vec::with_capacity(assets.len());
    for asset in assets {
        asset.cloud.validate()?;
        let local = (tau - asset.time_offset).clamp(0.0, asset.motion.duration());
        let positions = asset.motion.positions_at(&asset.cloud.positions, local)?;
        let start = out.len();
        if asset.pose.is_identity() {
            out.extend_from(&asset.cloud.with_positions(positions));
        } else {
            let ln_s = asset.pose.scale.ln();
            let sh_rot = ShRotation::new(&asset.pose.rotation);
            for (i, p) in positions.iter().enumerate() {
                out.push(
                    asset.pose.apply(p),
                    asset.cloud.log_scales[i] + ln_s,
                    asset.cloud.opacities_raw[i],
                    sh_rot.apply(&asset.cloud.sh[i]),
                );
            }
        }
        provenance.push(start..out.len());
    }
    Ok(ComposedScene { cloud: out, provenance })
}

/// Linear map rotating degree ≤ 2 SH coefficients.
///
/// The degree ≤ 2 span is closed under rotation, so refitting the rotated
/// function on enough sample directions recovers the coefficients exactly.
struct ShRotation {
    matrix: DMatrix<f64>,
}

impl ShRotation {
    fn new(rot: &Rotation3<f64>) -> Self {
        let dirs = sample_directions();
        let m = dirs.len();
        let mut y = DMatrix::zeros(m, SH_COEFFS);
        let mut y_rot = DMatrix::zeros(m, SH_COEFFS);
        for (r, d) in dirs.iter().enumerate() {
            let b = sh::basis(d);
            // Rotated color at d equals the original color at Rᵀd.
            let br = sh::basis(&(rot.inverse() * d));
            for k in 0..SH_COEFFS {
                y[(r, k)] = b[k];
                y_rot[(r, k)] = br[k];
            }
        }
        let pinv = y.pseudo_inverse(1e-12).expect("SH design matrix is well conditioned");
        Self { matrix: pinv * y_rot }
    }

    fn apply(&self, c: &[[f64; SH_COEFFS]; 3]) -> [[f64; SH_COEFFS]; 3] {
        let mut out = [[0.0; SH_COEFFS]; 3];
        for ch in 0..3 {
            for i in 0..SH_COEFFS {
                out[ch][i] = (0..SH_COEFFS).map(|k| self.matrix[(i, k)] * c[ch][k]).sum();
            }
        }
        out
    }
}

fn sample_directions() -> Vec<Vec3> {
    let mut d = Vec::new();
    for x in -1..=1 {
        for y in -1..=1 {
            for z in -1..=1 {
                if (x, y, z) != (0, 0, 0) {
                    d.push(Vec3::new(x as f64, y as f64, z as f64).normalize());
                }
            }
        }
    }
    d
}
