use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::scene::{logit, sh, sigmoid, to_f32_grid, Vec3};

/// Degree-2 spherical harmonics: 9 coefficients per color channel.
pub const SH_COEFFS: usize = 9;

/// A static set of isotropic 3D Gaussians.
///
/// Scales are stored as `ln σ` and opacities before the logistic squash.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCloud {
    pub positions: Vec<Vec3>,
    pub log_scales: Vec<f64>,
    pub opacities_raw: Vec<f64>,
    /// `[channel][coefficient]`, coefficient 0 is the DC term.
    pub sh: Vec<[[f64; SH_COEFFS]; 3]>,
}

impl GaussianCloud {
    pub fn new(
        positions: Vec<Vec3>,
        log_scales: Vec<f64>,
        opacities_raw: Vec<f64>,
        sh: Vec<[[f64; SH_COEFFS]; 3]>,
    ) -> Result<Self> {
        let cloud = Self {
            positions,
            log_scales,
            opacities_raw,
            sh,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    /// An empty cloud. Only useful as an accumulator; most operations require `N >= 1`.
    pub fn empty() -> Self {
        Self {
            positions: Vec::new(),
            log_scales: Vec::new(),
            opacities_raw: Vec::new(),
            sh: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(invalid("cloud must contain at least one Gaussian"));
        }
        if self.log_scales.len() != n || self.opacities_raw.len() != n || self.sh.len() != n {
            return Err(invalid(format!(
                "array length mismatch: positions {n}, scales {}, opacities {}, sh {}",
                self.log_scales.len(),
                self.opacities_raw.len(),
                self.sh.len()
            )));
        }
        for (i, ls) in self.log_scales.iter().enumerate() {
            let s = ls.exp();
            if !(s.is_finite() && s > 0.0) {
                return Err(invalid(format!("scale of Gaussian {i} is not positive and finite")));
            }
        }
        let finite = self.positions.iter().all(|p| p.iter().all(|v| v.is_finite()))
            && self.opacities_raw.iter().all(|v| v.is_finite())
            && self.sh.iter().flatten().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(invalid("cloud contains non-finite values"));
        }
        Ok(())
    }

    pub fn scale(&self, i: usize) -> f64 {
        self.log_scales[i].exp()
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacities_raw[i])
    }

    pub fn push(&mut self, position: Vec3, log_scale: f64, opacity_raw: f64, sh: [[f64; SH_COEFFS]; 3]) {
        self.positions.push(position);
        self.log_scales.push(log_scale);
        self.opacities_raw.push(opacity_raw);
        self.sh.push(sh);
    }

    /// Keeps the Gaussians whose index satisfies `keep`.
    pub fn retain_indices(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.positions.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.log_scales.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.opacities_raw.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.sh.retain(|_| *it.next().unwrap());
    }

    pub fn extend_from(&mut self, other: &GaussianCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.log_scales.extend_from_slice(&other.log_scales);
        self.opacities_raw.extend_from_slice(&other.opacities_raw);
        self.sh.extend_from_slice(&other.sh);
    }

    /// Same Gaussians with positions replaced (used for deformed frames).
    pub fn with_positions(&self, positions: Vec<Vec3>) -> GaussianCloud {
        assert_eq!(positions.len(), self.len());
        GaussianCloud {
            positions,
            log_scales: self.log_scales.clone(),
            opacities_raw: self.opacities_raw.clone(),
            sh: self.sh.clone(),
        }
    }

    /// Rounds every parameter to the `f32` grid.
    pub fn quantize(&mut self) {
        for p in &mut self.positions {
            p.apply(|v| *v = to_f32_grid(*v));
        }
        self.log_scales.iter_mut().for_each(|v| *v = to_f32_grid(*v));
        self.opacities_raw.iter_mut().for_each(|v| *v = to_f32_grid(*v));
        self.sh.iter_mut().flatten().flatten().for_each(|v| *v = to_f32_grid(*v));
    }

    pub fn is_quantized(&self) -> bool {
        let q = |v: &f64| to_f32_grid(*v) == *v;
        self.positions.iter().all(|p| p.iter().all(q))
            && self.log_scales.iter().all(q)
            && self.opacities_raw.iter().all(q)
            && self.sh.iter().flatten().flatten().all(q)
    }
}

/// Initialization constants for [`init_cloud`].
#[derive(Clone, Debug, PartialEq)]
pub struct InitOptions {
    /// Squashed opacity assigned to every new Gaussian.
    pub initial_opacity: f64,
    /// Neighbors averaged to pick the initial scale.
    pub scale_neighbors: usize,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            initial_opacity: 0.1,
            scale_neighbors: 3,
        }
    }
}

/// Random cloud inside a ball of `radius` around the origin.
pub fn init_cloud(n: usize, radius: f64, seed: u64) -> Result<GaussianCloud> {
    init_cloud_with(n, radius, seed, &InitOptions::default())
}

pub fn init_cloud_with(n: usize, radius: f64, seed: u64, opts: &InitOptions) -> Result<GaussianCloud> {
    if n == 0 {
        return Err(invalid("init_cloud needs n >= 1"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("init_cloud radius must be positive, got {radius}")));
    }
    if !(opts.initial_opacity > 0.0 && opts.initial_opacity < 1.0) {
        return Err(invalid("initial opacity must lie in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let dir = loop {
            let v = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let len = v.norm();
            if len > 1e-12 {
                break v / len;
            }
        };
        let r = radius * rng.random::<f64>().cbrt();
        positions.push((dir * r).map(to_f32_grid));
    }
    let mut sh_all = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = [[0.0; SH_COEFFS]; 3];
        for ch in &mut c {
            ch[0] = to_f32_grid(sh::rgb_to_dc(rng.random::<f64>()));
        }
        sh_all.push(c);
    }
    let log_scales = initial_log_scales(&positions, opts.scale_neighbors, radius);
    let raw = to_f32_grid(logit(opts.initial_opacity));
    GaussianCloud::new(positions, log_scales, vec![raw; n], sh_all)
}

/// `ln` of the mean distance to the nearest `k` neighbors. A lone Gaussian gets `fallback`.
fn initial_log_scales(positions: &[Vec3], k: usize, fallback: f64) -> Vec<f64> {
    use rayon::prelude::*;
    positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (p - q).norm())
                .collect();
            let take = k.min(d.len());
            let mean = if take == 0 {
                fallback
            } else {
                d.select_nth_unstable_by(take - 1, f64::total_cmp);
                let m = d[..take].iter().sum::<f64>() / take as f64;
                m.max(1e-7)
            };
            to_f32_grid(mean.ln())
        })
        .collect()
}
