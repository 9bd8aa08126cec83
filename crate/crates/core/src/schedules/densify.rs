use rand::Rng;
use rand_distr::StandardNormal;

use crate::render::CloudGrads;
use crate::scene::{logit, GaussianCloud, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct DensifyConfig {
    /// Running-mean `|∂L/∂mean2d|` above which a Gaussian is densified.
    pub grad_threshold: f64,
    /// Squashed opacity below which a Gaussian is pruned.
    pub prune_opacity: f64,
    pub interval: u64,
    pub warmup: u64,
    pub max_gaussians: usize,
    /// When false, densification continues past `max_gaussians` (fine-tuning).
    pub enforce_cap: bool,
    pub opacity_reset_interval: u64,
    pub opacity_reset_cap: f64,
    pub scene_extent: f64,
    /// Split instead of clone when `exp(log_scale) > split_fraction · scene_extent`.
    pub split_fraction: f64,
    pub split_scale_divisor: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            grad_threshold: 0.002,
            prune_opacity: 0.005,
            interval: 1000,
            warmup: 500,
            max_gaussians: 50_000,
            enforce_cap: true,
            opacity_reset_interval: 3000,
            opacity_reset_cap: 0.01,
            scene_extent: 1.0,
            split_fraction: 0.01,
            split_scale_divisor: 1.6,
        }
    }
}

/// Per-Gaussian sums of screen-space gradient magnitudes and view counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyStats {
    pub grad_sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    /// Records one render's gradients.
    pub fn observe(&mut self, grads: &CloudGrads) {
        assert_eq!(grads.len(), self.grad_sum.len());
        for i in 0..grads.len() {
            if grads.visible[i] {
                self.grad_sum[i] += grads.mean2d_grad_norm[i];
                self.count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.grad_sum[i] / self.count[i] as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyOutcome {
    /// For each output Gaussian, the input index it continues (`None` for new Gaussians).
    pub origins: Vec<Option<usize>>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub opacity_reset: bool,
}

impl DensifyOutcome {
    pub fn unchanged(n: usize) -> Self {
        Self {
            origins: (0..n).map(Some).collect(),
            ..Default::default()
        }
    }

    pub fn added(&self) -> usize {
        self.cloned + self.split
    }
}

// Largest f32-representable value not above `x`.
fn f32_floor(x: f64) -> f64 {
    let r = x as f32;
    if (r as f64) <= x {
        return r as f64;
    }
    let bits = r.to_bits();
    let down = if r > 0.0 { bits - 1 } else if r < 0.0 { bits + 1 } else { 0x8000_0001 };
    f32::from_bits(down) as f64
}

/// Runs densification, pruning and the opacity cap when `iteration` calls for them.
///
/// Statistics are reset (and resized) whenever densification runs.
pub fn densify_prune_step(
    cloud: &mut GaussianCloud,
    stats: &mut DensifyStats,
    iteration: u64,
    cfg: &DensifyConfig,
    rng: &mut impl Rng,
) -> DensifyOutcome {
    let n = cloud.len();
    assert_eq!(stats.grad_sum.len(), n, "densify stats out of sync with the cloud");
    let mut out = DensifyOutcome::unchanged(n);
    let due = |every: u64| iteration > 0 && every > 0 && iteration % every == 0;

    if due(cfg.interval) && iteration >= cfg.warmup {
        let budget = if cfg.enforce_cap {
            cfg.max_gaussians.saturating_sub(n)
        } else {
            usize::MAX
        };
        let mut picks: Vec<usize> = (0..n).filter(|&i| stats.mean(i) > cfg.grad_threshold).collect();
        picks.sort_by(|&a, &b| stats.mean(b).total_cmp(&stats.mean(a)).then(a.cmp(&b)));
        picks.truncate(budget);
        picks.sort_unstable();
        for &i in &picks {
            let (ls, op, sh) = (cloud.log_scales[i], cloud.opacities_raw[i], cloud.sh[i]);
            let sigma = ls.exp();
            if sigma > cfg.split_fraction * cfg.scene_extent {
                let mut axis = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                if axis.norm() < 1e-12 {
                    axis = Vec3::x();
                }
                let offset = axis.normalize() * (0.5 * sigma);
                let child = ls - cfg.split_scale_divisor.ln();
                let p = cloud.positions[i];
                cloud.positions[i] = p + offset;
                cloud.log_scales[i] = child;
                cloud.push(p - offset, child, op, sh);
                out.origins[i] = None;
                out.split += 1;
            } else {
                cloud.push(cloud.positions[i], ls, op, sh);
                out.cloned += 1;
            }
            out.origins.push(None);
        }

        let keep: Vec<bool> = (0..cloud.len()).map(|i| cloud.opacity(i) >= cfg.prune_opacity).collect();
        out.pruned = keep.iter().filter(|k| !**k).count();
        cloud.retain_indices(&keep);
        let mut it = keep.iter();
        out.origins.retain(|_| *it.next().unwrap());
        *stats = DensifyStats::new(cloud.len());
    }

    if due(cfg.opacity_reset_interval) {
        let cap = f32_floor(logit(cfg.opacity_reset_cap));
        cloud.opacities_raw.iter_mut().for_each(|o| *o = o.min(cap));
        out.opacity_reset = true;
    }
    cloud.quantize();
    out
}
