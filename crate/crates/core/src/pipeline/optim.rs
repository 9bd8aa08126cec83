use crate::render::CloudGrads;
use crate::scene::{to_f32_grid, GaussianCloud, SH_COEFFS};

/// Adaptive-moment update for one flat parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: Vec<u32>,
}

impl Adam {
    pub fn new(len: usize, eps: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One step; the result is rounded to the `f32` grid. Step counts are kept per
    /// element so entries added by densification start their bias correction afresh.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        for i in 0..params.len() {
            let g = grads[i];
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / (1.0 - self.beta1.powi(t));
            let vh = self.v[i] / (1.0 - self.beta2.powi(t));
            params[i] = to_f32_grid(params[i] - lr * mh / (vh.sqrt() + self.eps));
        }
    }

    /// Reorders state after densification; `width` entries per item, `None` items start fresh.
    pub fn remap(&mut self, origins: &[Option<usize>], width: usize) {
        let pick = |src: &[f64]| -> Vec<f64> {
            origins
                .iter()
                .flat_map(|o| match o {
                    Some(i) => src[i * width..(i + 1) * width].to_vec(),
                    None => vec![0.0; width],
                })
                .collect()
        };
        self.m = pick(&self.m);
        self.v = pick(&self.v);
        self.steps = origins
            .iter()
            .flat_map(|o| match o {
                Some(i) => self.steps[i * width..(i + 1) * width].to_vec(),
                None => vec![0; width],
            })
            .collect();
    }
}

/// Learning rates of the static-stage parameter groups.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudRates {
    pub position: f64,
    pub rgb: f64,
    pub sh: f64,
    pub opacity: f64,
    pub scaling: f64,
}

/// Log-linear decay from `init` to `last` over `steps`, constant afterwards.
pub fn position_lr(init: f64, last: f64, steps: u64, iteration: u64) -> f64 {
    if steps == 0 {
        return last;
    }
    let r = (iteration as f64 / steps as f64).min(1.0);
    (init.ln() * (1.0 - r) + last.ln() * r).exp()
}

const HIGHER_SH: usize = SH_COEFFS - 1;

/// Adam state for every parameter group of a cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudOptimizer {
    positions: Adam,
    scales: Adam,
    opacities: Adam,
    rgb: Adam,
    sh: Adam,
}

impl CloudOptimizer {
    pub fn new(n: usize) -> Self {
        Self {
            positions: Adam::new(3 * n, 1e-15),
            scales: Adam::new(n, 1e-8),
            opacities: Adam::new(n, 1e-8),
            rgb: Adam::new(3 * n, 1e-8),
            sh: Adam::new(3 * HIGHER_SH * n, 1e-8),
        }
    }

    pub fn step(&mut self, cloud: &mut GaussianCloud, g: &CloudGrads, rates: &CloudRates) {
        let n = cloud.len();
        assert_eq!(g.len(), n);
        assert_eq!(self.scales.len(), n, "optimizer out of sync with the cloud");

        let mut p: Vec<f64> = cloud.positions.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect();
        let gp: Vec<f64> = g.d_positions.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect();
        self.positions.step(&mut p, &gp, rates.position);
        for (i, pos) in cloud.positions.iter_mut().enumerate() {
            pos.copy_from_slice(&p[3 * i..3 * i + 3]);
        }
        self.scales.step(&mut cloud.log_scales, &g.d_log_scales, rates.scaling);
        self.opacities.step(&mut cloud.opacities_raw, &g.d_opacities_raw, rates.opacity);

        let mut dc: Vec<f64> = cloud.sh.iter().flat_map(|s| (0..3).map(move |c| s[c][0])).collect();
        let gdc: Vec<f64> = g.d_sh.iter().flat_map(|s| (0..3).map(move |c| s[c][0])).collect();
        self.rgb.step(&mut dc, &gdc, rates.rgb);
        let mut hi: Vec<f64> = cloud.sh.iter().flat_map(|s| s.iter().flat_map(|c| c[1..].to_vec())).collect();
        let ghi: Vec<f64> = g.d_sh.iter().flat_map(|s| s.iter().flat_map(|c| c[1..].to_vec())).collect();
        self.sh.step(&mut hi, &ghi, rates.sh);
        for (i, s) in cloud.sh.iter_mut().enumerate() {
            for c in 0..3 {
                s[c][0] = dc[3 * i + c];
                let o = (3 * i + c) * HIGHER_SH;
                s[c][1..].copy_from_slice(&hi[o..o + HIGHER_SH]);
            }
        }
    }

    pub fn remap(&mut self, origins: &[Option<usize>]) {
        self.positions.remap(origins, 3);
        self.scales.remap(origins, 1);
        self.opacities.remap(origins, 1);
        self.rgb.remap(origins, 3);
        self.sh.remap(origins, 3 * HIGHER_SH);
    }
}
