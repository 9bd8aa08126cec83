use super::Tensor4;
use crate::error::{contract, invalid, Result};

/// Variance-preserving schedule: `α_t² + σ_t² = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::scaled_linear(1000, 8.5e-4, 1.2e-2).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    /// `β_t` linear in `sqrt(β)` from `beta_start` to `beta_end`; `ᾱ_t = Π (1 - β_s)`.
    pub fn scaled_linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(invalid("noise schedule needs at least two steps"));
        }
        if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
            return Err(invalid("need 0 < beta_start < beta_end < 1"));
        }
        let (a, b) = (beta_start.sqrt(), beta_end.sqrt());
        let mut alpha_bar = 1.0;
        let mut alphas = Vec::with_capacity(steps);
        let mut sigmas = Vec::with_capacity(steps);
        for t in 0..steps {
            let s = a + (b - a) * t as f64 / (steps - 1) as f64;
            alpha_bar *= 1.0 - s * s;
            alphas.push(alpha_bar.sqrt());
            sigmas.push((1.0 - alpha_bar).sqrt());
        }
        Ok(Self { alphas, sigmas })
    }

    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t]
    }

    /// Continuous time in `[0, 1]` to a step index, `round(t · (T - 1))`.
    pub fn step_for(&self, t: f64) -> usize {
        (t.clamp(0.0, 1.0) * (self.steps() - 1) as f64).round() as usize
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t < self.steps() {
            Ok(())
        } else {
            Err(invalid(format!("diffusion step {t} outside [0, {})", self.steps())))
        }
    }
}

/// `z = α_t x + σ_t ε`.
pub fn diffuse(x: &Tensor4, t: usize, noise: &Tensor4, schedule: &NoiseSchedule) -> Result<Tensor4> {
    schedule.check_step(t)?;
    if x.shape != noise.shape {
        return Err(contract(format!("diffuse: frames {:?} vs noise {:?}", x.shape, noise.shape)));
    }
    let (a, s) = (schedule.alpha(t), schedule.sigma(t));
    Ok(x.map2(noise, |xv, e| a * xv + s * e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_preserving_and_snr_decreasing() {
        let s = NoiseSchedule::default();
        assert_eq!(s.steps(), 1000);
        let mut prev = f64::INFINITY;
        for t in 0..s.steps() {
            assert!((s.alpha(t).powi(2) + s.sigma(t).powi(2) - 1.0).abs() < 1e-12);
            let snr = s.alpha(t) / s.sigma(t);
            assert!(snr < prev);
            prev = snr;
        }
        assert!((s.alpha(0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn step_zero_is_nearly_identity() {
        let s = NoiseSchedule::default();
        let x = Tensor4::from_vec([1, 1, 2, 3], vec![0.5, -0.2, 0.9, -1.0, 0.0, 0.3]).unwrap();
        let e = Tensor4::from_vec([1, 1, 2, 3], vec![1.0, -1.0, 0.5, 0.2, -0.7, 1.3]).unwrap();
        let z = diffuse(&x, 0, &e, &s).unwrap();
        for (a, b) in z.data.iter().zip(&x.data) {
            assert!((a - b).abs() < 0.05);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = NoiseSchedule::default();
        let x = Tensor4::zeros([1, 2, 2, 3]);
        assert!(diffuse(&x, 1000, &x, &s).is_err());
        assert!(matches!(diffuse(&x, 3, &Tensor4::zeros([2, 2, 2, 3]), &s), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn step_mapping() {
        let s = NoiseSchedule::default();
        assert_eq!(s.step_for(0.0), 0);
        assert_eq!(s.step_for(1.0), 999);
        assert_eq!(s.step_for(0.98), 979);
    }
}
