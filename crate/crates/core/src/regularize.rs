//! Regularizers on the deformation: distribution drift (a Jensen-Shannon
//! style divergence between moment-matched Gaussians), local rigidity over a
//! k-NN graph, and the interpolation penalty used when extending sequences.

use crate::deform::NNIndex;
use crate::error::{contract, invalid, Result};
use crate::scene::Vec3;

/// Floor applied to per-axis variances.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Per-axis mean and (biased) variance of a point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudMoments {
    pub mean: Vec3,
    pub var: Vec3,
}

pub fn cloud_moments(positions: &[Vec3]) -> Result<CloudMoments> {
    let n = positions.len();
    if n < 2 {
        return Err(invalid("moments need at least two points"));
    }
    let mean = positions.iter().sum::<Vec3>() / n as f64;
    let var = positions.iter().map(|p| (p - mean).component_mul(&(p - mean))).sum::<Vec3>() / n as f64;
    Ok(CloudMoments {
        mean,
        var: var.map(|v| v.max(VARIANCE_FLOOR)),
    })
}

/// Pulls gradients on `(mean, var)` back onto the points. Floored axes pass no gradient.
pub fn cloud_moments_backward(positions: &[Vec3], moments: &CloudMoments, d_mean: &Vec3, d_var: &Vec3) -> Vec<Vec3> {
    let n = positions.len() as f64;
    let raw_var = positions
        .iter()
        .map(|p| (p - moments.mean).component_mul(&(p - moments.mean)))
        .sum::<Vec3>()
        / n;
    let live = raw_var.map(|v| if v > VARIANCE_FLOOR { 1.0 } else { 0.0 });
    let dv = d_var.component_mul(&live);
    positions
        .iter()
        .map(|p| d_mean / n + (p - moments.mean).component_mul(&dv) * (2.0 / n))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JsdTerms {
    pub loss: f64,
    pub d_mean: Vec3,
    pub d_var: Vec3,
}

/// Divergence between `N(ν₀, Γ₀)` and `N(ν_τ, Γ_τ)` measured against their
/// moment-averaged Gaussian, summed over axes:
///
/// `-½ln2 + ½ln(Γ₀+Γ_τ) - ¼lnΓ₀ - ¼lnΓ_τ + ¼(ν_τ-ν₀)²/(Γ₀+Γ_τ)`.
///
/// Gradients are taken with respect to the time-τ moments only.
pub fn jsd_reg(m0: &CloudMoments, mt: &CloudMoments) -> JsdTerms {
    let mut loss = 0.0;
    let mut d_mean = Vec3::zeros();
    let mut d_var = Vec3::zeros();
    for a in 0..3 {
        let (g0, gt) = (m0.var[a], mt.var[a]);
        let s = g0 + gt;
        let dm = mt.mean[a] - m0.mean[a];
        // ln((g0+gt)/2) - ln(g0)/2 - ln(gt)/2, split so that equal variances give exactly zero.
        let spread = 0.25 * ((gt - g0) / (2.0 * g0)).ln_1p() + 0.25 * ((g0 - gt) / (2.0 * gt)).ln_1p();
        loss += spread + 0.25 * dm * dm / s;
        d_mean[a] = 0.5 * dm / s;
        d_var[a] = 0.5 / s - 0.25 / gt - 0.25 * dm * dm / (s * s);
    }
    // The closed form is ≥ 0 analytically; rounding can leave a tiny negative residue at the minimum.
    JsdTerms {
        loss: loss.max(0.0),
        d_mean,
        d_var,
    }
}

/// Mean over Gaussians and their neighbors of `‖Δ_i - Δ_j‖²`.
pub fn rigidity_reg(displacements: &[Vec3], nn: &NNIndex) -> Result<(f64, Vec<Vec3>)> {
    let n = displacements.len();
    if nn.len() != n {
        return Err(contract(format!("neighbor index covers {} Gaussians, got {n}", nn.len())));
    }
    let k = nn.k();
    let norm = 1.0 / (n * k) as f64;
    let mut loss = 0.0;
    let mut grad = vec![Vec3::zeros(); n];
    for i in 0..n {
        for &j in nn.neighbors_of(i) {
            let j = j as usize;
            let diff = displacements[i] - displacements[j];
            loss += diff.norm_squared();
            let g = diff * (2.0 * norm);
            grad[i] += g;
            grad[j] -= g;
        }
    }
    Ok((loss * norm, grad))
}

/// Mean squared difference between the frozen first field and the
/// interpolated field; the gradient goes to the interpolated values only.
pub fn interpol_reg(first: &[Vec3], interpolated: &[Vec3]) -> Result<(f64, Vec<Vec3>)> {
    if first.len() != interpolated.len() {
        return Err(contract(format!(
            "interpolation penalty: {} vs {} displacements",
            first.len(),
            interpolated.len()
        )));
    }
    if first.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let m = (3 * first.len()) as f64;
    let mut loss = 0.0;
    let grad = first
        .iter()
        .zip(interpolated)
        .map(|(a, b)| {
            let d = b - a;
            loss += d.norm_squared();
            d * (2.0 / m)
        })
        .collect();
    Ok((loss / m, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_moments() {
        let m = cloud_moments(&[Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(m.mean, Vec3::zeros());
        assert_eq!(m.var, Vec3::new(1.0, VARIANCE_FLOOR, VARIANCE_FLOOR));
    }

    #[test]
    fn identical_points_floor_everything() {
        let p = vec![Vec3::new(0.3, 0.1, -0.2); 4];
        assert_eq!(cloud_moments(&p).unwrap().var, Vec3::repeat(VARIANCE_FLOOR));
        assert!(cloud_moments(&p[..1]).is_err());
    }

    #[test]
    fn translation_shifts_only_the_mean() {
        let p = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.4, 0.5, 0.0), Vec3::new(0.2, -0.3, 0.9)];
        let t = Vec3::new(1.5, -2.0, 0.25);
        let a = cloud_moments(&p).unwrap();
        let b = cloud_moments(&p.iter().map(|q| q + t).collect::<Vec<_>>()).unwrap();
        assert!((b.mean - a.mean - t).amax() < 1e-12);
        assert!((b.var - a.var).amax() < 1e-12);
    }

    #[test]
    fn jsd_zero_at_match() {
        let m = CloudMoments {
            mean: Vec3::new(0.1, -0.2, 0.3),
            var: Vec3::new(0.5, 0.02, 1.7),
        };
        let j = jsd_reg(&m, &m);
        assert_eq!(j.loss, 0.0);
        assert!(j.d_mean.amax() == 0.0);
        assert!(j.d_var.amax() < 1e-15);
    }

    #[test]
    fn rigidity_two_point_example() {
        let nn = NNIndex::from_lists(1, vec![1, 0]).unwrap();
        let (loss, _) = rigidity_reg(&[Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)], &nn).unwrap();
        assert_eq!(loss, 1.0);
        let (loss, g) = rigidity_reg(&[Vec3::new(0.2, 0.1, 0.0); 2], &nn).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn rigidity_checks_index_size() {
        let nn = NNIndex::from_lists(1, vec![1, 0]).unwrap();
        assert!(matches!(rigidity_reg(&[Vec3::zeros(); 3], &nn), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn interpolation_penalty_definition() {
        let n = 5;
        let a = vec![Vec3::zeros(); n];
        let mut b = a.clone();
        b[2].y = 1.0;
        let (loss, g) = interpol_reg(&a, &b).unwrap();
        assert_eq!(loss, 1.0 / (3 * n) as f64);
        assert_eq!(g[2].y, 2.0 / (3 * n) as f64);
        assert_eq!(interpol_reg(&a, &a).unwrap().0, 0.0);
        assert!(interpol_reg(&a, &b[..2]).is_err());
    }
}
