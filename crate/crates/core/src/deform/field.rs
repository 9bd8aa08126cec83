use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::encoding::{encode_backward_xyz, positional_encode, ENCODED_DIM};
use crate::error::{contract, invalid, Result};
use crate::scene::{to_f32_grid, Vec3};

pub const DEFAULT_GATE_EXPONENT: f64 = 0.35;
/// Output is `SOFT_CLAMP · tanh(o / SOFT_CLAMP)` per component.
pub const SOFT_CLAMP: f64 = 0.5;
const LN_EPS: f64 = 1e-5;
const OUT_DIM: usize = 3;
// tanh saturates to exactly ±1 in f64; keep the clamp strict.
const TANH_MAX: f64 = 1.0 - f64::EPSILON;
const CHUNK: usize = 32;

/// Temporal gate multiplying the field output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Gate {
    /// `ξ(τ) = τ^p`: pins `τ = 0`.
    #[default]
    Forward,
    /// `ξ(τ)·ξ(1 - τ)`: pins both ends (looping segments).
    BothEnds,
}

/// Offsets of one dense layer inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSlots {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weight: usize,
    pub bias: usize,
    /// `(gain, offset)` of the layer normalization applied before the ReLU.
    pub norm: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldLayout {
    pub width: usize,
    pub depth: usize,
    pub layers: Vec<LayerSlots>,
    pub len: usize,
}

impl FieldLayout {
    /// `depth` linear layers: `depth - 1` hidden ReLU layers of `width` units,
    /// layer-normalized on every second one, then a linear output layer.
    pub fn new(width: usize, depth: usize) -> Self {
        let mut layers = Vec::with_capacity(depth);
        let mut off = 0;
        for l in 0..depth {
            let in_dim = if l == 0 { ENCODED_DIM } else { width };
            let last = l + 1 == depth;
            let out_dim = if last { OUT_DIM } else { width };
            let weight = off;
            off += in_dim * out_dim;
            let bias = off;
            off += out_dim;
            let norm = if !last && (l + 1) % 2 == 0 {
                let g = off;
                off += out_dim;
                let b = off;
                off += out_dim;
                Some((g, b))
            } else {
                None
            };
            layers.push(LayerSlots {
                in_dim,
                out_dim,
                weight,
                bias,
                norm,
            });
        }
        Self {
            width,
            depth,
            layers,
            len: off,
        }
    }
}

/// MLP deformation field with a temporal gate.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    layout: FieldLayout,
    params: Vec<f64>,
    gate_exponent: f64,
    gate: Gate,
}

/// Builds a field whose output layer is all zeros, so it starts as the identity deformation.
pub fn init_field(hidden: usize, layers: usize, seed: u64) -> Result<DeformationField> {
    if hidden == 0 {
        return Err(invalid("deformation field needs at least one hidden unit"));
    }
    if layers < 2 {
        return Err(invalid("deformation field needs at least two layers"));
    }
    let layout = FieldLayout::new(hidden, layers);
    let mut params = vec![0.0; layout.len];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (l, slot) in layout.layers.iter().enumerate() {
        if l + 1 == layout.depth {
            continue;
        }
        let bound = 1.0 / (slot.in_dim as f64).sqrt();
        for v in &mut params[slot.weight..slot.weight + slot.in_dim * slot.out_dim] {
            *v = to_f32_grid(rng.random_range(-bound..bound));
        }
        for v in &mut params[slot.bias..slot.bias + slot.out_dim] {
            *v = to_f32_grid(rng.random_range(-bound..bound));
        }
        if let Some((g, _)) = slot.norm {
            params[g..g + slot.out_dim].fill(1.0);
        }
    }
    Ok(DeformationField {
        layout,
        params,
        gate_exponent: DEFAULT_GATE_EXPONENT,
        gate: Gate::Forward,
    })
}

struct Trace {
    /// Per hidden layer: layer input, normalized pre-activation (if normed),
    /// inverse std (if normed), post-norm pre-activation.
    inputs: Vec<Vec<f64>>,
    normed: Vec<Option<(Vec<f64>, f64)>>,
    pre: Vec<Vec<f64>>,
    last_in: Vec<f64>,
    tanh: [f64; OUT_DIM],
}

impl DeformationField {
    pub fn from_parts(width: usize, depth: usize, params: Vec<f64>, gate_exponent: f64, gate: Gate) -> Result<Self> {
        if width == 0 || depth < 2 {
            return Err(invalid("bad deformation field architecture"));
        }
        let layout = FieldLayout::new(width, depth);
        if params.len() != layout.len {
            return Err(invalid(format!(
                "field expects {} parameters, got {}",
                layout.len,
                params.len()
            )));
        }
        if !(gate_exponent > 0.0) {
            return Err(invalid("gate exponent must be positive"));
        }
        Ok(Self {
            layout,
            params,
            gate_exponent,
            gate,
        })
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.layout
    }

    pub fn width(&self) -> usize {
        self.layout.width
    }

    pub fn depth(&self) -> usize {
        self.layout.depth
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn gate_exponent(&self) -> f64 {
        self.gate_exponent
    }

    pub fn gate(&self) -> Gate {
        self.gate
    }

    pub fn with_gate(mut self, gate: Gate) -> Self {
        self.gate = gate;
        self
    }

    pub fn set_gate(&mut self, gate: Gate) {
        self.gate = gate;
    }

    /// Range of the output layer's weights and bias in [`params`](Self::params).
    pub fn output_layer_range(&self) -> std::ops::Range<usize> {
        let last = self.layout.layers.last().unwrap();
        last.weight..last.bias + last.out_dim
    }

    pub fn gate_value(&self, tau: f64) -> f64 {
        let p = self.gate_exponent;
        match self.gate {
            Gate::Forward => tau.powf(p),
            Gate::BothEnds => tau.powf(p) * (1.0 - tau).powf(p),
        }
    }

    fn check_tau(tau: f64) -> Result<()> {
        if (0.0..=1.0).contains(&tau) {
            Ok(())
        } else {
            Err(invalid(format!("normalized time must lie in [0, 1], got {tau}")))
        }
    }

    /// Displacements of `positions` at time `tau`.
    pub fn forward(&self, positions: &[Vec3], tau: f64) -> Result<Vec<Vec3>> {
        Self::check_tau(tau)?;
        let gate = self.gate_value(tau);
        if gate == 0.0 {
            return Ok(vec![Vec3::zeros(); positions.len()]);
        }
        Ok(positions
            .par_iter()
            .map(|p| {
                let t = self.trace(p, tau);
                Vec3::new(t.tanh[0], t.tanh[1], t.tanh[2]) * (SOFT_CLAMP * gate)
            })
            .collect())
    }

    /// Reverse mode of [`forward`](Self::forward): gradients of
    /// `Σ d_displacements · Δ` with respect to all parameters and the input positions.
    pub fn backward(&self, positions: &[Vec3], tau: f64, d_displacements: &[Vec3]) -> Result<(Vec<f64>, Vec<Vec3>)> {
        Self::check_tau(tau)?;
        if positions.len() != d_displacements.len() {
            return Err(contract(format!(
                "field_backward: {} positions but {} displacement gradients",
                positions.len(),
                d_displacements.len()
            )));
        }
        let gate = self.gate_value(tau);
        let mut d_params = vec![0.0; self.layout.len];
        let mut d_pos = vec![Vec3::zeros(); positions.len()];
        if gate == 0.0 {
            return Ok((d_params, d_pos));
        }
        let partials: Vec<(Vec<f64>, Vec<Vec3>)> = positions
            .par_chunks(CHUNK)
            .zip(d_displacements.par_chunks(CHUNK))
            .map(|(ps, ds)| {
                let mut g = vec![0.0; self.layout.len];
                let dp = ps
                    .iter()
                    .zip(ds)
                    .map(|(p, d)| self.backward_one(p, tau, &(d * gate), &mut g))
                    .collect();
                (g, dp)
            })
            .collect();
        // Fixed chunking and in-order reduction keep results independent of thread count.
        for (c, (g, dp)) in partials.into_iter().enumerate() {
            for (a, b) in d_params.iter_mut().zip(&g) {
                *a += b;
            }
            d_pos[c * CHUNK..c * CHUNK + dp.len()].copy_from_slice(&dp);
        }
        Ok((d_params, d_pos))
    }

    fn trace(&self, p: &Vec3, tau: f64) -> Trace {
        let enc = positional_encode(p.x, p.y, p.z, tau);
        let hidden = self.layout.depth - 1;
        let mut inputs = Vec::with_capacity(hidden);
        let mut normed = Vec::with_capacity(hidden);
        let mut pre = Vec::with_capacity(hidden);
        let mut x: Vec<f64> = enc.to_vec();
        for slot in &self.layout.layers[..hidden] {
            let mut z = self.affine(slot, &x);
            let n = slot.norm.map(|(g, b)| {
                let (xhat, inv_std) = layer_norm(&z);
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk = xhat[k] * self.params[g + k] + self.params[b + k];
                }
                (xhat, inv_std)
            });
            let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            inputs.push(std::mem::replace(&mut x, a));
            normed.push(n);
            pre.push(z);
        }
        let o = self.affine(self.layout.layers.last().unwrap(), &x);
        let mut tanh = [0.0; OUT_DIM];
        for k in 0..OUT_DIM {
            tanh[k] = (o[k] / SOFT_CLAMP).tanh().clamp(-TANH_MAX, TANH_MAX);
        }
        Trace {
            inputs,
            normed,
            pre,
            last_in: x,
            tanh,
        }
    }

    fn affine(&self, slot: &LayerSlots, x: &[f64]) -> Vec<f64> {
        let w = &self.params[slot.weight..slot.weight + slot.in_dim * slot.out_dim];
        let b = &self.params[slot.bias..slot.bias + slot.out_dim];
        w.chunks_exact(slot.in_dim)
            .zip(b)
            .map(|(row, bk)| bk + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients into `g`, returns the position gradient.
    fn backward_one(&self, p: &Vec3, tau: f64, d_out: &Vec3, g: &mut [f64]) -> Vec3 {
        let tr = self.trace(p, tau);
        let last = self.layout.layers.last().unwrap();
        // d/do [c·tanh(o/c)] = 1 - tanh²
        let d_o: Vec<f64> = (0..OUT_DIM).map(|k| d_out[k] * (1.0 - tr.tanh[k] * tr.tanh[k])).collect();
        let mut d_x = self.affine_backward(last, &tr.last_in, &d_o, g);
        for l in (0..self.layout.depth - 1).rev() {
            let slot = &self.layout.layers[l];
            let mut d_z: Vec<f64> = d_x.iter().zip(&tr.pre[l]).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
            if let (Some((gi, bi)), Some((xhat, inv_std))) = (slot.norm, &tr.normed[l]) {
                let n = slot.out_dim as f64;
                let mut d_xhat = vec![0.0; slot.out_dim];
                for k in 0..slot.out_dim {
                    g[gi + k] += d_z[k] * xhat[k];
                    g[bi + k] += d_z[k];
                    d_xhat[k] = d_z[k] * self.params[gi + k];
                }
                let mean_d = d_xhat.iter().sum::<f64>() / n;
                let mean_dx = d_xhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                for k in 0..slot.out_dim {
                    d_z[k] = inv_std * (d_xhat[k] - mean_d - xhat[k] * mean_dx);
                }
            }
            d_x = self.affine_backward(slot, &tr.inputs[l], &d_z, g);
        }
        let dp = encode_backward_xyz(p.x, p.y, p.z, &d_x);
        Vec3::new(dp[0], dp[1], dp[2])
    }

    fn affine_backward(&self, slot: &LayerSlots, x: &[f64], d_y: &[f64], g: &mut [f64]) -> Vec<f64> {
        let mut d_x = vec![0.0; slot.in_dim];
        for (k, dy) in d_y.iter().enumerate() {
            if *dy == 0.0 {
                continue;
            }
            let row = slot.weight + k * slot.in_dim;
            for j in 0..slot.in_dim {
                g[row + j] += dy * x[j];
                d_x[j] += dy * self.params[row + j];
            }
            g[slot.bias + k] += dy;
        }
        d_x
    }
}

fn layer_norm(z: &[f64]) -> (Vec<f64>, f64) {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    (z.iter().map(|v| (v - mean) * inv_std).collect(), inv_std)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_positions(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
            .collect()
    }

    /// Field with a random (non-zero) output layer so every path carries gradient.
    pub(crate) fn live_field(width: usize, depth: usize, seed: u64) -> DeformationField {
        let mut f = init_field(width, depth, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        for i in f.output_layer_range() {
            f.params[i] = rng.random_range(-0.4..0.4);
        }
        if let Some((g, b)) = f.layout.layers[1].norm {
            for k in 0..width {
                f.params[g + k] = rng.random_range(0.5..1.5);
                f.params[b + k] = rng.random_range(-0.2..0.2);
            }
        }
        f
    }

    #[test]
    fn default_architecture() {
        let f = init_field(128, 5, 0).unwrap();
        assert_eq!(f.width(), 128);
        assert_eq!(f.depth(), 5);
        let normed: Vec<usize> = f.layout.layers.iter().enumerate().filter(|(_, s)| s.norm.is_some()).map(|(i, _)| i + 1).collect();
        assert_eq!(normed, vec![2, 4]);
        assert_eq!(f.layout.layers[0].in_dim, 32);
        assert_eq!(f.gate_exponent(), 0.35);
    }

    #[test]
    fn fresh_field_is_identity() {
        let f = init_field(16, 4, 3).unwrap();
        let p = random_positions(20, 1);
        for &tau in &[0.0, 0.3, 1.0] {
            assert!(f.forward(&p, tau).unwrap().iter().all(|d| *d == Vec3::zeros()));
        }
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(init_field(32, 5, 9).unwrap(), init_field(32, 5, 9).unwrap());
        assert_ne!(init_field(32, 5, 9).unwrap().params, init_field(32, 5, 10).unwrap().params);
    }

    #[test]
    fn rejects_bad_construction_and_time() {
        assert!(init_field(0, 5, 0).is_err());
        assert!(init_field(8, 1, 0).is_err());
        let f = init_field(8, 3, 0).unwrap();
        assert!(f.forward(&[Vec3::zeros()], 1.5).is_err());
        assert!(f.forward(&[Vec3::zeros()], -0.1).is_err());
    }

    #[test]
    fn zero_time_gives_zero_displacement_and_gradients() {
        let f = live_field(8, 3, 4);
        let p = random_positions(5, 2);
        assert!(f.forward(&p, 0.0).unwrap().iter().all(|d| *d == Vec3::zeros()));
        let (g, dp) = f.backward(&p, 0.0, &vec![Vec3::new(1.0, -2.0, 0.5); 5]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(dp.iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn displacement_bounded_by_gate() {
        let mut f = live_field(16, 4, 8);
        for i in f.output_layer_range() {
            f.params[i] *= 200.0;
        }
        let p = random_positions(50, 3);
        for &tau in &[0.05, 0.5, 1.0] {
            let bound = SOFT_CLAMP * f.gate_value(tau);
            for d in f.forward(&p, tau).unwrap() {
                assert!(d.amax() < bound);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let f = live_field(8, 3, 5);
        let p = random_positions(4, 6);
        let (g, dp) = f.backward(&p, 0.7, &vec![Vec3::zeros(); 4]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(dp.iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        let f = live_field(8, 3, 5);
        let err = f.backward(&random_positions(3, 1), 0.5, &[Vec3::zeros()]).unwrap_err();
        assert!(matches!(err, crate::Error::Contract(_)));
    }

    #[test]
    fn both_end_gate_pins_endpoints() {
        let f = live_field(8, 3, 2).with_gate(Gate::BothEnds);
        let p = random_positions(3, 9);
        for tau in [0.0, 1.0] {
            assert!(f.forward(&p, tau).unwrap().iter().all(|d| *d == Vec3::zeros()));
        }
        assert!(f.forward(&p, 0.5).unwrap().iter().any(|d| d.norm() > 0.0));
    }

    #[test]
    fn gate_monotone() {
        let f = init_field(4, 2, 0).unwrap();
        assert_eq!(f.gate_value(0.0), 0.0);
        assert_eq!(f.gate_value(1.0), 1.0);
        let mut prev = 0.0;
        for i in 1..=100 {
            let v = f.gate_value(i as f64 / 100.0);
            assert!(v > prev);
            prev = v;
        }
    }
}
