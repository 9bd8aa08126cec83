//! Counter-based standard-normal noise keyed by a 64-bit seed.
//!
//! Element `2j` and `2j + 1` come from one Box-Muller pair built from the uniforms
//! `u(2j)` and `u(2j + 1)`, where `u(k) = (splitmix64(seed, k) >> 11 + 0.5) · 2⁻⁵³`
//! and `splitmix64(seed, k)` is the SplitMix64 finalizer applied to
//! `seed + (k + 1) · 0x9E3779B97F4A7C15` (wrapping). Each sample is rounded to `f32`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in the open interval `(0, 1)`.
pub fn uniform(seed: u64, counter: u64) -> f64 {
    ((splitmix64(seed, counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub fn standard_normal(seed: u64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len + 1);
    for j in 0..len.div_ceil(2) as u64 {
        let u1 = uniform(seed, 2 * j);
        let u2 = uniform(seed, 2 * j + 1);
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        out.push((r * th.cos()) as f32 as f64);
        out.push((r * th.sin()) as f32 as f64);
    }
    out.truncate(len);
    out
}

/// Mixes a run seed with stream identifiers into an independent request seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(seed, 0), |h, &p| splitmix64(h ^ p, p))
}
