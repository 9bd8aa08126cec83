use std::f64::consts::PI;

pub const NUM_FREQUENCIES: usize = 4;
/// 4 inputs × 4 frequencies × (sin, cos).
pub const ENCODED_DIM: usize = 4 * NUM_FREQUENCIES * 2;

/// Encodes `(x, y, z, τ)`.
///
/// Layout: input-major, then frequency, then `[sin, cos]`, i.e. entry
/// `8·i + 2·m` is `sin(2^m π u_i)` and `8·i + 2·m + 1` is `cos(2^m π u_i)`.
pub fn positional_encode(x: f64, y: f64, z: f64, tau: f64) -> [f64; ENCODED_DIM] {
    let mut out = [0.0; ENCODED_DIM];
    for (i, u) in [x, y, z, tau].into_iter().enumerate() {
        for m in 0..NUM_FREQUENCIES {
            let (s, c) = (frequency(m) * u).sin_cos();
            out[8 * i + 2 * m] = s;
            out[8 * i + 2 * m + 1] = c;
        }
    }
    out
}

#[inline]
pub(crate) fn frequency(m: usize) -> f64 {
    (1u32 << m) as f64 * PI
}

/// Pulls a gradient on the encoding back onto the three spatial inputs.
pub(crate) fn encode_backward_xyz(x: f64, y: f64, z: f64, d_enc: &[f64]) -> [f64; 3] {
    let mut g = [0.0; 3];
    for (i, u) in [x, y, z].into_iter().enumerate() {
        for m in 0..NUM_FREQUENCIES {
            let w = frequency(m);
            let (s, c) = (w * u).sin_cos();
            g[i] += d_enc[8 * i + 2 * m] * w * c - d_enc[8 * i + 2 * m + 1] * w * s;
        }
    }
    g
}
