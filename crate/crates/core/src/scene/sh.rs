//! Real spherical harmonics up to degree 2.
//!
//! Basis order and constants follow the usual splatting convention:
//! `Y0 = C0`, `Y1..3 = C1 * (-y, z, -x)`, then the five degree-2 terms
//! `xy, yz, 2z²-x²-y², xz, x²-y²`.

use crate::error::{invalid, Result};
use crate::scene::{Vec3, SH_COEFFS};

pub const C0: f64 = 0.282_094_791_773_878_14;
pub const C1: f64 = 0.488_602_511_902_919_9;
pub const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];

/// Offset added to the SH sum before clamping to `[0, 1]`.
pub const COLOR_OFFSET: f64 = 0.5;

pub fn basis(d: &Vec3) -> [f64; SH_COEFFS] {
    let (x, y, z) = (d.x, d.y, d.z);
    [
        C0,
        -C1 * y,
        C1 * z,
        -C1 * x,
        C2[0] * x * y,
        C2[1] * y * z,
        C2[2] * (2.0 * z * z - x * x - y * y),
        C2[3] * x * z,
        C2[4] * (x * x - y * y),
    ]
}

/// Partial derivatives of each basis polynomial with respect to the raw
/// direction components (no normalization applied).
pub fn basis_grad(d: &Vec3) -> [[f64; 3]; SH_COEFFS] {
    let (x, y, z) = (d.x, d.y, d.z);
    [
        [0.0, 0.0, 0.0],
        [0.0, -C1, 0.0],
        [0.0, 0.0, C1],
        [-C1, 0.0, 0.0],
        [C2[0] * y, C2[0] * x, 0.0],
        [0.0, C2[1] * z, C2[1] * y],
        [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z],
        [C2[3] * z, 0.0, C2[3] * x],
        [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0],
    ]
}

/// Color before clamping, plus the basis values used to produce it.
pub(crate) fn color_unclamped(coeffs: &[[f64; SH_COEFFS]; 3], dir: &Vec3) -> ([f64; 3], [f64; SH_COEFFS]) {
    let y = basis(dir);
    let mut rgb = [COLOR_OFFSET; 3];
    for (ch, c) in coeffs.iter().enumerate() {
        rgb[ch] += c.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
    (rgb, y)
}

/// Evaluates view-dependent color for a unit viewing direction.
pub fn eval_sh(coeffs: &[[f64; SH_COEFFS]; 3], view_dir: &Vec3) -> Result<[f64; 3]> {
    let n = view_dir.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(invalid(format!("view direction must be unit length, got |d| = {n}")));
    }
    let (rgb, _) = color_unclamped(coeffs, view_dir);
    Ok(rgb.map(|v| v.clamp(0.0, 1.0)))
}

/// Color value for the DC coefficient that reproduces `rgb` in every direction.
pub fn rgb_to_dc(rgb: f64) -> f64 {
    (rgb - COLOR_OFFSET) / C0
}
