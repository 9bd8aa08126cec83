//! Shared oracles for the integration tests. Nothing here calls into the
//! library's rasterizer or gradient code.

#![allow(dead_code)]

pub mod fd;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splat4d::render::Image;
use splat4d::scene::{Camera, GaussianCloud, Vec3, SH_COEFFS};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps this file free of the distribution crate.
    let u1: f64 = r.random_range(1e-12..1.0);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_vecs(n: usize, s: f64, r: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::new(gauss(r), gauss(r), gauss(r)) * s).collect()
}

/// Random cloud inside a cube of half-width `half`, colors kept away from clamping.
pub fn random_cloud(n: usize, half: f64, r: &mut ChaCha8Rng) -> GaussianCloud {
    let positions = (0..n)
        .map(|_| Vec3::new(r.random_range(-half..half), r.random_range(-half..half), r.random_range(-half..half)))
        .collect();
    let log_scales = (0..n).map(|_| r.random_range(0.04f64..0.25).ln()).collect();
    let opacities = (0..n).map(|_| r.random_range(-2.0..2.5)).collect();
    let sh = (0..n)
        .map(|_| {
            let mut c = [[0.0; SH_COEFFS]; 3];
            for ch in &mut c {
                ch[0] = r.random_range(-1.2..1.2);
                for v in &mut ch[1..] {
                    *v = r.random_range(-0.15..0.15);
                }
            }
            c
        })
        .collect();
    GaussianCloud::new(positions, log_scales, opacities, sh).unwrap()
}

pub fn random_image(w: usize, h: usize, r: &mut ChaCha8Rng) -> Image {
    let mut img = Image::new(w, h);
    for px in &mut img.data {
        *px = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
    }
    img
}

pub fn dot(a: &Image, b: &Image) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2])
        .sum()
}

/// Central difference of `f` at `x`.
pub fn central(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Richardson-extrapolated central difference, accurate to O(h⁴).
pub fn richardson(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = (f(x + 2.0 * h) - f(x - 2.0 * h)) / (4.0 * h);
    (4.0 * d1 - d2) / 3.0
}

/// Relative error on entries whose magnitude exceeds `floor`; `None` when nothing qualifies.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> Option<f64> {
    let s = analytic.abs().max(numeric.abs());
    (s > floor).then(|| (analytic - numeric).abs() / s)
}

/// Running worst relative error over compared entries.
#[derive(Default, Debug)]
pub struct Worst {
    pub compared: usize,
    pub max: f64,
}

impl Worst {
    pub fn add(&mut self, a: f64, n: f64, floor: f64) {
        if let Some(e) = rel_err(a, n, floor) {
            self.compared += 1;
            self.max = self.max.max(e);
        }
    }
}

// Spherical harmonics up to degree 2 in the standard real basis, written out by hand.
fn sh_color(c: &[[f64; SH_COEFFS]; 3], d: &Vec3) -> [f64; 3] {
    let (x, y, z) = (d.x, d.y, d.z);
    let b = [
        0.282_094_791_773_878_14,
        -0.488_602_511_902_919_9 * y,
        0.488_602_511_902_919_9 * z,
        -0.488_602_511_902_919_9 * x,
        1.092_548_430_592_079_2 * x * y,
        -1.092_548_430_592_079_2 * y * z,
        0.315_391_565_252_520_05 * (2.0 * z * z - x * x - y * y),
        -1.092_548_430_592_079_2 * x * z,
        0.546_274_215_296_039_6 * (x * x - y * y),
    ];
    let mut rgb = [0.5; 3];
    for ch in 0..3 {
        for k in 0..SH_COEFFS {
            rgb[ch] += c[ch][k] * b[k];
        }
    }
    rgb.map(|v| v.clamp(0.0, 1.0))
}

struct Flat {
    mean: [f64; 2],
    inv: [f64; 3],
    depth: f64,
    opacity: f64,
    color: [f64; 3],
}

/// Per pixel: sort every Gaussian globally by depth (ties by index) and composite
/// front to back with no tiles, culling or early exit.
pub fn brute_force_render(cloud: &GaussianCloud, cam: &Camera) -> Image {
    let eye = Vec3::from(cam.eye);
    let fwd = (Vec3::from(cam.look_at) - eye).normalize();
    let right = fwd.cross(&Vec3::from(cam.up)).normalize();
    let up = right.cross(&fwd);
    let f = 0.5 * cam.height as f64 / (0.5 * cam.fov_y.to_radians()).tan();
    let (w, h) = (cam.width as usize, cam.height as usize);

    let mut flats: Vec<(usize, Flat)> = Vec::new();
    for i in 0..cloud.len() {
        let d = cloud.positions[i] - eye;
        let (x, y, z) = (d.dot(&right), d.dot(&up), d.dot(&fwd));
        if z <= 0.01 {
            continue;
        }
        let s2 = (2.0 * cloud.log_scales[i]).exp();
        // Jacobian of (f x / z, -f y / z) applied to σ² I.
        let j = [[f / z, 0.0, -f * x / (z * z)], [0.0, -f / z, f * y / (z * z)]];
        let mut cov = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] = s2 * (0..3).map(|k| j[a][k] * j[b][k]).sum::<f64>();
            }
        }
        cov[0][0] += 0.3;
        cov[1][1] += 0.3;
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        flats.push((
            i,
            Flat {
                mean: [0.5 * w as f64 + f * x / z, 0.5 * h as f64 - f * y / z],
                inv: [cov[1][1] / det, -cov[0][1] / det, cov[0][0] / det],
                depth: z,
                opacity: 1.0 / (1.0 + (-cloud.opacities_raw[i]).exp()),
                color: sh_color(&cloud.sh[i], &d.normalize()),
            },
        ));
    }
    flats.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));

    let mut img = Image::new(w, h);
    for py in 0..h {
        for px in 0..w {
            let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for (_, g) in &flats {
                let (dx, dy) = (cx - g.mean[0], cy - g.mean[1]);
                let q = g.inv[0] * dx * dx + 2.0 * g.inv[1] * dx * dy + g.inv[2] * dy * dy;
                let a = (g.opacity * (-0.5 * q).exp()).min(0.99);
                for ch in 0..3 {
                    c[ch] += g.color[ch] * a * t;
                }
                t *= 1.0 - a;
            }
            for ch in 0..3 {
                c[ch] += t * cam.background[ch];
            }
            img.set(px, py, c);
        }
    }
    img
}

pub fn max_abs(a: &Image, b: &Image) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .flat_map(|(x, y)| (0..3).map(move |c| (x[c] - y[c]).abs()))
        .fold(0.0, f64::max)
}
