//! Finite-difference gradient suites shared by the gradient tests and the acceptance run.
//! Each returns the worst relative error over the entries it compared.

use rand::Rng;
use splat4d::deform::{init_field, DeformationField, Gate, NNIndex};
use splat4d::distill::{chain_deformed, DeformedFrame};
use splat4d::regularize::{cloud_moments, cloud_moments_backward, interpol_reg, jsd_reg, rigidity_reg};
use splat4d::render::{render_backward, render_with, CloudGrads, Image, RenderOptions};
use splat4d::scene::{Camera, GaussianCloud, Vec3, SH_COEFFS};

use super::*;

pub const FLOOR: f64 = 1e-6;

pub fn cam16() -> Camera {
    Camera::orbit(20.0, 40.0, 2.4, 50.0, 16, 16).unwrap().with_background([0.3, 0.6, 0.9])
}

pub fn loss(cloud: &GaussianCloud, cam: &Camera, d: &Image) -> f64 {
    dot(&render_with(cloud, cam, &RenderOptions::exact()).image, d)
}

type Setter = Box<dyn Fn(&mut GaussianCloud, f64)>;

// (name, current value, analytic gradient, setter) for every scalar parameter.
fn params(cloud: &GaussianCloud, g: &CloudGrads) -> Vec<(&'static str, f64, f64, Setter)> {
    let mut out: Vec<(&'static str, f64, f64, Setter)> = Vec::new();
    for i in 0..cloud.len() {
        for a in 0..3 {
            out.push(("position", cloud.positions[i][a], g.d_positions[i][a], Box::new(move |c, x| c.positions[i][a] = x)));
        }
        out.push(("log_scale", cloud.log_scales[i], g.d_log_scales[i], Box::new(move |c, x| c.log_scales[i] = x)));
        out.push(("opacity", cloud.opacities_raw[i], g.d_opacities_raw[i], Box::new(move |c, x| c.opacities_raw[i] = x)));
        for ch in 0..3 {
            for k in 0..SH_COEFFS {
                out.push(("sh", cloud.sh[i][ch][k], g.d_sh[i][ch][k], Box::new(move |c, x| c.sh[i][ch][k] = x)));
            }
        }
    }
    out
}

/// Every parameter of a 20-Gaussian scene at 16×16; also returns the failing entries by name.
pub fn render(seed: u64) -> (Worst, Vec<String>) {
    let mut r = rng(seed);
    let cloud = random_cloud(20, 0.5, &mut r);
    let cam = cam16();
    let d = random_image(16, 16, &mut r);
    let g = render_backward(&render_with(&cloud, &cam, &RenderOptions::exact()), &d).unwrap();
    let mut worst = Worst::default();
    let mut failures = Vec::new();
    for (name, x0, analytic, set) in params(&cloud, &g) {
        let mut c = cloud.clone();
        let num = richardson(
            |x| {
                set(&mut c, x);
                loss(&c, &cam, &d)
            },
            x0,
            1e-4,
        );
        if rel_err(analytic, num, FLOOR).is_some_and(|e| e > 1e-3) {
            failures.push(format!("{name}: analytic {analytic:e} numeric {num:e}"));
        }
        worst.add(analytic, num, FLOOR);
    }
    (worst, failures)
}

pub fn random_field(width: usize, depth: usize, gate: Gate, r: &mut rand_chacha::ChaCha8Rng) -> DeformationField {
    let base = init_field(width, depth, r.random()).unwrap();
    let mut params = base.params().to_vec();
    params.iter_mut().for_each(|p| *p += 0.3 * gauss(r));
    DeformationField::from_parts(width, depth, params, 0.35, gate).unwrap()
}

/// Weights and input positions of a 16-wide, 5-deep field.
pub fn field(seed: u64, gate: Gate) -> Worst {
    let mut r = rng(seed);
    let field = random_field(16, 5, gate, &mut r);
    let pts = random_vecs(5, 0.4, &mut r);
    let w = random_vecs(5, 1.0, &mut r);
    let tau = r.random_range(0.1..0.9);
    let l = |f: &DeformationField, p: &[Vec3]| -> f64 { f.forward(p, tau).unwrap().iter().zip(&w).map(|(d, w)| d.dot(w)).sum() };
    let (dp, dx) = field.backward(&pts, tau, &w).unwrap();
    let mut worst = Worst::default();
    for k in 0..field.params().len() {
        let mut f = field.clone();
        let num = richardson(
            |x| {
                f.params_mut()[k] = x;
                l(&f, &pts)
            },
            field.params()[k],
            1e-5,
        );
        worst.add(dp[k], num, FLOOR);
    }
    for i in 0..pts.len() {
        for a in 0..3 {
            let mut p = pts.clone();
            let num = richardson(
                |x| {
                    p[i][a] = x;
                    l(&field, &p)
                },
                pts[i][a],
                1e-5,
            );
            worst.add(dx[i][a], num, FLOOR);
        }
    }
    worst
}

/// The divergence pulled back through the moments onto 40 points.
pub fn jsd_points(seed: u64) -> Worst {
    let mut r = rng(seed);
    let m0 = cloud_moments(&random_vecs(40, 0.5, &mut r)).unwrap();
    let shift = random_vecs(1, 0.2, &mut r)[0];
    let pts: Vec<Vec3> = random_vecs(40, 0.7, &mut r).iter().map(|p| p + shift).collect();
    let mt = cloud_moments(&pts).unwrap();
    let j = jsd_reg(&m0, &mt);
    let g = cloud_moments_backward(&pts, &mt, &j.d_mean, &j.d_var);
    let mut worst = Worst::default();
    for i in 0..pts.len() {
        for a in 0..3 {
            let mut p = pts.clone();
            let num = richardson(
                |x| {
                    p[i][a] = x;
                    jsd_reg(&m0, &cloud_moments(&p).unwrap()).loss
                },
                pts[i][a],
                1e-3,
            );
            worst.add(g[i][a], num, FLOOR);
        }
    }
    worst
}

/// The divergence with respect to the time-τ moments directly.
pub fn jsd_moments(seed: u64) -> Worst {
    let mut r = rng(seed);
    let m0 = cloud_moments(&random_vecs(30, 0.5, &mut r)).unwrap();
    let mt = cloud_moments(&random_vecs(30, 0.8, &mut r)).unwrap();
    let j = jsd_reg(&m0, &mt);
    let mut worst = Worst::default();
    for a in 0..3 {
        let num_mean = richardson(
            |x| {
                let mut m = mt;
                m.mean[a] = x;
                jsd_reg(&m0, &m).loss
            },
            mt.mean[a],
            1e-4,
        );
        let num_var = richardson(
            |x| {
                let mut m = mt;
                m.var[a] = x;
                jsd_reg(&m0, &m).loss
            },
            mt.var[a],
            1e-5,
        );
        worst.add(j.d_mean[a], num_mean, FLOOR);
        worst.add(j.d_var[a], num_var, FLOOR);
    }
    worst
}

pub fn rigidity(seed: u64) -> Worst {
    let mut r = rng(seed);
    let rest = random_vecs(30, 0.5, &mut r);
    let nn = NNIndex::build(&rest, 6).unwrap();
    let disp = random_vecs(30, 0.1, &mut r);
    let (_, g) = rigidity_reg(&disp, &nn).unwrap();
    let mut worst = Worst::default();
    for i in 0..disp.len() {
        for a in 0..3 {
            let mut d = disp.clone();
            let num = richardson(
                |x| {
                    d[i][a] = x;
                    rigidity_reg(&d, &nn).unwrap().0
                },
                disp[i][a],
                1e-3,
            );
            worst.add(g[i][a], num, FLOOR);
        }
    }
    worst
}

pub fn interpol(seed: u64) -> Worst {
    let mut r = rng(seed);
    let first = random_vecs(20, 0.1, &mut r);
    let interp = random_vecs(20, 0.1, &mut r);
    let (_, g) = interpol_reg(&first, &interp).unwrap();
    let mut worst = Worst::default();
    for i in 0..interp.len() {
        for a in 0..3 {
            let mut d = interp.clone();
            let num = richardson(
                |x| {
                    d[i][a] = x;
                    interpol_reg(&first, &d).unwrap().0
                },
                interp[i][a],
                1e-3,
            );
            worst.add(g[i][a], num, FLOOR);
        }
    }
    worst
}

/// Two weighted frames of a deformed 12-Gaussian cloud back to the field weights.
pub fn chain(seed: u64) -> Worst {
    let mut r = rng(seed);
    let cloud = random_cloud(12, 0.5, &mut r);
    let field = random_field(8, 3, Gate::Forward, &mut r);
    let cam = cam16();
    let frames_in = [(0.35, 1.0), (0.8, 0.4)];
    let d: Vec<_> = frames_in.iter().map(|_| random_image(16, 16, &mut r)).collect();
    let make = |f: &DeformationField| -> Vec<DeformedFrame> {
        frames_in
            .iter()
            .map(|&(tau, w)| {
                let delta = f.forward(&cloud.positions, tau).unwrap();
                DeformedFrame {
                    tau,
                    weight: w,
                    rest: cloud.positions.clone(),
                    positions: cloud.positions.iter().zip(&delta).map(|(p, d)| p + d * w).collect(),
                }
            })
            .collect()
    };
    let total = |f: &DeformationField| -> f64 {
        make(f)
            .into_iter()
            .zip(&d)
            .map(|(fr, di)| loss(&cloud.with_positions(fr.positions), &cam, di))
            .sum()
    };
    let frames = make(&field);
    let renders: Vec<_> = frames
        .iter()
        .map(|fr| render_with(&cloud.with_positions(fr.positions.clone()), &cam, &RenderOptions::exact()))
        .collect();
    let g = chain_deformed(&field, &frames, &renders, &d, &[]).unwrap();
    let mut worst = Worst::default();
    for k in 0..field.params().len() {
        let mut f = field.clone();
        let num = richardson(
            |x| {
                f.params_mut()[k] = x;
                total(&f)
            },
            field.params()[k],
            1e-5,
        );
        worst.add(g[k], num, FLOOR);
    }
    worst
}
