//! Finite-difference checks of every reverse pass on small random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::deform::{init_field, DeformationField, NNIndex};
use crate::distill::{chain_deformed, DeformedFrame};
use crate::error::Result;
use crate::regularize::{cloud_moments, cloud_moments_backward, interpol_reg, jsd_reg, rigidity_reg};
use crate::render::{render_backward, render_with, CloudGrads, Image, RenderOptions};
use crate::scene::{Camera, GaussianCloud, Vec3, SH_COEFFS};

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// Gradient entries compared.
    pub checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err <= self.tolerance
    }
}

/// Entries whose magnitude is below this are not compared.
pub const GRAD_FLOOR: f64 = 1e-6;

// Fourth-order central difference.
fn fd(f: &mut dyn FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

#[derive(Default)]
struct Tally {
    checked: usize,
    max: f64,
}

impl Tally {
    fn add(&mut self, analytic: f64, numeric: f64) {
        let scale = analytic.abs().max(numeric.abs());
        if scale > GRAD_FLOOR {
            self.checked += 1;
            self.max = self.max.max((analytic - numeric).abs() / scale);
        }
    }

    fn finish(self, name: &'static str, tolerance: f64) -> CheckResult {
        CheckResult {
            name,
            checked: self.checked,
            max_rel_err: self.max,
            tolerance,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_vecs(n: usize, s: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::new(normal(rng), normal(rng), normal(rng)) * s).collect()
}

fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> GaussianCloud {
    let positions = (0..n)
        .map(|_| Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
        .collect();
    let log_scales = (0..n).map(|_| rng.random_range(0.06f64..0.2).ln()).collect();
    let opacities = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let sh = (0..n)
        .map(|_| {
            let mut c = [[0.0; SH_COEFFS]; 3];
            for ch in &mut c {
                ch[0] = rng.random_range(-0.8..0.8);
                for v in &mut ch[1..] {
                    *v = rng.random_range(-0.1..0.1);
                }
            }
            c
        })
        .collect();
    GaussianCloud::new(positions, log_scales, opacities, sh).expect("valid random cloud")
}

fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
    let mut img = Image::new(w, h);
    for px in &mut img.data {
        *px = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    }
    img
}

fn dot(a: &Image, b: &Image) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2])
        .sum()
}

fn param_count(cloud: &GaussianCloud) -> usize {
    cloud.len() * (5 + 3 * SH_COEFFS)
}

// Flat view of the cloud parameters: positions, log-scales, raw opacities, SH.
fn param_mut(cloud: &mut GaussianCloud, k: usize) -> &mut f64 {
    let n = cloud.len();
    match k {
        k if k < 3 * n => &mut cloud.positions[k / 3][k % 3],
        k if k < 4 * n => &mut cloud.log_scales[k - 3 * n],
        k if k < 5 * n => &mut cloud.opacities_raw[k - 4 * n],
        k => {
            let r = k - 5 * n;
            &mut cloud.sh[r / (3 * SH_COEFFS)][(r / SH_COEFFS) % 3][r % SH_COEFFS]
        }
    }
}

fn grad_at(g: &CloudGrads, k: usize) -> f64 {
    let n = g.len();
    match k {
        k if k < 3 * n => g.d_positions[k / 3][k % 3],
        k if k < 4 * n => g.d_log_scales[k - 3 * n],
        k if k < 5 * n => g.d_opacities_raw[k - 4 * n],
        k => {
            let r = k - 5 * n;
            g.d_sh[r / (3 * SH_COEFFS)][(r / SH_COEFFS) % 3][r % SH_COEFFS]
        }
    }
}

// Draws clouds until no two view depths lie within `gap`, so the finite-difference
// stencil never crosses a change in blending order.
fn separated_cloud(n: usize, cam: &Camera, gap: f64, rng: &mut ChaCha8Rng) -> GaussianCloud {
    let eye = Vec3::from(cam.eye);
    let fwd = (Vec3::from(cam.look_at) - eye).normalize();
    loop {
        let cloud = random_cloud(n, rng);
        let mut depths: Vec<f64> = cloud.positions.iter().map(|p| (p - eye).dot(&fwd)).collect();
        depths.sort_by(f64::total_cmp);
        if depths.windows(2).all(|d| d[1] - d[0] > gap) {
            return cloud;
        }
    }
}

fn camera(w: u32, h: u32) -> Camera {
    Camera::orbit(15.0, 30.0, 2.5, 50.0, w, h).expect("valid camera")
}

/// Renderer gradients for every parameter of a 20-Gaussian scene at 16×16.
pub fn check_render(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = camera(16, 16);
    let cloud = separated_cloud(20, &cam, 1e-3, &mut rng);
    let opts = RenderOptions::exact();
    let d_image = random_image(16, 16, &mut rng);
    let grads = render_backward(&render_with(&cloud, &cam, &opts), &d_image)?;
    let mut tally = Tally::default();
    for k in 0..param_count(&cloud) {
        let mut c = cloud.clone();
        let x0 = *param_mut(&mut c, k);
        let num = fd(
            &mut |x| {
                *param_mut(&mut c, k) = x;
                dot(&render_with(&c, &cam, &opts).image, &d_image)
            },
            x0,
            1e-4,
        );
        tally.add(grad_at(&grads, k), num);
    }
    Ok(tally.finish("render", 1e-3))
}

fn random_field(width: usize, depth: usize, rng: &mut ChaCha8Rng) -> Result<DeformationField> {
    let mut f = init_field(width, depth, rng.random())?;
    for p in f.params_mut() {
        *p += 0.3 * normal(rng);
    }
    Ok(f)
}

/// Field gradients with respect to all weights and input positions.
pub fn check_field(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = random_field(16, 5, &mut rng)?;
    let pts = random_vecs(6, 0.4, &mut rng);
    let w = random_vecs(6, 1.0, &mut rng);
    let tau = rng.random_range(0.1..0.9);
    let loss = |f: &DeformationField, p: &[Vec3]| -> f64 {
        f.forward(p, tau).expect("valid tau").iter().zip(&w).map(|(d, w)| d.dot(w)).sum()
    };
    let (dp, dx) = field.backward(&pts, tau, &w)?;
    let mut tally = Tally::default();
    for k in 0..field.params().len() {
        let mut f = field.clone();
        let x0 = f.params()[k];
        let num = fd(
            &mut |x| {
                f.params_mut()[k] = x;
                loss(&f, &pts)
            },
            x0,
            1e-5,
        );
        tally.add(dp[k], num);
    }
    for i in 0..pts.len() {
        for a in 0..3 {
            let mut p = pts.clone();
            let num = fd(
                &mut |x| {
                    p[i][a] = x;
                    loss(&field, &p)
                },
                pts[i][a],
                1e-5,
            );
            tally.add(dx[i][a], num);
        }
    }
    Ok(tally.finish("field", 1e-3))
}

/// Drift divergence through the cloud moments onto positions.
pub fn check_jsd(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m0 = cloud_moments(&random_vecs(30, 0.5, &mut rng))?;
    let pts: Vec<Vec3> = random_vecs(30, 0.6, &mut rng).iter().map(|p| p + Vec3::new(0.1, -0.2, 0.05)).collect();
    let mt = cloud_moments(&pts)?;
    let j = jsd_reg(&m0, &mt);
    let g = cloud_moments_backward(&pts, &mt, &j.d_mean, &j.d_var);
    let mut tally = Tally::default();
    for i in 0..pts.len() {
        for a in 0..3 {
            let mut p = pts.clone();
            let num = fd(
                &mut |x| {
                    p[i][a] = x;
                    jsd_reg(&m0, &cloud_moments(&p).expect("two or more points")).loss
                },
                pts[i][a],
                1e-3,
            );
            tally.add(g[i][a], num);
        }
    }
    Ok(tally.finish("jsd", 1e-6))
}

pub fn check_rigidity(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rest = random_vecs(25, 0.5, &mut rng);
    let nn = NNIndex::build(&rest, 5)?;
    let disp = random_vecs(25, 0.1, &mut rng);
    let (_, g) = rigidity_reg(&disp, &nn)?;
    let mut tally = Tally::default();
    for i in 0..disp.len() {
        for a in 0..3 {
            let mut d = disp.clone();
            let num = fd(
                &mut |x| {
                    d[i][a] = x;
                    rigidity_reg(&d, &nn).expect("sized").0
                },
                disp[i][a],
                1e-3,
            );
            tally.add(g[i][a], num);
        }
    }
    Ok(tally.finish("rigidity", 1e-6))
}

pub fn check_interpol(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = random_vecs(15, 0.1, &mut rng);
    let interp = random_vecs(15, 0.1, &mut rng);
    let (_, g) = interpol_reg(&first, &interp)?;
    let mut tally = Tally::default();
    for i in 0..interp.len() {
        for a in 0..3 {
            let mut d = interp.clone();
            let num = fd(
                &mut |x| {
                    d[i][a] = x;
                    interpol_reg(&first, &d).expect("sized").0
                },
                interp[i][a],
                1e-3,
            );
            tally.add(g[i][a], num);
        }
    }
    Ok(tally.finish("interpol", 1e-6))
}

/// Render of a deformed cloud back to the field weights, over two frames.
pub fn check_chain(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud = random_cloud(10, &mut rng);
    let field = random_field(8, 3, &mut rng)?;
    let cam = camera(16, 16);
    let opts = RenderOptions::exact();
    let taus = [rng.random_range(0.2..0.5), rng.random_range(0.5..0.9)];
    let weights = [1.0, 0.6];
    let d_images: Vec<Image> = taus.iter().map(|_| random_image(16, 16, &mut rng)).collect();
    let frames_for = |f: &DeformationField| -> Vec<DeformedFrame> {
        taus.iter()
            .zip(weights)
            .map(|(&tau, w)| {
                let d = f.forward(&cloud.positions, tau).expect("valid tau");
                DeformedFrame {
                    tau,
                    weight: w,
                    rest: cloud.positions.clone(),
                    positions: cloud.positions.iter().zip(&d).map(|(p, d)| p + d * w).collect(),
                }
            })
            .collect()
    };
    let loss = |f: &DeformationField| -> f64 {
        frames_for(f)
            .into_iter()
            .zip(&d_images)
            .map(|(fr, g)| dot(&render_with(&cloud.with_positions(fr.positions), &cam, &opts).image, g))
            .sum()
    };
    let frames = frames_for(&field);
    let renders: Vec<_> = frames
        .iter()
        .map(|fr| render_with(&cloud.with_positions(fr.positions.clone()), &cam, &opts))
        .collect();
    let g = chain_deformed(&field, &frames, &renders, &d_images, &[])?;
    let mut tally = Tally::default();
    for k in 0..field.params().len() {
        let mut f = field.clone();
        let x0 = f.params()[k];
        let num = fd(
            &mut |x| {
                f.params_mut()[k] = x;
                loss(&f)
            },
            x0,
            1e-5,
        );
        tally.add(g[k], num);
    }
    Ok(tally.finish("chain", 1e-3))
}

/// Runs every check with seeds derived from `seed`.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_render(seed)?,
        check_field(seed.wrapping_add(1))?,
        check_jsd(seed.wrapping_add(2))?,
        check_rigidity(seed.wrapping_add(3))?,
        check_interpol(seed.wrapping_add(4))?,
        check_chain(seed.wrapping_add(5))?,
    ])
}
