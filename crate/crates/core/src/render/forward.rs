use rayon::prelude::*;

use super::Image;
use crate::scene::camera::project_camera_space;
use crate::scene::{sh, sigmoid, Camera, GaussianCloud, ProjectParams, Vec3};

/// Rasterizer constants.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    pub tile_size: usize,
    /// Splats reach `cull_sigma · sqrt(λ_max)` pixels; `None` bins every splat into every tile.
    pub cull_sigma: Option<f64>,
    /// Stop compositing once transmittance drops below this; `None` composites everything.
    pub early_exit: Option<f64>,
    pub alpha_max: f64,
    pub project: ProjectParams,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            tile_size: 16,
            cull_sigma: Some(3.0),
            early_exit: Some(1e-4),
            alpha_max: 0.99,
            project: ProjectParams::default(),
        }
    }
}

impl RenderOptions {
    /// No culling and no early termination; used when comparing against a brute-force compositor.
    pub fn exact() -> Self {
        Self {
            cull_sigma: None,
            early_exit: None,
            ..Self::default()
        }
    }
}

/// Per-Gaussian projection state saved for the reverse pass.
#[derive(Clone, Debug)]
pub(crate) struct Projected {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub cov: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Channel not clamped to `[0, 1]`.
    pub color_live: [bool; 3],
    pub cam: Vec3,
    pub s2: f64,
    pub dir: Vec3,
    pub dir_len: f64,
    pub basis: [f64; 9],
    /// `∂color[ch] / ∂dir[a]` before clamping.
    pub dcolor_ddir: [[f64; 3]; 3],
}

#[derive(Clone, Debug)]
pub(crate) struct RenderAux {
    pub camera: Camera,
    pub options: RenderOptions,
    pub n: usize,
    pub projected: Vec<Option<Projected>>,
    pub tiles_x: usize,
    pub tile_lists: Vec<Vec<u32>>,
    pub n_contrib: Vec<u32>,
    pub fingerprint: u64,
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub image: Image,
    pub final_transmittance: Vec<f64>,
    pub(crate) aux: Option<RenderAux>,
}

impl RenderOutput {
    pub fn has_aux(&self) -> bool {
        self.aux.is_some()
    }

    /// Drops the saved forward state; a later backward call is then a contract violation.
    pub fn discard_aux(&mut self) {
        self.aux = None;
    }

    /// Number of splats composited at each pixel.
    pub fn contributors(&self) -> Option<&[u32]> {
        self.aux.as_ref().map(|a| a.n_contrib.as_slice())
    }

    /// Number of Gaussians in the rendered cloud.
    pub fn cloud_len(&self) -> Option<usize> {
        self.aux.as_ref().map(|a| a.n)
    }

    /// Whether the saved state was produced from exactly these positions.
    pub fn rendered_from(&self, positions: &[Vec3]) -> bool {
        self.aux
            .as_ref()
            .is_some_and(|a| a.n == positions.len() && a.fingerprint == positions_fingerprint(positions))
    }
}

pub fn render(cloud: &GaussianCloud, camera: &Camera) -> RenderOutput {
    render_with(cloud, camera, &RenderOptions::default())
}

pub fn render_with(cloud: &GaussianCloud, camera: &Camera, opts: &RenderOptions) -> RenderOutput {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let focal = camera.focal();
    let rot = camera.rotation();
    let eye = camera.eye();
    let projected: Vec<Option<Projected>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let p = cloud.positions[i];
            let cam = rot * (p - eye);
            let s2 = (2.0 * cloud.log_scales[i]).exp();
            let (mean, cov, depth) = project_camera_space(&cam, s2, focal, camera, &opts.project)?;
            let det = cov[0] * cov[2] - cov[1] * cov[1];
            if !(det > 0.0) {
                return None;
            }
            let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];
            let offset = p - eye;
            let dir_len = offset.norm();
            let dir = offset / dir_len;
            let (raw, basis) = sh::color_unclamped(&cloud.sh[i], &dir);
            let bg = sh::basis_grad(&dir);
            let mut dcolor_ddir = [[0.0; 3]; 3];
            for ch in 0..3 {
                for a in 0..3 {
                    dcolor_ddir[ch][a] = (0..9).map(|k| cloud.sh[i][ch][k] * bg[k][a]).sum();
                }
            }
            Some(Projected {
                mean,
                conic,
                cov,
                depth,
                opacity: sigmoid(cloud.opacities_raw[i]),
                color: raw.map(|v| v.clamp(0.0, 1.0)),
                color_live: raw.map(|v| (0.0..=1.0).contains(&v)),
                cam,
                s2,
                dir,
                dir_len,
                basis,
                dcolor_ddir,
            })
        })
        .collect();

    let ts = opts.tile_size.max(1);
    let tiles_x = w.div_ceil(ts);
    let tiles_y = h.div_ceil(ts);
    let mut tile_lists: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (i, pr) in projected.iter().enumerate() {
        let Some(pr) = pr else { continue };
        match opts.cull_sigma {
            None => tile_lists.iter_mut().for_each(|l| l.push(i as u32)),
            Some(k) => {
                let tr = 0.5 * (pr.cov[0] + pr.cov[2]);
                let det = pr.cov[0] * pr.cov[2] - pr.cov[1] * pr.cov[1];
                let lmax = tr + (tr * tr - det).max(0.0).sqrt();
                let r = k * lmax.sqrt();
                let (x0, x1) = (pr.mean[0] - r, pr.mean[0] + r);
                let (y0, y1) = (pr.mean[1] - r, pr.mean[1] + r);
                if x1 < 0.0 || y1 < 0.0 || x0 >= w as f64 || y0 >= h as f64 {
                    continue;
                }
                let tx0 = (x0.max(0.0) / ts as f64) as usize;
                let ty0 = (y0.max(0.0) / ts as f64) as usize;
                let tx1 = ((x1 / ts as f64) as usize).min(tiles_x - 1);
                let ty1 = ((y1 / ts as f64) as usize).min(tiles_y - 1);
                for ty in ty0..=ty1 {
                    for tx in tx0..=tx1 {
                        tile_lists[ty * tiles_x + tx].push(i as u32);
                    }
                }
            }
        }
    }
    tile_lists.par_iter_mut().for_each(|list| {
        // Lists are built in index order; the stable sort keeps index order among equal depths.
        list.sort_by(|&a, &b| {
            let da = projected[a as usize].as_ref().unwrap().depth;
            let db = projected[b as usize].as_ref().unwrap().depth;
            da.total_cmp(&db)
        });
    });

    let bg = camera.background;
    let tiles: Vec<Vec<(usize, [f64; 3], f64, u32)>> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let list = &tile_lists[t];
            let mut px_out = Vec::with_capacity(ts * ts);
            for py in ty * ts..((ty + 1) * ts).min(h) {
                for px in tx * ts..((tx + 1) * ts).min(w) {
                    let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                    let mut c = [0.0; 3];
                    let mut trans = 1.0;
                    let mut used = 0u32;
                    for &g in list {
                        let pr = projected[g as usize].as_ref().unwrap();
                        let alpha = splat_alpha(pr, cx, cy, opts.alpha_max).0;
                        for ch in 0..3 {
                            c[ch] += pr.color[ch] * alpha * trans;
                        }
                        trans *= 1.0 - alpha;
                        used += 1;
                        if opts.early_exit.is_some_and(|eps| trans < eps) {
                            break;
                        }
                    }
                    for ch in 0..3 {
                        c[ch] += trans * bg[ch];
                    }
                    px_out.push((py * w + px, c, trans, used));
                }
            }
            px_out
        })
        .collect();

    let mut image = Image::new(w, h);
    let mut final_t = vec![1.0; w * h];
    let mut n_contrib = vec![0u32; w * h];
    for tile in tiles {
        for (idx, c, t, used) in tile {
            image.data[idx] = c;
            final_t[idx] = t;
            n_contrib[idx] = used;
        }
    }
    RenderOutput {
        image,
        final_transmittance: final_t,
        aux: Some(RenderAux {
            camera: camera.clone(),
            options: opts.clone(),
            n: cloud.len(),
            projected,
            tiles_x,
            tile_lists,
            n_contrib,
            fingerprint: positions_fingerprint(&cloud.positions),
        }),
    }
}

pub(crate) fn positions_fingerprint(positions: &[Vec3]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for p in positions {
        for v in p.iter() {
            h = (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Returns `(α, G, clamped)` for a splat at pixel center `(cx, cy)`.
#[inline]
pub(crate) fn splat_alpha(pr: &Projected, cx: f64, cy: f64, alpha_max: f64) -> (f64, f64, bool) {
    let dx = cx - pr.mean[0];
    let dy = cy - pr.mean[1];
    let q = pr.conic[0] * dx * dx + 2.0 * pr.conic[1] * dx * dy + pr.conic[2] * dy * dy;
    let g = (-0.5 * q).exp();
    let a = pr.opacity * g;
    if a > alpha_max {
        (alpha_max, g, true)
    } else {
        (a, g, false)
    }
}
