use rayon::prelude::*;

use super::forward::{splat_alpha, RenderAux, RenderOutput};
use super::Image;
use crate::error::{contract, Result};
use crate::scene::{Vec3, SH_COEFFS};

/// Gradients with respect to every cloud parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudGrads {
    pub d_positions: Vec<Vec3>,
    pub d_log_scales: Vec<f64>,
    pub d_opacities_raw: Vec<f64>,
    pub d_sh: Vec<[[f64; SH_COEFFS]; 3]>,
    /// `|∂L/∂mean2d|` of this render, zero for Gaussians that were not projected.
    pub mean2d_grad_norm: Vec<f64>,
    /// Gaussians that were projected (in front of the near plane) in this render.
    pub visible: Vec<bool>,
}

impl CloudGrads {
    pub fn zeros(n: usize) -> Self {
        Self {
            d_positions: vec![Vec3::zeros(); n],
            d_log_scales: vec![0.0; n],
            d_opacities_raw: vec![0.0; n],
            d_sh: vec![[[0.0; SH_COEFFS]; 3]; n],
            mean2d_grad_norm: vec![0.0; n],
            visible: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.d_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_positions.is_empty()
    }

    /// Adds parameter gradients. Densification statistics are not summed here;
    /// see [`crate::schedules::DensifyStats`].
    pub fn accumulate(&mut self, other: &CloudGrads) {
        assert_eq!(self.len(), other.len());
        for i in 0..self.len() {
            self.d_positions[i] += other.d_positions[i];
            self.d_log_scales[i] += other.d_log_scales[i];
            self.d_opacities_raw[i] += other.d_opacities_raw[i];
            for ch in 0..3 {
                for k in 0..SH_COEFFS {
                    self.d_sh[i][ch][k] += other.d_sh[i][ch][k];
                }
            }
            self.visible[i] |= other.visible[i];
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.d_positions.iter().all(|v| *v == Vec3::zeros())
            && self.d_log_scales.iter().all(|v| *v == 0.0)
            && self.d_opacities_raw.iter().all(|v| *v == 0.0)
            && self.d_sh.iter().flatten().flatten().all(|v| *v == 0.0)
    }
}

// Per splat-in-tile: d_mean(2), d_conic(3), d_opacity, d_color(3).
const SLOTS: usize = 9;

/// Gradients of `Σ_p d_image(p) · C(p)` with respect to the rendered cloud.
pub fn render_backward(output: &RenderOutput, d_image: &Image) -> Result<CloudGrads> {
    let aux = output
        .aux
        .as_ref()
        .ok_or_else(|| contract("render_backward needs the saved forward state"))?;
    let (w, h) = (aux.camera.width as usize, aux.camera.height as usize);
    if d_image.width != w || d_image.height != h {
        return Err(contract(format!(
            "d_image is {}x{} but the render is {w}x{h}",
            d_image.width, d_image.height
        )));
    }
    let two_d = screen_space_grads(aux, output, d_image);
    Ok(chain_to_cloud(aux, &two_d))
}

fn screen_space_grads(aux: &RenderAux, output: &RenderOutput, d_image: &Image) -> Vec<[f64; SLOTS]> {
    let w = aux.camera.width as usize;
    let h = aux.camera.height as usize;
    let ts = aux.options.tile_size.max(1);
    let bg = aux.camera.background;
    let alpha_max = aux.options.alpha_max;
    let per_tile: Vec<Vec<[f64; SLOTS]>> = aux
        .tile_lists
        .par_iter()
        .enumerate()
        .map(|(t, list)| {
            let mut acc = vec![[0.0; SLOTS]; list.len()];
            if list.is_empty() {
                return acc;
            }
            let (tx, ty) = (t % aux.tiles_x, t / aux.tiles_x);
            for py in ty * ts..((ty + 1) * ts).min(h) {
                for px in tx * ts..((tx + 1) * ts).min(w) {
                    let idx = py * w + px;
                    let d_pix = d_image.data[idx];
                    if d_pix == [0.0; 3] {
                        continue;
                    }
                    let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                    let mut trans = output.final_transmittance[idx];
                    // Everything composited behind the current splat, including the background.
                    let mut behind = [trans * bg[0], trans * bg[1], trans * bg[2]];
                    for slot in (0..aux.n_contrib[idx] as usize).rev() {
                        let pr = aux.projected[list[slot] as usize].as_ref().unwrap();
                        let (alpha, g, clamped) = splat_alpha(pr, cx, cy, alpha_max);
                        let t_i = trans / (1.0 - alpha);
                        let a = &mut acc[slot];
                        let mut d_alpha = 0.0;
                        for ch in 0..3 {
                            a[6 + ch] += d_pix[ch] * alpha * t_i;
                            d_alpha += d_pix[ch] * (pr.color[ch] * t_i - behind[ch] / (1.0 - alpha));
                            behind[ch] += pr.color[ch] * alpha * t_i;
                        }
                        trans = t_i;
                        if clamped {
                            continue;
                        }
                        a[5] += d_alpha * g;
                        let d_q = -0.5 * g * d_alpha * pr.opacity;
                        let dx = cx - pr.mean[0];
                        let dy = cy - pr.mean[1];
                        let [ca, cb, cc] = pr.conic;
                        a[0] -= d_q * 2.0 * (ca * dx + cb * dy);
                        a[1] -= d_q * 2.0 * (cb * dx + cc * dy);
                        a[2] += d_q * dx * dx;
                        a[3] += d_q * 2.0 * dx * dy;
                        a[4] += d_q * dy * dy;
                    }
                }
            }
            acc
        })
        .collect();
    // Tile order reduction keeps the sums identical for any thread count.
    let mut out = vec![[0.0; SLOTS]; aux.n];
    for (list, acc) in aux.tile_lists.iter().zip(per_tile) {
        for (&g, a) in list.iter().zip(acc) {
            let o = &mut out[g as usize];
            for k in 0..SLOTS {
                o[k] += a[k];
            }
        }
    }
    out
}

fn chain_to_cloud(aux: &RenderAux, two_d: &[[f64; SLOTS]]) -> CloudGrads {
    let cam = &aux.camera;
    let f = cam.focal();
    let rot_t = cam.rotation().transpose();
    let rows: Vec<_> = (0..aux.n)
        .into_par_iter()
        .map(|i| {
            let mut d_pos = Vec3::zeros();
            let mut d_ls = 0.0;
            let mut d_raw = 0.0;
            let mut d_sh = [[0.0; SH_COEFFS]; 3];
            let Some(pr) = aux.projected[i].as_ref() else {
                return (d_pos, d_ls, d_raw, d_sh, 0.0, false);
            };
            let g = &two_d[i];
            let (x, y, z) = (pr.cam.x, pr.cam.y, pr.cam.z);

            // conic = cov⁻¹, with D = AC - B².
            let [ca, cb, cc] = pr.cov;
            let det = ca * cc - cb * cb;
            let d2 = det * det;
            let (ga, gb, gc) = (g[2], g[3], g[4]);
            let d_cov_a = ga * (-cc * cc / d2) + gb * (cb * cc / d2) + gc * (-cb * cb / d2);
            let d_cov_b = ga * (2.0 * cb * cc / d2) + gb * (-(ca * cc + cb * cb) / d2) + gc * (2.0 * ca * cb / d2);
            let d_cov_c = ga * (-cb * cb / d2) + gb * (cb * ca / d2) + gc * (-ca * ca / d2);

            // cov = s² f² M(x, y, z) + lowpass·I
            let k = pr.s2 * f * f;
            let iz = 1.0 / z;
            let iz2 = iz * iz;
            let iz3 = iz2 * iz;
            let iz4 = iz2 * iz2;
            let iz5 = iz4 * iz;
            let m_a = iz2 + x * x * iz4;
            let m_b = -x * y * iz4;
            let m_c = iz2 + y * y * iz4;
            let d_s2 = f * f * (d_cov_a * m_a + d_cov_b * m_b + d_cov_c * m_c);
            let mut d_cam = Vec3::new(
                k * (d_cov_a * 2.0 * x * iz4 - d_cov_b * y * iz4),
                k * (-d_cov_b * x * iz4 + d_cov_c * 2.0 * y * iz4),
                k * (d_cov_a * (-2.0 * iz3 - 4.0 * x * x * iz5)
                    + d_cov_b * 4.0 * x * y * iz5
                    + d_cov_c * (-2.0 * iz3 - 4.0 * y * y * iz5)),
            );
            // mean = (W/2 + f x/z, H/2 - f y/z)
            let (gmx, gmy) = (g[0], g[1]);
            d_cam.x += gmx * f * iz;
            d_cam.y -= gmy * f * iz;
            d_cam.z += -gmx * f * x * iz2 + gmy * f * y * iz2;
            d_pos += rot_t * d_cam;

            // View-dependent color through the unit view direction.
            let mut d_dir = Vec3::zeros();
            for ch in 0..3 {
                if !pr.color_live[ch] {
                    continue;
                }
                let dc = g[6 + ch];
                for kk in 0..SH_COEFFS {
                    d_sh[ch][kk] = dc * pr.basis[kk];
                }
                for a in 0..3 {
                    d_dir[a] += dc * pr.dcolor_ddir[ch][a];
                }
            }
            d_pos += (d_dir - pr.dir * pr.dir.dot(&d_dir)) / pr.dir_len;

            d_ls = d_s2 * 2.0 * pr.s2;
            d_raw = g[5] * pr.opacity * (1.0 - pr.opacity);
            let norm = (gmx * gmx + gmy * gmy).sqrt();
            (d_pos, d_ls, d_raw, d_sh, norm, true)
        })
        .collect();
    let mut grads = CloudGrads::zeros(aux.n);
    for (i, (p, ls, raw, shg, norm, vis)) in rows.into_iter().enumerate() {
        grads.d_positions[i] = p;
        grads.d_log_scales[i] = ls;
        grads.d_opacities_raw[i] = raw;
        grads.d_sh[i] = shg;
        grads.mean2d_grad_norm[i] = norm;
        grads.visible[i] = vis;
    }
    grads
}
