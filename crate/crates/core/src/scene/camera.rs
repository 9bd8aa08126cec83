use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scene::{sh, GaussianCloud, Vec3};

/// Anti-aliasing floor added to the diagonal of every projected covariance (px²).
pub const DEFAULT_LOWPASS: f64 = 0.3;
/// Points closer than this camera-space depth are culled.
pub const DEFAULT_NEAR: f64 = 0.01;

/// Pinhole camera. World is right-handed with +y up; the camera looks along
/// `look_at - eye` and image rows grow downwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub eye: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
    pub background: [f64; 3],
}

impl Camera {
    pub fn new(eye: Vec3, look_at: Vec3, up: Vec3, fov_y: f64, width: u32, height: u32) -> Result<Self> {
        let cam = Camera {
            eye: eye.into(),
            look_at: look_at.into(),
            up: up.into(),
            fov_y,
            width,
            height,
            background: [0.0; 3],
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera on a sphere around the origin, looking at it.
    ///
    /// `eye = d (cos e sin a, sin e, cos e cos a)`.
    pub fn orbit(elevation_deg: f64, azimuth_deg: f64, distance: f64, fov_y: f64, width: u32, height: u32) -> Result<Self> {
        let (e, a) = (elevation_deg.to_radians(), azimuth_deg.to_radians());
        let eye = Vec3::new(e.cos() * a.sin(), e.sin(), e.cos() * a.cos()) * distance;
        // Straight up/down views need a different up hint.
        let up = if e.cos().abs() < 1e-6 {
            Vec3::new(-a.sin(), 0.0, -a.cos()) * e.sin().signum()
        } else {
            Vec3::y()
        };
        Camera::new(eye, Vec3::zeros(), up, fov_y, width, height)
    }

    pub fn with_background(mut self, rgb: [f64; 3]) -> Self {
        self.background = rgb;
        self
    }

    pub fn with_resolution(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov_y > 0.0 && self.fov_y < 180.0) {
            return Err(invalid(format!("fov_y must lie in (0, 180), got {}", self.fov_y)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("camera resolution must be at least 1x1"));
        }
        let fwd = Vec3::from(self.look_at) - Vec3::from(self.eye);
        if Vec3::from(self.up).cross(&fwd).norm() <= 0.0 || !fwd.iter().all(|v| v.is_finite()) {
            return Err(invalid("camera up vector is parallel to the view direction"));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y.to_radians()).tan()
    }

    /// Rows are the camera right, up and forward axes in world coordinates.
    pub fn rotation(&self) -> nalgebra::Matrix3<f64> {
        let eye = Vec3::from(self.eye);
        let fwd = (Vec3::from(self.look_at) - eye).normalize();
        let right = fwd.cross(&Vec3::from(self.up)).normalize();
        let up = right.cross(&fwd);
        nalgebra::Matrix3::from_rows(&[right.transpose(), up.transpose(), fwd.transpose()])
    }

    /// World point to camera space (x right, y up, z = depth along the view axis).
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation() * (p - Vec3::from(self.eye))
    }

    pub fn eye(&self) -> Vec3 {
        Vec3::from(self.eye)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Constants used when projecting Gaussians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectParams {
    pub lowpass: f64,
    pub near: f64,
}

impl Default for ProjectParams {
    fn default() -> Self {
        Self {
            lowpass: DEFAULT_LOWPASS,
            near: DEFAULT_NEAR,
        }
    }
}

/// A Gaussian projected onto the image plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    /// Pixel coordinates; pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
    pub mean2d: [f64; 2],
    /// Symmetric covariance `[xx, xy, yy]` in px², low-pass floor included.
    pub cov2d: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    pub alpha_base: f64,
}

/// Geometry part of the projection. `None` when the point is not in front of the near plane.
///
/// The isotropic covariance `σ²I` is pushed through the local affine
/// approximation `J` of the perspective map, `Σ' = σ² J Jᵀ + lowpass·I`.
pub fn project_gaussian(position: &Vec3, scale: f64, camera: &Camera, params: &ProjectParams) -> Option<([f64; 2], [f64; 3], f64)> {
    let c = camera.to_camera(position);
    project_camera_space(&c, scale * scale, camera.focal(), camera, params)
}

pub(crate) fn project_camera_space(
    c: &Vec3,
    s2: f64,
    f: f64,
    camera: &Camera,
    params: &ProjectParams,
) -> Option<([f64; 2], [f64; 3], f64)> {
    let (x, y, z) = (c.x, c.y, c.z);
    if !(z > params.near) {
        return None;
    }
    let iz = 1.0 / z;
    let iz2 = iz * iz;
    let iz4 = iz2 * iz2;
    let k = s2 * f * f;
    let mean = [
        0.5 * camera.width as f64 + f * x * iz,
        0.5 * camera.height as f64 - f * y * iz,
    ];
    let cov = [
        k * (iz2 + x * x * iz4) + params.lowpass,
        -k * x * y * iz4,
        k * (iz2 + y * y * iz4) + params.lowpass,
    ];
    Some((mean, cov, z))
}

/// Full splat for Gaussian `i` of `cloud`, including view-dependent color.
pub fn splat_gaussian(cloud: &GaussianCloud, i: usize, camera: &Camera, params: &ProjectParams) -> Option<Splat2D> {
    let p = cloud.positions[i];
    let (mean2d, cov2d, depth) = project_gaussian(&p, cloud.scale(i), camera, params)?;
    let dir = (p - camera.eye()).normalize();
    let (rgb, _) = sh::color_unclamped(&cloud.sh[i], &dir);
    Some(Splat2D {
        mean2d,
        cov2d,
        depth,
        color: rgb.map(|v| v.clamp(0.0, 1.0)),
        alpha_base: cloud.opacity(i),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: u32, h: u32) -> Camera {
        Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 50.0, w, h).unwrap()
    }

    #[test]
    fn on_axis_gaussian_lands_at_center() {
        let c = cam(64, 48);
        let p = ProjectParams::default();
        let sigma = 0.05;
        let (m, cov, depth) = project_gaussian(&Vec3::zeros(), sigma, &c, &p).unwrap();
        assert!((m[0] - 32.0).abs() < 1e-12 && (m[1] - 24.0).abs() < 1e-12);
        assert!((depth - 3.0).abs() < 1e-12);
        let expect = (c.focal() * sigma / 3.0).powi(2) + p.lowpass;
        assert!((cov[0] - expect).abs() < 1e-12);
        assert!((cov[2] - expect).abs() < 1e-12);
        assert!(cov[1].abs() < 1e-15);
    }

    #[test]
    fn vanishing_scale_hits_lowpass_floor() {
        let c = cam(32, 32);
        let p = ProjectParams::default();
        let (_, cov, _) = project_gaussian(&Vec3::new(0.2, -0.1, 0.3), 0.0, &c, &p).unwrap();
        assert_eq!(cov, [p.lowpass, 0.0, p.lowpass]);
    }

    #[test]
    fn resolution_scaling_is_a_similarity() {
        let p = ProjectParams { lowpass: 0.3, near: 0.01 };
        let a = cam(40, 30);
        let b = cam(120, 90);
        let k = 3.0;
        let pos = Vec3::new(0.3, -0.2, 0.4);
        let (ma, ca, _) = project_gaussian(&pos, 0.07, &a, &p).unwrap();
        let (mb, cb, _) = project_gaussian(&pos, 0.07, &b, &p).unwrap();
        for i in 0..2 {
            assert!((mb[i] - k * ma[i]).abs() < 1e-9);
        }
        // The floor is resolution independent; the projected part scales by k².
        let floor = [p.lowpass, 0.0, p.lowpass];
        for i in 0..3 {
            assert!(((cb[i] - floor[i]) - k * k * (ca[i] - floor[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn behind_camera_is_culled() {
        let c = cam(32, 32);
        assert!(project_gaussian(&Vec3::new(0.0, 0.0, 5.0), 0.1, &c, &ProjectParams::default()).is_none());
    }

    #[test]
    fn cov_eigenvalues_respect_floor() {
        let c = cam(64, 64);
        let p = ProjectParams::default();
        for (i, pos) in [Vec3::new(0.9, 0.7, 0.1), Vec3::new(-1.2, 0.4, -0.5), Vec3::new(0.0, 0.0, 1.5)].iter().enumerate() {
            let (_, cov, _) = project_gaussian(pos, 0.02 * (i + 1) as f64, &c, &p).unwrap();
            let tr = cov[0] + cov[2];
            let det = cov[0] * cov[2] - cov[1] * cov[1];
            let lmin = 0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt();
            assert!(lmin >= p.lowpass - 1e-9);
        }
    }

    #[test]
    fn invalid_cameras_rejected() {
        assert!(Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::z(), 50.0, 8, 8).is_err());
        assert!(Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 180.0, 8, 8).is_err());
        assert!(Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 40.0, 0, 8).is_err());
    }

    #[test]
    fn orbit_height_follows_elevation() {
        let c = Camera::orbit(30.0, 75.0, 2.0, 40.0, 16, 16).unwrap();
        assert!((c.eye[1] - 2.0 * 30f64.to_radians().sin()).abs() < 1e-12);
        assert!((Vec3::from(c.eye).norm() - 2.0).abs() < 1e-12);
        let top = Camera::orbit(90.0, 10.0, 2.0, 40.0, 16, 16).unwrap();
        top.validate().unwrap();
    }
}
