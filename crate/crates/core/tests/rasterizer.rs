mod common;

use common::*;
use rand::Rng;
use splat4d::render::{render, render_backward, render_with, Image, RenderOptions};
use splat4d::scene::{Camera, GaussianCloud, Vec3, SH_COEFFS};
use splat4d::Error;

fn random_camera(r: &mut rand_chacha::ChaCha8Rng, w: u32, h: u32) -> Camera {
    let bg = [r.random(), r.random(), r.random()];
    Camera::orbit(
        r.random_range(-40.0..60.0),
        r.random_range(0.0..360.0),
        r.random_range(2.0..3.5),
        r.random_range(35.0..65.0),
        w,
        h,
    )
    .unwrap()
    .with_background(bg)
}

#[test]
fn forward_matches_global_sort_oracle_on_50_scenes() {
    let mut r = rng(1001);
    let mut worst = 0.0f64;
    for scene in 0..50 {
        let n = r.random_range(1..=100);
        let cloud = random_cloud(n, 0.6, &mut r);
        let cam = random_camera(&mut r, 32, 32);
        let got = render_with(&cloud, &cam, &RenderOptions::exact()).image;
        let want = brute_force_render(&cloud, &cam);
        let err = max_abs(&got, &want);
        assert!(err <= 1e-5, "scene {scene} ({n} Gaussians): max error {err:e}");
        worst = worst.max(err);
    }
    println!("worst pixel error over 50 scenes: {worst:e}");
}

#[test]
fn default_options_stay_close_to_oracle() {
    // Culling and early exit only drop contributions below their thresholds.
    let mut r = rng(1002);
    for _ in 0..10 {
        let cloud = random_cloud(60, 0.6, &mut r);
        let cam = random_camera(&mut r, 32, 32);
        let err = max_abs(&render(&cloud, &cam).image, &brute_force_render(&cloud, &cam));
        assert!(err < 0.02, "{err}");
    }
}

#[test]
fn single_gaussian_at_pixel_center() {
    let cam = Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 50.0, 33, 33)
        .unwrap()
        .with_background([1.0; 3]);
    // Pixel (16, 16) is centred at (16.5, 16.5), exactly the image centre.
    let eta: f64 = 0.7;
    let color = [0.2, 0.5, 0.9];
    let mut sh = [[0.0; SH_COEFFS]; 3];
    for ch in 0..3 {
        sh[ch][0] = (color[ch] - 0.5) / 0.282_094_791_773_878_14;
    }
    let cloud = GaussianCloud::new(vec![Vec3::zeros()], vec![0.05f64.ln()], vec![(eta / (1.0 - eta)).ln()], vec![sh]).unwrap();
    let px = render(&cloud, &cam).image.get(16, 16);
    for ch in 0..3 {
        let want = eta * color[ch] + (1.0 - eta);
        assert!((px[ch] - want).abs() < 1e-12, "{} vs {want}", px[ch]);
    }
}

#[test]
fn empty_cloud_is_pure_background() {
    let cam = Camera::orbit(10.0, 20.0, 2.0, 45.0, 20, 12).unwrap().with_background([0.1, 0.2, 0.3]);
    let out = render(&GaussianCloud::empty(), &cam);
    assert!(out.image.data.iter().all(|p| *p == [0.1, 0.2, 0.3]));
    assert!(out.final_transmittance.iter().all(|t| *t == 1.0));
}

#[test]
fn gaussians_behind_the_camera_are_culled() {
    let cam = Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 50.0, 16, 16)
        .unwrap()
        .with_background([0.0; 3]);
    let mut r = rng(3);
    let mut cloud = random_cloud(5, 0.3, &mut r);
    cloud.positions.iter_mut().for_each(|p| p.z += 5.0);
    let out = render(&cloud, &cam);
    assert!(out.image.data.iter().all(|p| *p == [0.0; 3]));
}

#[test]
fn transmittance_is_in_unit_interval_and_image_finite() {
    let mut r = rng(17);
    for _ in 0..10 {
        let cloud = random_cloud(80, 0.5, &mut r);
        let cam = random_camera(&mut r, 40, 24);
        let out = render(&cloud, &cam);
        assert!(out.final_transmittance.iter().all(|t| (0.0..=1.0).contains(t)));
        assert!(out.image.data.iter().flatten().all(|v| v.is_finite()));
    }
}

#[test]
fn adding_a_gaussian_never_raises_transmittance() {
    let mut r = rng(23);
    for _ in 0..10 {
        let cloud = random_cloud(30, 0.5, &mut r);
        let cam = random_camera(&mut r, 24, 24);
        let before = render_with(&cloud, &cam, &RenderOptions::exact()).final_transmittance;
        let mut more = cloud.clone();
        more.extend_from(&random_cloud(1, 0.5, &mut r));
        let after = render_with(&more, &cam, &RenderOptions::exact()).final_transmittance;
        for (a, b) in after.iter().zip(&before) {
            assert!(*a <= *b + 1e-15);
        }
    }
}

#[test]
fn zero_pixel_gradient_gives_exactly_zero() {
    let mut r = rng(5);
    let cloud = random_cloud(25, 0.5, &mut r);
    let cam = random_camera(&mut r, 24, 20);
    let out = render(&cloud, &cam);
    let g = render_backward(&out, &Image::new(24, 20)).unwrap();
    assert!(g.is_all_zero());
    assert_eq!(g.len(), 25);
}

#[test]
fn backward_without_saved_state_is_a_contract_error() {
    let mut r = rng(6);
    let cloud = random_cloud(5, 0.5, &mut r);
    let cam = random_camera(&mut r, 8, 8);
    let mut out = render(&cloud, &cam);
    out.discard_aux();
    assert!(matches!(render_backward(&out, &Image::new(8, 8)), Err(Error::Contract(_))));
}

#[test]
fn pixel_gradient_shape_mismatch_is_rejected() {
    let mut r = rng(7);
    let cloud = random_cloud(5, 0.5, &mut r);
    let cam = random_camera(&mut r, 8, 8);
    let out = render(&cloud, &cam);
    assert!(render_backward(&out, &Image::new(9, 8)).is_err());
}
