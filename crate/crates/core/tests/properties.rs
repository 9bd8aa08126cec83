//! Property tests for the invariants each module promises.

mod common;

use common::*;
use nalgebra::Rotation3;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use splat4d::deform::{init_field, DeformationField, Gate, NNIndex, Sequence, Side};
use splat4d::distill::{
    assemble_video_gradient, motion_amplify, DistillMode, GuidanceWeights, ScoreBatch, Tensor4,
};
use splat4d::guidance::wire::WireRequest;
use splat4d::guidance::{AnalyticProvider, ModelKind, ScoreProvider, ScoreRequest, Target};
use splat4d::pipeline::SequenceSpec;
use splat4d::regularize::{jsd_reg, rigidity_reg, CloudMoments};
use splat4d::render::{render_with, RenderOptions};
use splat4d::scene::{
    compose_scene, eval_sh, project_gaussian, Camera, GaussianCloud, ProjectParams, RigidPose, SceneAsset, Vec3,
    SH_COEFFS,
};
use splat4d::schedules::{
    densify_prune_step, sample_camera_path_stage2, sample_fps_and_times, sampler_rng, DensifyConfig, DensifyStats,
    FpsDistribution, Stage2Cameras,
};
use splat4d::Error;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

fn camera(r: &mut rand_chacha::ChaCha8Rng, w: u32, h: u32) -> Camera {
    Camera::orbit(r.random_range(-30.0..50.0), r.random_range(0.0..360.0), r.random_range(2.0..3.0), 50.0, w, h)
        .unwrap()
        .with_background([r.random(), r.random(), r.random()])
}

fn unit(r: &mut rand_chacha::ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(gauss(r), gauss(r), gauss(r));
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

fn perturbed_field(width: usize, depth: usize, gate: Gate, r: &mut rand_chacha::ChaCha8Rng) -> DeformationField {
    let mut f = init_field(width, depth, r.random()).unwrap().with_gate(gate);
    for p in f.params_mut() {
        *p = (*p + 0.3 * gauss(r)) as f32 as f64;
    }
    f
}

fn moments(r: &mut rand_chacha::ChaCha8Rng) -> CloudMoments {
    CloudMoments {
        mean: Vec3::new(gauss(r), gauss(r), gauss(r)),
        var: Vec3::new(r.random_range(0.01..2.0), r.random_range(0.01..2.0), r.random_range(0.01..2.0)),
    }
}

fn tensor(shape: [usize; 4], r: &mut rand_chacha::ChaCha8Rng) -> Tensor4 {
    let n = shape.iter().product();
    Tensor4::from_vec(shape, (0..n).map(|_| gauss(r)).collect()).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn rendering_ignores_gaussian_order(seed in any::<u64>(), n in 1usize..60) {
        let mut r = rng(seed);
        let cloud = random_cloud(n, 0.6, &mut r);
        let cam = camera(&mut r, 24, 20);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let permuted = GaussianCloud::new(
            order.iter().map(|&i| cloud.positions[i]).collect(),
            order.iter().map(|&i| cloud.log_scales[i]).collect(),
            order.iter().map(|&i| cloud.opacities_raw[i]).collect(),
            order.iter().map(|&i| cloud.sh[i]).collect(),
        ).unwrap();
        for opts in [RenderOptions::default(), RenderOptions::exact()] {
            let a = render_with(&cloud, &cam, &opts).image;
            let b = render_with(&permuted, &cam, &opts).image;
            prop_assert!(max_abs(&a, &b) <= 1e-6);
        }
    }

    #[test]
    fn sh_colors_stay_in_unit_cube(seed in any::<u64>(), spread in 0.1f64..5.0) {
        let mut r = rng(seed);
        let mut c = [[0.0; SH_COEFFS]; 3];
        for ch in &mut c {
            for v in ch.iter_mut() {
                *v = spread * gauss(&mut r);
            }
        }
        let rgb = eval_sh(&c, &unit(&mut r)).unwrap();
        prop_assert!(rgb.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn projected_covariance_respects_lowpass_floor(seed in any::<u64>(), log_s in -8.0f64..0.0) {
        let mut r = rng(seed);
        let cam = camera(&mut r, 64, 48);
        let p = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let params = ProjectParams::default();
        if let Some((_, cov, depth)) = project_gaussian(&p, log_s.exp(), &cam, &params) {
            let (a, b, c) = (cov[0], cov[1], cov[2]);
            let lo = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
            prop_assert!(lo >= params.lowpass * (1.0 - 1e-12));
            prop_assert!(depth > params.near);
        }
    }

    #[test]
    fn composition_is_associative(seed in any::<u64>(), tau in 0.0f64..1.0) {
        let mut r = rng(seed);
        let mut assets: Vec<SceneAsset> = (0..3)
            .map(|_| {
                let mut a = SceneAsset::still(random_cloud(r.random_range(2..8), 0.3, &mut r));
                a.motion = Sequence::single(perturbed_field(8, 3, Gate::Forward, &mut r));
                a.pose = RigidPose::new(
                    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(unit(&mut r)), r.random_range(0.0..3.0)),
                    Vec3::new(gauss(&mut r), gauss(&mut r), gauss(&mut r)) * 0.3,
                    r.random_range(0.5..1.5),
                ).unwrap();
                a.time_offset = r.random_range(0.0..0.3);
                a
            })
            .collect();
        let flat = compose_scene(&assets, tau).unwrap().cloud;
        let c = assets.pop().unwrap();
        let left = SceneAsset::still(compose_scene(&assets, tau).unwrap().cloud);
        let nested_left = compose_scene(&[left, c.clone()], tau).unwrap().cloud;
        let right = SceneAsset::still(compose_scene(&[assets[1].clone(), c], tau).unwrap().cloud);
        let nested_right = compose_scene(&[assets[0].clone(), right], tau).unwrap().cloud;
        let cam = camera(&mut r, 24, 24);
        let base = render_with(&flat, &cam, &RenderOptions::exact()).image;
        for other in [nested_left, nested_right] {
            prop_assert_eq!(&other, &flat);
            prop_assert_eq!(max_abs(&render_with(&other, &cam, &RenderOptions::exact()).image, &base), 0.0);
        }
    }

    #[test]
    fn posing_commutes_with_deformation(seed in any::<u64>(), tau in 0.0f64..1.0) {
        let mut r = rng(seed);
        let cloud = random_cloud(6, 0.3, &mut r);
        let field = perturbed_field(8, 3, Gate::Forward, &mut r);
        let pose = RigidPose::new(
            Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(unit(&mut r)), r.random_range(0.0..3.0)),
            Vec3::new(0.2, -0.1, 0.4),
            r.random_range(0.5..2.0),
        ).unwrap();
        let mut asset = SceneAsset::still(cloud.clone());
        asset.motion = Sequence::single(field.clone());
        asset.pose = pose.clone();
        let posed = compose_scene(&[asset], tau).unwrap().cloud;
        let disp = field.forward(&cloud.positions, tau).unwrap();
        for i in 0..cloud.len() {
            let want = pose.apply(&(cloud.positions[i] + disp[i]));
            prop_assert!((posed.positions[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn gate_is_monotone_and_bounds_displacement(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mut r = rng(seed);
        let f = perturbed_field(16, 5, Gate::Forward, &mut r);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(f.gate_value(lo) <= f.gate_value(hi));
        prop_assert_eq!(f.gate_value(0.0), 0.0);
        prop_assert_eq!(f.gate_value(1.0), 1.0);
        let pts: Vec<Vec3> = (0..20).map(|_| Vec3::new(gauss(&mut r), gauss(&mut r), gauss(&mut r)) * 3.0).collect();
        let bound = 0.5 * f.gate_value(hi);
        for d in f.forward(&pts, hi).unwrap() {
            prop_assert!(d.amax() < bound || bound == 0.0 && d.amax() == 0.0);
        }
    }

    #[test]
    fn jsd_is_nonnegative_and_zero_only_at_match(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (m0, mt) = (moments(&mut r), moments(&mut r));
        let j = jsd_reg(&m0, &mt);
        prop_assert!(j.loss > 0.0);
        let same = jsd_reg(&m0, &m0);
        prop_assert!(same.loss.abs() < 1e-14);
        prop_assert!(same.d_mean.amax() < 1e-14 && same.d_var.amax() < 1e-12);
    }

    #[test]
    fn jsd_is_invariant_to_shared_translation_and_axis_scaling(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (m0, mt) = (moments(&mut r), moments(&mut r));
        let shift = Vec3::new(gauss(&mut r), gauss(&mut r), gauss(&mut r));
        let k = Vec3::new(r.random_range(0.2..5.0), r.random_range(0.2..5.0), r.random_range(0.2..5.0));
        let k2 = k.component_mul(&k);
        let moved = |m: &CloudMoments| CloudMoments { mean: m.mean + shift, var: m.var };
        let scaled = |m: &CloudMoments| CloudMoments { mean: m.mean.component_mul(&k), var: m.var.component_mul(&k2) };
        let base = jsd_reg(&m0, &mt).loss;
        prop_assert!((jsd_reg(&moved(&m0), &moved(&mt)).loss - base).abs() <= 1e-12 * (1.0 + base));
        prop_assert!((jsd_reg(&scaled(&m0), &scaled(&mt)).loss - base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn rigidity_vanishes_only_for_uniform_motion(seed in any::<u64>(), n in 3usize..30) {
        let mut r = rng(seed);
        let pts: Vec<Vec3> = (0..n).map(|_| Vec3::new(gauss(&mut r), gauss(&mut r), gauss(&mut r))).collect();
        let nn = NNIndex::build(&pts, 2).unwrap();
        let c = Vec3::new(gauss(&mut r), gauss(&mut r), gauss(&mut r));
        let (loss, grad) = rigidity_reg(&vec![c; n], &nn).unwrap();
        prop_assert_eq!(loss, 0.0);
        prop_assert!(grad.iter().all(|g| *g == Vec3::zeros()));
        let mut disp = vec![c; n];
        let i = r.random_range(0..n);
        disp[i] += Vec3::new(1e-3, 0.0, 0.0);
        prop_assert!(rigidity_reg(&disp, &nn).unwrap().0 > 0.0);
    }

    #[test]
    fn motion_amplifier_preserves_frame_mean(seed in any::<u64>(), omega in 0.0f64..30.0, f in 1usize..6) {
        let mut r = rng(seed);
        let t = tensor([f, 3, 2, 3], &mut r);
        let out = motion_amplify(&t, omega);
        let n = t.frame_len();
        for p in 0..n {
            let m_in: f64 = (0..f).map(|k| t.frame(k)[p]).sum::<f64>() / f as f64;
            let m_out: f64 = (0..f).map(|k| out.frame(k)[p]).sum::<f64>() / f as f64;
            prop_assert!((m_in - m_out).abs() <= 1e-12 * (1.0 + omega));
        }
    }

    #[test]
    fn video_gradient_is_linear_in_the_classifier_difference(seed in any::<u64>(), c in -3.0f64..3.0) {
        let mut r = rng(seed);
        let shape = [4, 2, 3, 3];
        let uncond = tensor(shape, &mut r);
        let delta = tensor(shape, &mut r);
        let batch = |d: &Tensor4| ScoreBatch {
            eps_cond: uncond.map2(d, |u, d| u + d),
            eps_uncond: uncond.clone(),
            eps_neg: None,
            eps_aug: None,
            eps_used: None,
        };
        let w = GuidanceWeights { motion_amp: r.random_range(0.0..5.0), ..GuidanceWeights::default() };
        let g1 = assemble_video_gradient(&batch(&delta), &w, 1.0, DistillMode::Csd).unwrap();
        let gc = assemble_video_gradient(&batch(&delta.scale(c)), &w, 1.0, DistillMode::Csd).unwrap();
        for (a, b) in g1.data.iter().zip(&gc.data) {
            prop_assert!((a * c - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn analytic_classifier_ignores_shared_offsets(seed in any::<u64>(), t in 1usize..999, k in -8i32..8) {
        let mut r = rng(seed);
        let shape = [2, 3, 4, 3];
        let n: usize = shape.iter().product();
        // Values on a coarse dyadic grid so the shift is exact in f32.
        let grid = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| r.random_range(-64i32..64) as f64 / 64.0).collect() };
        let (x, y) = (grid(&mut r), grid(&mut r));
        let c = k as f64 / 8.0;
        let shifted = |v: &[f64]| v.iter().map(|a| a + c).collect::<Vec<_>>();
        let diff = |x: Vec<f64>, y: Vec<f64>| {
            let p = AnalyticProvider::new(Target::Fixed(Tensor4::from_vec(shape, y).unwrap()));
            let req = ScoreRequest::new(ModelKind::Image, "x", t, Tensor4::from_vec(shape, x).unwrap(), 5);
            p.score(&req).unwrap().classifier()
        };
        let a = diff(x.clone(), y.clone());
        let b = diff(shifted(&x), shifted(&y));
        for (u, v) in a.data.iter().zip(&b.data) {
            prop_assert!((u - v).abs() <= 1e-6 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn samplers_are_functions_of_seed_and_iteration(seed in any::<u64>(), it in 0u64..100_000) {
        let dist = FpsDistribution::default();
        let cams = Stage2Cameras::default();
        let draw = || {
            let mut g = sampler_rng(seed, it, 2);
            (sample_fps_and_times(&dist, &mut g), sample_camera_path_stage2(&cams, &mut g))
        };
        let ((fps, times), path) = draw();
        prop_assert_eq!(((fps, times.clone()), path), draw());
        let step = 3.0 / (15.0 * fps as f64);
        for w in times.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn densify_respects_cap_and_keeps_opaque_gaussians(
        seed in any::<u64>(),
        n in 1usize..80,
        cap in 1usize..120,
        interval in 1u64..4,
    ) {
        let mut r = rng(seed);
        let mut cloud = random_cloud(n, 0.5, &mut r);
        for o in &mut cloud.opacities_raw {
            *o = r.random_range(-8.0..3.0);
        }
        let mut stats = DensifyStats::new(n);
        for i in 0..n {
            stats.grad_sum[i] = r.random_range(0.0..0.01);
            stats.count[i] = r.random_range(0..4);
        }
        let cfg = DensifyConfig {
            interval,
            warmup: 0,
            max_gaussians: cap,
            opacity_reset_interval: 0,
            ..DensifyConfig::default()
        };
        let before = cloud.clone();
        let out = densify_prune_step(&mut cloud, &mut stats, 12, &cfg, &mut r);
        prop_assert!(cloud.len() <= cap.max(n));
        prop_assert_eq!(out.origins.len(), cloud.len());
        // An opaque input either survives under its own index or was split in place.
        let lost = (0..n)
            .filter(|&i| before.opacity(i) >= cfg.prune_opacity && !out.origins.contains(&Some(i)))
            .count();
        prop_assert!(lost <= out.split, "{} opaque Gaussians lost, {} splits", lost, out.split);
        prop_assert_eq!(cloud.len() + out.pruned, n + out.added());
        prop_assert!((0..cloud.len()).all(|i| cloud.opacity(i) >= cfg.prune_opacity * (1.0 - 1e-6)));
    }

    #[test]
    fn sequence_seams_agree_from_both_sides(seed in any::<u64>(), segments in 2usize..4) {
        let mut r = rng(seed);
        let base: Vec<Vec3> = (0..8).map(|_| Vec3::new(gauss(&mut r), gauss(&mut r), gauss(&mut r)) * 0.3).collect();
        let seq = Sequence {
            fields: (0..segments).map(|_| perturbed_field(8, 3, Gate::Forward, &mut r)).collect(),
            overlap: 0.5,
            looping: false,
        };
        for k in 1..segments {
            for u in [seq.start(k), seq.start(k - 1) + 1.0] {
                let left = seq.positions_at_from(&base, u, Side::Left).unwrap();
                let right = seq.positions_at_from(&base, u, Side::Right).unwrap();
                prop_assert_eq!(left, right);
            }
        }
    }

    #[test]
    fn checkpoints_round_trip_exactly(seed in any::<u64>(), n in 1usize..30, segments in 0usize..3, looping in any::<bool>()) {
        let mut r = rng(seed);
        let mut cloud = random_cloud(n, 0.5, &mut r);
        cloud.quantize();
        let mut sequence = Sequence {
            fields: (0..segments).map(|_| perturbed_field(8, 3, Gate::Forward, &mut r)).collect(),
            overlap: 0.5,
            looping: false,
        };
        if looping && segments > 1 {
            sequence.fields.last_mut().unwrap().set_gate(Gate::BothEnds);
            sequence.looping = true;
        }
        let spec = SequenceSpec { cloud, sequence };
        let bytes = spec.to_bytes();
        prop_assert_eq!(&SequenceSpec::from_bytes(&bytes).unwrap(), &spec);
        prop_assert_eq!(SequenceSpec::from_bytes(&bytes).unwrap().to_bytes(), bytes.clone());
        let cut = r.random_range(0..bytes.len());
        prop_assert!(matches!(SequenceSpec::from_bytes(&bytes[..cut]), Err(Error::Format(_))));
    }

    #[test]
    fn wire_requests_round_trip_through_json(seed in any::<u64>(), f in 1usize..4, t in 0usize..1000) {
        let mut r = rng(seed);
        let shape = [f, r.random_range(1..6), r.random_range(1..6), 3];
        let mut frames = tensor(shape, &mut r);
        frames.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        let mut req = ScoreRequest::new(ModelKind::Video, "a panda dancing", t, frames, r.random());
        req.fps = Some(8);
        if r.random::<bool>() {
            req.negative_prompt = Some("low motion".into());
        }
        let json = serde_json::to_string(&WireRequest::from_request(&req)).unwrap();
        let back: WireRequest = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back.into_request().unwrap(), req);
    }
}
