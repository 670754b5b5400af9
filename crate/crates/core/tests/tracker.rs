use faceswap::eval::pose_error_poses;
use faceswap::geometry::PoseState;
use faceswap::image::GrayImage;
use faceswap::synth::{render_frontal, render_sequence, SceneScript, TextureSpec, Trajectory};
use faceswap::tracker::{
    calibrate_template, estimate, mean_residual, predict, resample, weigh, Particle, ParticleSet,
    SparseTemplate, TrackStatus, Tracker, TrackerConfig,
};
use faceswap::{Camera, Ellipsoid, Error, Pose, Template};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup() -> (Ellipsoid, Camera, Template) {
    let m = Ellipsoid::default();
    let cam = Camera::centered(320, 240);
    let frontal = render_frontal(&TextureSpec::default(), &m, &cam, 0.5).to_gray();
    let tmpl = calibrate_template(&frontal, &m, &cam, 400, 5).unwrap();
    (m, cam, tmpl)
}

fn gray_frames(script: &SceneScript, m: &Ellipsoid, cam: &Camera) -> (Vec<GrayImage>, Vec<Pose>) {
    let (frames, truth) = render_sequence(script, m, cam).unwrap();
    (frames.iter().map(|f| f.to_gray()).collect(), truth.0)
}

#[test]
fn static_head_converges() {
    let (m, cam, tmpl) = setup();
    let (frames, truth) = gray_frames(&SceneScript::still(30), &m, &cam);
    let mut tracker = Tracker::new(tmpl, cam, TrackerConfig::default(), 11).unwrap();
    let mut last = None;
    for f in &frames {
        last = Some(tracker.track_frame(f).unwrap());
    }
    let out = last.unwrap();
    let t = truth[29];
    assert_eq!(out.status, TrackStatus::Tracking);
    for (e, g) in [(out.pose.rx, t.rx), (out.pose.ry, t.ry), (out.pose.rz, t.rz)] {
        assert!((e - g).abs() <= 2.0, "rotation {e} vs {g}");
    }
    assert!((out.pose.tx - t.tx).abs() <= 2.0);
    assert!((out.pose.ty - t.ty).abs() <= 2.0);
}

#[test]
fn static_head_f32() {
    let m = faceswap::geometry::EllipsoidModel::<f32>::default();
    let cam = faceswap::geometry::CameraModel::<f32>::centered(320, 240);
    let frontal = render_frontal(&TextureSpec::default(), &m, &cam, 0.5).to_gray();
    let tmpl = calibrate_template(&frontal, &m, &cam, 400, 5).unwrap();
    let (frames, _) = render_sequence(&SceneScript::still(30), &m, &cam).unwrap();
    let mut tracker = Tracker::<f32>::new(tmpl, cam, TrackerConfig::default(), 11).unwrap();
    let mut pose = PoseState::identity();
    for f in &frames {
        pose = tracker.track_frame(&f.to_gray()).unwrap().pose;
    }
    assert!(pose.rx.abs() <= 2.0 && pose.ry.abs() <= 2.0 && pose.rz.abs() <= 2.0);
    assert!(pose.tx.abs() <= 2.0 && pose.ty.abs() <= 2.0);
}

#[test]
fn yaw_sweep_within_nine_degrees() {
    let (m, cam, tmpl) = setup();
    let script = SceneScript {
        ry: Trajectory::sinusoid(40.0, 150.0),
        ..SceneScript::still(300)
    };
    let (frames, truth) = gray_frames(&script, &m, &cam);
    let mut tracker = Tracker::new(tmpl, cam, TrackerConfig::default(), 2).unwrap();
    let est: Vec<Pose> = frames.iter().map(|f| tracker.track_frame(f).unwrap().pose).collect();
    let metrics = pose_error_poses(&est, &truth).unwrap();
    assert!(metrics.mae.ry <= 9.0, "yaw MAE {}", metrics.mae.ry);
}

/// Binary noise in 8x8 blocks, so bilinear sampling mostly reads pure 0 or 1.
fn block_noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    let (bw, bh) = (w.div_ceil(8), h.div_ceil(8));
    let blocks: Vec<f32> = (0..bw * bh).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
    GrayImage::from_fn(w, h, |x, y| blocks[(y / 8) * bw + x / 8])
}

#[test]
fn pure_noise_turns_lost() {
    let (m, cam, tmpl) = setup();
    let (frames, _) = gray_frames(&SceneScript::still(5), &m, &cam);
    let mut tracker = Tracker::new(tmpl, cam, TrackerConfig::default(), 4).unwrap();
    for f in &frames {
        assert_eq!(tracker.track_frame(f).unwrap().status, TrackStatus::Tracking);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut statuses = Vec::new();
    for _ in 0..10 {
        let noise = block_noise(320, 240, &mut rng);
        statuses.push(tracker.track_frame(&noise).unwrap().status);
    }
    assert!(statuses[..9].iter().all(|s| *s == TrackStatus::Tracking));
    assert_eq!(statuses[9], TrackStatus::Lost);
}

#[test]
fn exact_pose_beats_displaced_pose() {
    let (m, cam, tmpl) = setup();
    let (frames, truth) = gray_frames(&SceneScript::still(1), &m, &cam);
    let exact = truth[0];
    let displaced = Pose { tx: exact.tx + 30.0, ..exact };
    assert_eq!(mean_residual(&exact, &frames[0], &tmpl, &cam, Some(0.25)), Some(0.0));
    let mut set = ParticleSet::from_particles(
        vec![
            Particle { state: exact, weight: 0.5 },
            Particle { state: displaced, weight: 0.5 },
        ],
        0,
    );
    let w = weigh(&mut set, &frames[0], &tmpl, &cam, &TrackerConfig::default()).unwrap();
    assert!(w[0] > w[1]);
    let cfg = TrackerConfig::<f64>::default();
    assert_eq!(faceswap::tracker::likelihood(&exact, &frames[0], &tmpl, &cam, &cfg), 1.0);
}

#[test]
fn residual_is_illumination_equivariant() {
    let (m, cam, tmpl) = setup();
    let script = SceneScript {
        ry: Trajectory::Constant(12.0),
        rx: Trajectory::Constant(-8.0),
        ..SceneScript::still(1)
    };
    let (frames, truth) = gray_frames(&script, &m, &cam);
    let c = 0.7f32;
    let dim = frames[0].map(|v| v * c);
    for offset in [0.0, 1.5, 4.0] {
        let base = Pose { tx: truth[0].tx + offset, ..truth[0] };
        let scaled = Pose { alpha: c as f64, ..base };
        let a = mean_residual(&base, &frames[0], &tmpl, &cam, Some(0.25)).unwrap();
        let b = mean_residual(&scaled, &dim, &tmpl, &cam, Some(0.25)).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

fn random_set(n: usize, seed: u64) -> ParticleSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let particles = (0..n)
        .map(|_| Particle {
            state: Pose {
                tx: rng.random_range(-6.0..6.0),
                ty: rng.random_range(-6.0..6.0),
                s: rng.random_range(0.9..1.1),
                ..Pose::identity()
            }
            .with_rotation(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-5.0..5.0),
            ),
            weight: 1.0 / n as f64,
        })
        .collect();
    ParticleSet::from_particles(particles, seed)
}

#[test]
fn weights_follow_particles_under_permutation() {
    let (m, cam, tmpl) = setup();
    let (frames, _) = gray_frames(&SceneScript::still(1), &m, &cam);
    let cfg = TrackerConfig::default();
    let mut set = random_set(64, 3);
    let w = weigh(&mut set, &frames[0], &tmpl, &cam, &cfg).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let perm: Vec<usize> = (0..64).map(|i| (i * 37) % 64).collect();
    let shuffled: Vec<Particle<f64>> = perm.iter().map(|&i| set.particles[i]).collect();
    let mut other = ParticleSet::from_particles(shuffled, 3);
    let w2 = weigh(&mut other, &frames[0], &tmpl, &cam, &cfg).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert!((w2[k] - w[i]).abs() <= 1e-12 * w[i].max(1e-300));
    }
}

#[test]
fn weigh_rejects_empty_template_and_wrong_frame() {
    let (m, cam, tmpl) = setup();
    let (frames, _) = gray_frames(&SceneScript::still(1), &m, &cam);
    let cfg = TrackerConfig::default();
    let empty = SparseTemplate { points: vec![], source: String::new() };
    let mut set = random_set(4, 1);
    assert!(matches!(weigh(&mut set, &frames[0], &empty, &cam, &cfg), Err(Error::EmptyTemplate)));
    let small = GrayImage::new(10, 10, 0.5);
    assert!(matches!(
        weigh(&mut set, &small, &tmpl, &cam, &cfg),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn off_frame_particles_get_worst_case_weight() {
    let (m, cam, tmpl) = setup();
    let (frames, truth) = gray_frames(&SceneScript::still(1), &m, &cam);
    let cfg = TrackerConfig::default();
    let far = Pose { tx: 5000.0, ..truth[0] };
    let mut set = ParticleSet::from_particles(
        vec![
            Particle { state: truth[0], weight: 0.5 },
            Particle { state: far, weight: 0.5 },
        ],
        0,
    );
    let w = weigh(&mut set, &frames[0], &tmpl, &cam, &cfg).unwrap();
    let expected = (-cfg.tau / (2.0 * cfg.sigma * cfg.sigma)).exp();
    assert!((w[1] / w[0] - expected).abs() <= 1e-12 * expected.max(1e-300) + 1e-300);
}

#[test]
fn identical_seeds_give_identical_traces() {
    let (m, cam, tmpl) = setup();
    let script = SceneScript { duration: 40, ..SceneScript::benchmark() };
    let (frames, _) = gray_frames(&script, &m, &cam);
    let run = |seed| {
        let mut t = Tracker::new(tmpl.clone(), cam, TrackerConfig::default(), seed).unwrap();
        frames.iter().map(|f| t.track_frame(f).unwrap().pose).collect::<Vec<_>>()
    };
    let a = run(8);
    assert_eq!(a, run(8));
    assert_ne!(a, run(9));
}

#[test]
fn predict_displacement_matches_velocity() {
    let cfg = TrackerConfig::<f64>::default();
    let n = 500;
    let start = Pose { tx_dot: 2.0, ..Pose::identity() };
    let particles = vec![Particle { state: start, weight: 1.0 / n as f64 }; n];
    let mut set = ParticleSet::from_particles(particles, 17);
    predict(&mut set, &cfg);
    let mean = set.particles.iter().map(|p| p.state.tx).sum::<f64>() / n as f64;
    let bound = 3.0 * cfg.motion_std.tx / (n as f64).sqrt();
    assert!((mean - 2.0).abs() <= bound, "mean displacement {mean}");
    assert_eq!(set.len(), n);
}

#[test]
fn predict_keeps_state_valid() {
    let cfg = TrackerConfig::<f64> {
        motion_std: Pose::splat(50.0),
        ..TrackerConfig::default()
    };
    let start = Pose { s: 0.01, alpha: 0.01, ry: 179.0, ..Pose::identity() };
    let mut set = ParticleSet::from_particles(vec![Particle { state: start, weight: 1.0 }; 200], 5);
    predict(&mut set, &cfg);
    for p in &set.particles {
        assert!(p.state.is_valid(), "{:?}", p.state);
        assert!(p.state.s > 1e-3 - 1e-15 && p.state.alpha > 1e-3 - 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn estimate_matches_brute_force_mean(
        raw in prop::collection::vec((prop::array::uniform10(-50.0..50.0f64), 0.0..1.0f64), 1..40)
    ) {
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        prop_assume!(total > 1e-6);
        let particles: Vec<Particle<f64>> = raw
            .iter()
            .map(|(a, w)| Particle { state: PoseState::from_array(*a), weight: w / total })
            .collect();
        let est = estimate(&ParticleSet::from_particles(particles.clone(), 0)).to_array();
        for (d, e) in est.iter().enumerate() {
            let mut num = 0.0;
            let mut den = 0.0;
            for p in &particles {
                num += p.weight * p.state.to_array()[d];
                den += p.weight;
            }
            prop_assert!((e - num / den).abs() < 1e-12 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn resample_preserves_cardinality(
        weights in prop::collection::vec(0.0..1.0f64, 1..200),
        seed in any::<u64>(),
    ) {
        let total: f64 = weights.iter().sum();
        prop_assume!(total > 0.0);
        let particles: Vec<Particle<f64>> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| Particle { state: Pose { tx: i as f64, ..Pose::identity() }, weight: w / total })
            .collect();
        let n = particles.len();
        let mut set = ParticleSet::from_particles(particles, seed);
        resample(&mut set).unwrap();
        prop_assert_eq!(set.len(), n);
        for p in &set.particles {
            prop_assert_eq!(p.weight, 1.0 / n as f64);
            // zero-weight particles never survive
            prop_assert!(weights[p.state.tx as usize] > 0.0);
        }
    }
}

#[test]
fn resample_examples() {
    let mk = |ws: &[f64]| {
        let particles = ws
            .iter()
            .enumerate()
            .map(|(i, &w)| Particle { state: Pose { tx: i as f64, ..Pose::identity() }, weight: w })
            .collect();
        ParticleSet::from_particles(particles, 21)
    };
    let mut one_hot = mk(&[1.0, 0.0, 0.0, 0.0]);
    resample(&mut one_hot).unwrap();
    assert!(one_hot.particles.iter().all(|p| p.state.tx == 0.0));

    let mut uniform = mk(&[0.25; 4]);
    resample(&mut uniform).unwrap();
    let mut got: Vec<f64> = uniform.particles.iter().map(|p| p.state.tx).collect();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(got, vec![0.0, 1.0, 2.0, 3.0]);

    let mut dead = mk(&[0.0, 0.0]);
    assert!(matches!(resample(&mut dead), Err(Error::DegenerateWeights)));
}
