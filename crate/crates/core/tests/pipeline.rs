use faceswap::facebank::{build_bank, BankGrid};
use faceswap::pipeline::{
    run_pipeline, run_sequential, DirSource, FrameMsg, Mode, PipelineConfig, Session, SliceSource,
    VecSource,
};
use faceswap::synth::{render_frontal, render_sequence, write_frames, SceneScript, TextureSpec};
use faceswap::tracker::{calibrate_template, DEFAULT_TEMPLATE_POINTS};
use faceswap::{Camera, Ellipsoid, Error, FaceBank, RgbImage, Template, TrackStatus, TrackerConfig};
use std::sync::OnceLock;

struct Fixture {
    cam: Camera,
    template: Template,
    bank: FaceBank,
    tracker: TrackerConfig,
    frames: Vec<RgbImage>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let model = Ellipsoid::default();
        let cam = Camera::centered(320, 240);
        let script = SceneScript { duration: 40, ..SceneScript::benchmark() };
        let frontal_a = render_frontal(&script.texture, &model, &cam, 0.5).to_gray();
        let template = calibrate_template(&frontal_a, &model, &cam, DEFAULT_TEMPLATE_POINTS, 1).unwrap();
        let texture_b = TextureSpec { seed: 99, tint: [1.0, 0.8, 0.6], ..TextureSpec::default() };
        let frontal_b = render_frontal(&texture_b, &model, &cam, 0.5);
        let bank = build_bank(&frontal_b, &model, &cam, BankGrid::default()).unwrap();
        let (frames, _) = render_sequence(&script, &model, &cam).unwrap();
        Fixture { cam, template, bank, tracker: TrackerConfig::default(), frames }
    })
}

fn session(f: &Fixture) -> Session<'_, f64> {
    Session { template: &f.template, bank: &f.bank, cam: f.cam, tracker: &f.tracker }
}

type Collected = Vec<FrameMsg<f64>>;

fn collect_concurrent(cfg: &PipelineConfig) -> Collected {
    let f = fixture();
    let mut out = Vec::new();
    run_pipeline(SliceSource::new(&f.frames), &session(f), cfg, |m| {
        out.push(m);
        Ok(())
    })
    .unwrap();
    out
}

fn displayed(msgs: &Collected) -> Vec<RgbImage> {
    msgs.iter().map(|m| m.displayed().clone()).collect()
}

#[test]
fn deterministic_runs_are_identical_and_match_sequential() {
    let f = fixture();
    let cfg = PipelineConfig { seed: 5, ..PipelineConfig::default() };
    let a = collect_concurrent(&cfg);
    let b = collect_concurrent(&cfg);
    assert_eq!(a.len(), f.frames.len());
    assert_eq!(displayed(&a), displayed(&b));
    let mut seq = Vec::new();
    run_sequential(SliceSource::new(&f.frames), &session(f), &cfg, |m| {
        seq.push(m);
        Ok(())
    })
    .unwrap();
    assert_eq!(displayed(&a), displayed(&seq));
    for (x, y) in a.iter().zip(&seq) {
        assert_eq!(x.frame_index, y.frame_index);
        assert_eq!(x.pose, y.pose);
        assert_eq!(x.status, y.status);
    }
    // the face really was replaced
    assert!(a.iter().all(|m| m.status == Some(TrackStatus::Tracking)));
    assert!(a.iter().zip(&f.frames).all(|(m, src)| m.displayed() != src));
}

#[test]
fn other_seeds_give_other_poses() {
    let a = collect_concurrent(&PipelineConfig { seed: 5, ..PipelineConfig::default() });
    let b = collect_concurrent(&PipelineConfig { seed: 6, ..PipelineConfig::default() });
    assert!(a.iter().zip(&b).any(|(x, y)| x.pose != y.pose));
}

#[test]
fn live_mode_sheds_load_and_keeps_order() {
    let f = fixture();
    // a heavy tracker against an unpaced source guarantees backlog
    let heavy = TrackerConfig { n_particles: 4000, ..TrackerConfig::default() };
    let s = Session { tracker: &heavy, ..session(f) };
    let cfg = PipelineConfig { mode: Mode::Live, queue_capacity: 1, ..PipelineConfig::default() };
    let mut indices = Vec::new();
    let summary = run_pipeline(SliceSource::new(&f.frames), &s, &cfg, |m| {
        indices.push(m.frame_index);
        Ok(())
    })
    .unwrap();
    assert!(summary.report.dropped > 0);
    assert_eq!(indices.len() as u64 + summary.report.dropped, f.frames.len() as u64);
    assert!(indices.windows(2).all(|w| w[0] < w[1]), "{indices:?}");
    assert_eq!(summary.report.frames, indices.len());
}

#[test]
fn disabled_swap_passes_frames_through() {
    let f = fixture();
    let cfg = PipelineConfig { swap_enabled: false, ..PipelineConfig::default() };
    let out = collect_concurrent(&cfg);
    assert_eq!(displayed(&out), f.frames);
    assert!(out.iter().all(|m| m.pose.is_some()));

    let cfg = PipelineConfig { track_enabled: false, ..PipelineConfig::default() };
    let out = collect_concurrent(&cfg);
    assert_eq!(displayed(&out), f.frames);
    assert!(out.iter().all(|m| m.pose.is_none()));
}

#[test]
fn display_delay_shifts_by_exactly_d() {
    let f = fixture();
    let tagged: Vec<RgbImage> = (0..40).map(|k| RgbImage::new(4, 3, [k as f32 / 64.0; 3])).collect();
    for d in [0usize, 5, 30] {
        let cfg = PipelineConfig { delay_frames: d, track_enabled: false, ..PipelineConfig::default() };
        let mut out = Vec::new();
        run_pipeline(VecSource::new(tagged.clone()), &session(f), &cfg, |m| {
            out.push(m.displayed().clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(out.len(), tagged.len());
        for (k, img) in out.iter().enumerate() {
            assert_eq!(img, &tagged[k.saturating_sub(d)], "d={d} k={k}");
        }
    }
}

#[test]
fn latency_covers_every_stage() {
    let cfg = PipelineConfig::default();
    let out = collect_concurrent(&cfg);
    for m in &out {
        let lat = m.latency_ns.unwrap();
        assert!(lat >= m.stage_ns.iter().sum::<u64>(), "{lat} < {:?}", m.stage_ns);
        assert!(m.stage_ns[1] > 0);
    }
}

#[test]
fn summary_reports_poses_and_latency() {
    let f = fixture();
    let cfg = PipelineConfig::default();
    let summary = run_pipeline(SliceSource::new(&f.frames), &session(f), &cfg, |_| Ok(())).unwrap();
    assert_eq!(summary.poses.len(), f.frames.len());
    assert_eq!(summary.report.frames, f.frames.len());
    assert_eq!(summary.report.dropped, 0);
    let r = &summary.report;
    assert!(r.p50_ms <= r.p95_ms && r.p95_ms <= r.max_ms && r.mean_ms <= r.max_ms);
}

#[test]
fn failing_sink_reports_its_stage() {
    let f = fixture();
    let cfg = PipelineConfig { track_enabled: false, ..PipelineConfig::default() };
    let res = run_pipeline(SliceSource::new(&f.frames), &session(f), &cfg, |m| {
        if m.frame_index == 3 {
            Err(Error::InvalidArgument("display closed".into()))
        } else {
            Ok(())
        }
    });
    assert!(matches!(res, Err(Error::StageFailure { stage: "sink", .. })), "{res:?}");
    let res = run_sequential(SliceSource::new(&f.frames), &session(f), &cfg, |_| {
        Err(Error::InvalidArgument("display closed".into()))
    });
    assert!(matches!(res, Err(Error::StageFailure { stage: "sink", .. })));
}

#[test]
fn bad_source_and_config_are_rejected() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("frame_000000.ppm"), b"not an image").unwrap();
    let res = run_pipeline(DirSource::open(dir.path()).unwrap(), &session(f), &PipelineConfig::default(), |_| Ok(()));
    assert!(matches!(res, Err(Error::StageFailure { stage: "source", .. })), "{res:?}");

    let cfg = PipelineConfig { queue_capacity: 0, ..PipelineConfig::default() };
    let res = run_pipeline(SliceSource::new(&f.frames), &session(f), &cfg, |_| Ok(()));
    assert!(matches!(res, Err(Error::InvalidArgument(_))));
}

#[test]
fn directory_source_reads_frames_in_order() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    write_frames(dir.path(), &f.frames[..6]).unwrap();
    let cfg = PipelineConfig { track_enabled: false, ..PipelineConfig::default() };
    let mut out = Vec::new();
    run_pipeline(DirSource::open(dir.path()).unwrap(), &session(f), &cfg, |m| {
        out.push(m.displayed().clone());
        Ok(())
    })
    .unwrap();
    let want: Vec<RgbImage> = f.frames[..6].iter().map(|i| i.quantized()).collect();
    assert_eq!(out, want);
}
