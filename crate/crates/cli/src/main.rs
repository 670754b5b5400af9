//! `faceswap` command-line tool.
//!
//! Every flag may also be given in a `--config` file as `name = value`, the
//! name being the long flag with dashes turned into underscores. Flags win
//! over the file.
//!
//! Exit status: 0 on success, 1 on usage errors (nothing is written), 2 on
//! runtime errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use faceswap::bench::{BenchRig, FRONTAL_BACKGROUND};
use faceswap::config::KeyValues;
use faceswap::eval::{pose_error, read_pose_csv, write_pose_csv, TraceRow};
use faceswap::facebank::{build_bank, BankGrid, BlendMode};
use faceswap::pipeline::{run_pipeline, DirSource, Mode, PipelineConfig, Session, SliceSource};
use faceswap::synth::{
    frame_file_name, inject_distractor, list_frames, render_frontal, render_sequence, write_frames,
    SceneScript,
};
use faceswap::tracker::{calibrate_template, DEFAULT_TEMPLATE_POINTS};
use faceswap::{Camera, Ellipsoid, FaceBank, RgbImage, Template, Trace, TrackerConfig};

#[derive(Parser, Debug)]
#[command(name = "faceswap", version, about = "Track a head, swap in another face")]
struct Cli {
    /// `name = value` defaults for any flag
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frontal image -> sparse template CSV
    Calibrate {
        #[arg(long)]
        frontal: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Template size
        #[arg(long)]
        points: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Frontal image -> face bank directory
    BuildBank {
        #[arg(long)]
        frontal: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Scene script -> frames and ground-truth CSV
    Synth {
        #[arg(long)]
        script: Option<PathBuf>,
        /// Frame directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ground-truth CSV, default `<out>/truth.csv`
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write the calibration view of the scripted head here
        #[arg(long)]
        frontal: Option<PathBuf>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Frames + template -> pose CSV with status column
    Track {
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tracker: TrackerArgs,
    },
    /// Frames + template + bank -> swapped frames, pose CSV, latency JSON
    Swap {
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Output frame directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pose CSV, default `<out>/poses.csv`
        #[arg(long)]
        poses: Option<PathBuf>,
        /// Latency JSON, default `<out>/latency.json`
        #[arg(long)]
        latency: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        tracker: TrackerArgs,
    },
    /// Estimated + truth pose CSVs -> metrics JSON
    Eval {
        #[arg(long)]
        estimated: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Metrics JSON, default standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthetic benchmark clip through the whole pipeline -> latency JSON
    Bench {
        /// Clip length
        #[arg(long)]
        length: Option<u64>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Camera rate the source is paced at; 0 feeds frames unpaced
        #[arg(long)]
        fps: Option<f64>,
        /// Latency JSON, default standard output
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        tracker: TrackerArgs,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Ellipsoid semi-axis along x, pixels at unit scale
    #[arg(long)]
    ax: Option<f64>,
    #[arg(long)]
    ay: Option<f64>,
    #[arg(long)]
    az: Option<f64>,
    /// Texture resolution, degrees per texel
    #[arg(long)]
    texel_deg: Option<f64>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, allow_negative_numbers = true)]
    pitch_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pitch_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    yaw_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    yaw_max: Option<f64>,
    /// Grid spacing, degrees
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args, Debug)]
struct TrackerArgs {
    #[arg(long)]
    particles: Option<usize>,
    /// Likelihood width
    #[arg(long)]
    sigma: Option<f64>,
    /// Per-point squared residual cap
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lost_threshold: Option<f64>,
    #[arg(long)]
    lost_frames: Option<u32>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Display delay, frames
    #[arg(long)]
    delay: Option<usize>,
    #[arg(long)]
    queue: Option<usize>,
    #[arg(long)]
    feather: Option<usize>,
    #[arg(long, value_enum)]
    blend: Option<BlendArg>,
    /// Skip the swap stage and pass frames through
    #[arg(long)]
    no_swap: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Live,
    Deterministic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BlendArg {
    Nearest,
    Two,
}

macro_rules! value_enum_from_str {
    ($t:ty) => {
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                <$t as ValueEnum>::from_str(s, true)
            }
        }
    };
}
value_enum_from_str!(ModeArg);
value_enum_from_str!(BlendArg);

/// Config keys accepted in `--config` files.
const CONFIG_KEYS: &[&str] = &[
    "seed", "frontal", "out", "points", "ax", "ay", "az", "texel_deg", "pitch_min", "pitch_max",
    "yaw_min", "yaw_max", "step", "script", "truth", "width", "height", "frames", "template",
    "bank", "poses", "latency", "particles", "sigma", "tau", "lost_threshold", "lost_frames",
    "mode", "delay", "queue", "feather", "blend", "no_swap", "estimated", "length", "fps",
];

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(faceswap::Error),
}

impl From<faceswap::Error> for CliError {
    fn from(e: faceswap::Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Flag values layered over the config file.
struct Settings {
    kv: KeyValues,
}

impl Settings {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let kv = match path {
            None => KeyValues::default(),
            Some(p) => KeyValues::read(p).map_err(|e| usage(format!("--config: {e}")))?,
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !CONFIG_KEYS.contains(k)) {
            return Err(usage(format!("--config: unknown key {k:?}")));
        }
        Ok(Settings { kv })
    }

    fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.kv.parsed(key).map_err(|e| usage(format!("--config: {e}")))
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    fn need<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<T> {
        self.opt(flag, key)?
            .ok_or_else(|| usage(format!("missing required --{}", key.replace('_', "-"))))
    }

    fn switch(&self, flag: bool, key: &str) -> CliResult<bool> {
        Ok(flag || self.opt(None, key)?.unwrap_or(false))
    }

    fn model(&self, a: &ModelArgs) -> CliResult<Ellipsoid> {
        let d = Ellipsoid::default();
        let m = Ellipsoid {
            ax: self.or(a.ax, "ax", d.ax)?,
            ay: self.or(a.ay, "ay", d.ay)?,
            az: self.or(a.az, "az", d.az)?,
            texel_deg: self.or(a.texel_deg, "texel_deg", d.texel_deg)?,
        };
        m.validate().map_err(|e| usage(e.to_string()))?;
        Ok(m)
    }

    fn grid(&self, a: &GridArgs) -> CliResult<BankGrid<f64>> {
        let d = BankGrid::default();
        let g = BankGrid {
            pitch_min: self.or(a.pitch_min, "pitch_min", d.pitch_min)?,
            pitch_max: self.or(a.pitch_max, "pitch_max", d.pitch_max)?,
            yaw_min: self.or(a.yaw_min, "yaw_min", d.yaw_min)?,
            yaw_max: self.or(a.yaw_max, "yaw_max", d.yaw_max)?,
            step: self.or(a.step, "step", d.step)?,
        };
        g.validate().map_err(|e| usage(e.to_string()))?;
        Ok(g)
    }

    fn tracker(&self, a: &TrackerArgs) -> CliResult<TrackerConfig> {
        let d = TrackerConfig::default();
        let cfg = TrackerConfig {
            n_particles: self.or(a.particles, "particles", d.n_particles)?,
            sigma: self.or(a.sigma, "sigma", d.sigma)?,
            tau: self.or(a.tau, "tau", d.tau)?,
            lost_threshold: self.or(a.lost_threshold, "lost_threshold", d.lost_threshold)?,
            lost_frames: self.or(a.lost_frames, "lost_frames", d.lost_frames)?,
            ..d
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    fn pipeline(&self, a: &PipelineArgs, seed: u64) -> CliResult<PipelineConfig> {
        let d = PipelineConfig::default();
        let mode = match self.opt(a.mode, "mode")? {
            Some(ModeArg::Live) => Mode::Live,
            Some(ModeArg::Deterministic) | None => Mode::Deterministic,
        };
        let blend = match self.opt(a.blend, "blend")? {
            Some(BlendArg::Two) => BlendMode::TwoNearest,
            Some(BlendArg::Nearest) | None => BlendMode::Nearest,
        };
        let cfg = PipelineConfig {
            mode,
            queue_capacity: self.or(a.queue, "queue", d.queue_capacity)?,
            delay_frames: self.or(a.delay, "delay", d.delay_frames)?,
            swap_enabled: !self.switch(a.no_swap, "no_swap")?,
            seed,
            feather_px: self.or(a.feather, "feather", d.feather_px)?,
            blend,
            ..d
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn camera_for(image: &RgbImage) -> Camera {
    Camera::centered(image.width(), image.height())
}

fn first_frame(dir: &Path) -> faceswap::Result<RgbImage> {
    let paths = list_frames(dir)?;
    let first = paths.first().ok_or(faceswap::Error::EmptyInput)?;
    RgbImage::read_ppm(first)
}

fn ensure_parent(path: &Path) -> faceswap::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|source| {
            faceswap::Error::Io {
                path: p.into(),
                source,
            }
        }),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> faceswap::Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|source| faceswap::Error::Io {
        path: path.into(),
        source,
    })
}

fn emit_json(out: Option<&Path>, value: &str) -> faceswap::Result<()> {
    match out {
        Some(p) => write_text(p, &format!("{value}\n")),
        None => {
            println!("{value}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let s = Settings::load(cli.config.as_deref())?;
    let seed = s.or(cli.seed, "seed", 0u64)?;
    match cli.command {
        Command::Calibrate {
            frontal,
            out,
            points,
            model,
        } => {
            let frontal: PathBuf = s.need(frontal, "frontal")?;
            let out: PathBuf = s.need(out, "out")?;
            let n = s.or(points, "points", DEFAULT_TEMPLATE_POINTS)?;
            let model = s.model(&model)?;
            let image = RgbImage::read_ppm(&frontal)?;
            let cam = camera_for(&image);
            let template = calibrate_template(&image.to_gray(), &model, &cam, n, seed)?;
            ensure_parent(&out)?;
            template.write_csv(&out)?;
            eprintln!("calibrate: {} points -> {}", template.len(), out.display());
        }
        Command::BuildBank {
            frontal,
            out,
            grid,
            model,
        } => {
            let frontal: PathBuf = s.need(frontal, "frontal")?;
            let out: PathBuf = s.need(out, "out")?;
            let grid = s.grid(&grid)?;
            let model = s.model(&model)?;
            let image = RgbImage::read_ppm(&frontal)?;
            let bank = build_bank(&image, &model, &camera_for(&image), grid)?;
            bank.save(&out)?;
            eprintln!("build-bank: {} entries -> {}", bank.len(), out.display());
        }
        Command::Synth {
            script,
            out,
            truth,
            frontal,
            width,
            height,
            model,
        } => {
            let script_path: PathBuf = s.need(script, "script")?;
            let out: PathBuf = s.need(out, "out")?;
            let truth = s.opt(truth, "truth")?.unwrap_or_else(|| out.join("truth.csv"));
            let frontal: Option<PathBuf> = s.opt(frontal, "frontal")?;
            let width = s.or(width, "width", 320usize)?;
            let height = s.or(height, "height", 240usize)?;
            if width < 2 || height < 2 {
                return Err(usage("--width and --height must be at least 2"));
            }
            let model = s.model(&model)?;
            let cam = Camera::centered(width, height);
            let mut script = SceneScript::read(&script_path)?;
            if let Some(spec) = script.distractor.take() {
                script = inject_distractor(&script, spec, &model, &cam)?;
            }
            let (frames, trace): (Vec<RgbImage>, Trace) = render_sequence(&script, &model, &cam)?;
            write_frames(&out, &frames)?;
            ensure_parent(&truth)?;
            trace.write_csv(&truth)?;
            if let Some(path) = frontal {
                ensure_parent(&path)?;
                render_frontal(&script.texture, &model, &cam, FRONTAL_BACKGROUND).write_ppm(&path)?;
            }
            eprintln!("synth: {} frames -> {}", frames.len(), out.display());
        }
        Command::Track {
            frames,
            template,
            out,
            tracker,
        } => {
            let frames: PathBuf = s.need(frames, "frames")?;
            let template: PathBuf = s.need(template, "template")?;
            let out: PathBuf = s.need(out, "out")?;
            let cfg = s.tracker(&tracker)?;
            let template = Template::read_csv(&template)?;
            let paths = list_frames(&frames)?;
            let first = paths.first().ok_or(faceswap::Error::EmptyInput)?;
            let cam = camera_for(&RgbImage::read_ppm(first)?);
            let mut tracker = faceswap::HeadTracker::new(template, cam, cfg, seed)?;
            let mut rows = Vec::with_capacity(paths.len());
            for (k, path) in paths.iter().enumerate() {
                let image = RgbImage::read_ppm(path)?;
                let out = tracker.track_frame(&image.to_gray())?;
                rows.push(TraceRow {
                    frame: k as u64,
                    pose: out.pose,
                    status: Some(out.status),
                });
            }
            ensure_parent(&out)?;
            write_pose_csv(&out, &rows)?;
            eprintln!("track: {} frames -> {}", rows.len(), out.display());
        }
        Command::Swap {
            frames,
            template,
            bank,
            out,
            poses,
            latency,
            pipeline,
            tracker,
        } => {
            let frames: PathBuf = s.need(frames, "frames")?;
            let template: PathBuf = s.need(template, "template")?;
            let bank: PathBuf = s.need(bank, "bank")?;
            let out: PathBuf = s.need(out, "out")?;
            let poses = s.opt(poses, "poses")?.unwrap_or_else(|| out.join("poses.csv"));
            let latency = s.opt(latency, "latency")?.unwrap_or_else(|| out.join("latency.json"));
            let tcfg = s.tracker(&tracker)?;
            let pcfg = s.pipeline(&pipeline, seed)?;
            let template = Template::read_csv(&template)?;
            let bank = FaceBank::load(&bank)?;
            let cam = camera_for(&first_frame(&frames)?);
            let session = Session {
                template: &template,
                bank: &bank,
                cam,
                tracker: &tcfg,
            };
            std::fs::create_dir_all(&out).map_err(|source| faceswap::Error::Io {
                path: out.clone(),
                source,
            })?;
            let summary = run_pipeline(DirSource::open(&frames)?, &session, &pcfg, |msg| {
                msg.displayed().write_ppm(out.join(frame_file_name(msg.frame_index)))
            })?;
            ensure_parent(&poses)?;
            write_pose_csv(&poses, &summary.poses)?;
            write_text(&latency, &format!("{}\n", summary.report.to_json()))?;
            eprintln!(
                "swap: {} frames, {} dropped, mean latency {:.1} ms -> {}",
                summary.report.frames,
                summary.report.dropped,
                summary.report.mean_ms,
                out.display()
            );
        }
        Command::Eval {
            estimated,
            truth,
            out,
        } => {
            let estimated: PathBuf = s.need(estimated, "estimated")?;
            let truth: PathBuf = s.need(truth, "truth")?;
            let out: Option<PathBuf> = s.opt(out, "out")?;
            let est = read_pose_csv::<f64>(&estimated)?;
            let tru = read_pose_csv::<f64>(&truth)?;
            let metrics = pose_error(&est, &tru)?;
            emit_json(out.as_deref(), &metrics.to_json().to_string())?;
        }
        Command::Bench {
            length,
            width,
            height,
            fps,
            out,
            pipeline,
            tracker,
        } => {
            let length = s.or(length, "length", 300u64)?;
            let width = s.or(width, "width", 320usize)?;
            let height = s.or(height, "height", 240usize)?;
            let fps = s.or(fps, "fps", 30.0f64)?;
            let out: Option<PathBuf> = s.opt(out, "out")?;
            if length == 0 || width < 2 || height < 2 {
                return Err(usage("--length, --width and --height must be positive"));
            }
            if !(fps >= 0.0 && fps.is_finite()) {
                return Err(usage("--fps must be a non-negative number"));
            }
            let tcfg = s.tracker(&tracker)?;
            let mut pcfg = s.pipeline(&pipeline, seed)?;
            pcfg.source_fps = (fps > 0.0).then_some(fps);
            let script = SceneScript {
                duration: length,
                ..SceneScript::benchmark()
            };
            let rig = BenchRig::<f64>::new(&script, width, height, seed)?;
            let started = Instant::now();
            let summary = run_pipeline(
                SliceSource::new(&rig.frames),
                &rig.session(&tcfg),
                &pcfg,
                |_| Ok(()),
            )?;
            let wall = started.elapsed().as_secs_f64();
            let r = &summary.report;
            eprintln!(
                "bench: {} frames in {wall:.2} s, latency mean {:.1} ms, p95 {:.1} ms, {} dropped",
                r.frames, r.mean_ms, r.p95_ms, r.dropped
            );
            emit_json(out.as_deref(), &r.to_json())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            let mut err = std::io::stderr().lock();
            let _ = write!(err, "error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let _ = write!(err, ": {s}");
                source = s.source();
            }
            let _ = writeln!(err);
            ExitCode::from(2)
        }
    }
}
