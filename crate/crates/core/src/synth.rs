//! Synthetic textured-ellipsoid head sequences with exact ground truth.
//!
//! The rendered trace is the script formula evaluated per frame, so every
//! tracking error measured against it belongs to the tracker.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::geometry::{
    silhouette_bounds, unproject_pixel, wrap_degrees, CameraModel, EllipsoidModel, PoseState,
};
use crate::image::{GrayImage, RgbImage};
use crate::scalar::{lit, to_f64, Real};

/// Time course of one pose dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Trajectory {
    Constant(f64),
    /// Linear from `from` at frame `start` to `to` at frame `end`, held outside.
    Ramp {
        from: f64,
        to: f64,
        start: u64,
        end: u64,
    },
    /// `offset + amplitude * sin(2 pi k / period + phase)`, phase in degrees.
    Sinusoid {
        amplitude: f64,
        period: f64,
        phase_deg: f64,
        offset: f64,
    },
}

impl Trajectory {
    pub fn sinusoid(amplitude: f64, period: f64) -> Self {
        Trajectory::Sinusoid {
            amplitude,
            period,
            phase_deg: 0.0,
            offset: 0.0,
        }
    }

    pub fn eval(&self, k: f64) -> f64 {
        match *self {
            Trajectory::Constant(v) => v,
            Trajectory::Ramp {
                from,
                to,
                start,
                end,
            } => {
                if end <= start {
                    return if k < start as f64 { from } else { to };
                }
                let t = ((k - start as f64) / (end - start) as f64).clamp(0.0, 1.0);
                from + (to - from) * t
            }
            Trajectory::Sinusoid {
                amplitude,
                period,
                phase_deg,
                offset,
            } => {
                offset
                    + amplitude
                        * (2.0 * std::f64::consts::PI * k / period + phase_deg.to_radians()).sin()
            }
        }
    }

    /// Largest absolute value reached over `[0, duration)`.
    fn peak(&self, duration: u64) -> f64 {
        match *self {
            Trajectory::Constant(v) => v.abs(),
            Trajectory::Ramp { from, to, .. } => from.abs().max(to.abs()),
            Trajectory::Sinusoid {
                amplitude, offset, ..
            } => (0..duration)
                .map(|k| self.eval(k as f64).abs())
                .fold(offset.abs().min(amplitude.abs()), f64::max),
        }
    }

    fn min_value(&self, duration: u64) -> f64 {
        (0..duration)
            .map(|k| self.eval(k as f64))
            .fold(f64::INFINITY, f64::min)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = match *self {
            Trajectory::Constant(v) => !v.is_finite(),
            Trajectory::Ramp { from, to, .. } => !(from.is_finite() && to.is_finite()),
            Trajectory::Sinusoid {
                amplitude,
                period,
                phase_deg,
                offset,
            } => {
                !(amplitude.is_finite()
                    && offset.is_finite()
                    && phase_deg.is_finite()
                    && period.is_finite()
                    && period > 0.0)
            }
        };
        if bad {
            Err(Error::InvalidScript(format!("bad trajectory for {name}")))
        } else {
            Ok(())
        }
    }
}

fn parse_numbers(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|w| {
            w.parse::<f64>()
                .map_err(|_| Error::InvalidScript(format!("{what}: bad number {w:?}")))
        })
        .collect()
}

/// `const V`, `ramp FROM TO START END` or `sin AMP PERIOD [PHASE [OFFSET]]`.
/// A bare number is a constant.
impl FromStr for Trajectory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
        if let Ok(v) = kind.parse::<f64>() {
            if rest.trim().is_empty() {
                return Ok(Trajectory::Constant(v));
            }
        }
        let args = parse_numbers(rest, kind)?;
        let bad = || Error::InvalidScript(format!("bad trajectory {s:?}"));
        match (kind, args.as_slice()) {
            ("const", [v]) => Ok(Trajectory::Constant(*v)),
            ("ramp", [from, to, start, end]) => {
                if *start < 0.0 || *end < 0.0 || start.fract() != 0.0 || end.fract() != 0.0 {
                    return Err(bad());
                }
                Ok(Trajectory::Ramp {
                    from: *from,
                    to: *to,
                    start: *start as u64,
                    end: *end as u64,
                })
            }
            ("sin", [amplitude, period, rest @ ..]) if rest.len() <= 2 => Ok(Trajectory::Sinusoid {
                amplitude: *amplitude,
                period: *period,
                phase_deg: rest.first().copied().unwrap_or(0.0),
                offset: rest.get(1).copied().unwrap_or(0.0),
            }),
            _ => Err(bad()),
        }
    }
}

/// Procedural surface texture: a longitude/latitude checker with seeded
/// per-cell gray levels and an optional vertical shading ramp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TextureSpec {
    /// Checker cell size, texels.
    pub checker: f64,
    /// Weight of the vertical shading ramp in `[0, 1]`.
    pub gradient: f64,
    pub seed: u64,
    /// Per-channel color multiplier.
    pub tint: [f32; 3],
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            checker: 15.0,
            gradient: 0.1,
            seed: 7,
            tint: [1.0, 1.0, 1.0],
        }
    }
}

impl TextureSpec {
    /// Checker cell index pair for a surface point.
    pub fn cell<T: Real>(&self, model: &EllipsoidModel<T>, p: [T; 3]) -> (i64, i64) {
        let (lon, lat) = model.surface_coords(p);
        let size = self.checker * to_f64(model.texel_deg);
        (
            (to_f64(lon) / size).floor() as i64,
            (to_f64(lat) / size).floor() as i64,
        )
    }

    /// Gray intensity in `[0, 1]` at a surface point.
    pub fn intensity<T: Real>(&self, model: &EllipsoidModel<T>, p: [T; 3]) -> f32 {
        let (i, j) = self.cell(model, p);
        // alternating dark/bright bands keep every cell edge at >= 0.1 contrast
        let u = unit_hash(i as u64, j as u64, self.seed);
        let level = if (i + j).rem_euclid(2) == 0 {
            0.15 + 0.3 * u
        } else {
            0.55 + 0.3 * u
        };
        let shade = 0.5 + 0.5 * to_f64(p[1] / model.ay);
        ((1.0 - self.gradient) * level + self.gradient * shade) as f32
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Background {
    Flat(f32),
    /// Static per-pixel uniform noise around `mean`.
    Noise { mean: f32, amplitude: f32, seed: u64 },
}

impl Background {
    fn at(&self, x: usize, y: usize) -> f32 {
        match *self {
            Background::Flat(v) => v,
            Background::Noise {
                mean,
                amplitude,
                seed,
            } => {
                let u = unit_hash(x as u64, y as u64, seed ^ 0x5bd1_e995) as f32;
                (mean + amplitude * (2.0 * u - 1.0)).clamp(0.0, 1.0)
            }
        }
    }
}

/// A second, static textured ellipsoid drawn behind the primary head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistractorSpec {
    pub tx: f64,
    pub ty: f64,
    pub s: f64,
    pub ry: f64,
    pub texture_seed: u64,
}

impl DistractorSpec {
    fn pose<T: Real>(&self) -> PoseState<T> {
        PoseState {
            tx: lit(self.tx),
            ty: lit(self.ty),
            s: lit(self.s),
            ry: lit(self.ry),
            ..PoseState::identity()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OcclusionSpec {
    /// Fraction of the face bounding box covered, in `[0, 1)`.
    pub coverage: f64,
    pub onset: u64,
    pub level: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneScript {
    pub duration: u64,
    pub tx: Trajectory,
    pub ty: Trajectory,
    pub s: Trajectory,
    pub rx: Trajectory,
    pub ry: Trajectory,
    pub rz: Trajectory,
    pub alpha: Trajectory,
    pub texture: TextureSpec,
    pub background: Background,
    pub distractor: Option<DistractorSpec>,
    pub occlusion: Option<OcclusionSpec>,
}

impl SceneScript {
    /// Head held at the calibration pose.
    pub fn still(duration: u64) -> Self {
        SceneScript {
            duration,
            tx: Trajectory::Constant(0.0),
            ty: Trajectory::Constant(0.0),
            s: Trajectory::Constant(1.0),
            rx: Trajectory::Constant(0.0),
            ry: Trajectory::Constant(0.0),
            rz: Trajectory::Constant(0.0),
            alpha: Trajectory::Constant(1.0),
            texture: TextureSpec::default(),
            background: Background::Flat(0.5),
            distractor: None,
            occlusion: None,
        }
    }

    /// Standard accuracy clip: 300 frames of simultaneous +-40 degree yaw
    /// and pitch sinusoids (yaw period 150, pitch period 200 frames).
    pub fn benchmark() -> Self {
        SceneScript {
            ry: Trajectory::sinusoid(40.0, 150.0),
            rx: Trajectory::sinusoid(40.0, 200.0),
            ..Self::still(300)
        }
    }

    /// Pitch swept linearly from 0 to 70 degrees over 200 frames.
    pub fn pitch_ramp() -> Self {
        SceneScript {
            rx: Trajectory::Ramp {
                from: 0.0,
                to: 70.0,
                start: 0,
                end: 199,
            },
            ..Self::still(200)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration < 1 {
            return Err(Error::InvalidScript("duration must be >= 1".into()));
        }
        for (name, t) in self.dims() {
            t.validate(name)?;
        }
        for (name, t) in [("rx", &self.rx), ("ry", &self.ry), ("rz", &self.rz)] {
            if t.peak(self.duration) >= 180.0 {
                return Err(Error::InvalidScript(format!("{name} leaves [-180, 180)")));
            }
        }
        if self.s.min_value(self.duration) <= 0.0 || self.alpha.min_value(self.duration) <= 0.0 {
            return Err(Error::InvalidScript("scale and gain must stay positive".into()));
        }
        if !(self.texture.checker > 0.0 && (0.0..=1.0).contains(&self.texture.gradient)) {
            return Err(Error::InvalidScript("bad texture spec".into()));
        }
        if let Some(o) = &self.occlusion {
            if !(0.0..1.0).contains(&o.coverage) {
                return Err(Error::InvalidCoverage(o.coverage));
            }
        }
        Ok(())
    }

    /// Builds a script from `key = value` pairs. `preset` (`still`,
    /// `benchmark` or `ramp`) picks the base; every other key overrides it:
    /// `duration`, the seven pose dimensions as trajectories,
    /// `texture.checker`, `texture.gradient`, `texture.seed`,
    /// `texture.tint = R G B`, `background = flat V | noise MEAN AMP SEED`,
    /// `occlusion = COVERAGE ONSET LEVEL`, `distractor = TX TY S RY SEED`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut script = match kv.get("preset").unwrap_or("still") {
            "still" => SceneScript::still(1),
            "benchmark" => SceneScript::benchmark(),
            "ramp" => SceneScript::pitch_ramp(),
            other => return Err(Error::InvalidScript(format!("unknown preset {other:?}"))),
        };
        for (key, value) in kv.iter() {
            let nums = || parse_numbers(value, key);
            let count = |n: usize| -> Result<Vec<f64>> {
                let v = nums()?;
                if v.len() == n {
                    Ok(v)
                } else {
                    Err(Error::InvalidScript(format!("{key} takes {n} numbers")))
                }
            };
            match key {
                "preset" => {}
                "duration" => {
                    script.duration = value
                        .parse()
                        .map_err(|_| Error::InvalidScript(format!("bad duration {value:?}")))?
                }
                "tx" => script.tx = value.parse()?,
                "ty" => script.ty = value.parse()?,
                "s" => script.s = value.parse()?,
                "rx" => script.rx = value.parse()?,
                "ry" => script.ry = value.parse()?,
                "rz" => script.rz = value.parse()?,
                "alpha" => script.alpha = value.parse()?,
                "texture.checker" => script.texture.checker = count(1)?[0],
                "texture.gradient" => script.texture.gradient = count(1)?[0],
                "texture.seed" => {
                    script.texture.seed = value
                        .parse()
                        .map_err(|_| Error::InvalidScript(format!("bad seed {value:?}")))?
                }
                "texture.tint" => {
                    let t = count(3)?;
                    script.texture.tint = [t[0] as f32, t[1] as f32, t[2] as f32];
                }
                "background" => {
                    let (kind, rest) = value.split_once(char::is_whitespace).unwrap_or((value, ""));
                    let v = parse_numbers(rest, key)?;
                    script.background = match (kind, v.as_slice()) {
                        ("flat", [level]) => Background::Flat(*level as f32),
                        ("noise", [mean, amplitude, seed]) if *seed >= 0.0 => Background::Noise {
                            mean: *mean as f32,
                            amplitude: *amplitude as f32,
                            seed: *seed as u64,
                        },
                        _ => return Err(Error::InvalidScript(format!("bad background {value:?}"))),
                    };
                }
                "occlusion" => {
                    let v = count(3)?;
                    if v[1] < 0.0 {
                        return Err(Error::InvalidScript("negative occlusion onset".into()));
                    }
                    script.occlusion = Some(OcclusionSpec {
                        coverage: v[0],
                        onset: v[1] as u64,
                        level: v[2] as f32,
                    });
                }
                "distractor" => {
                    let v = count(5)?;
                    script.distractor = Some(DistractorSpec {
                        tx: v[0],
                        ty: v[1],
                        s: v[2],
                        ry: v[3],
                        texture_seed: v[4] as u64,
                    });
                }
                other => return Err(Error::InvalidScript(format!("unknown key {other:?}"))),
            }
        }
        script.validate()?;
        Ok(script)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::read(path)?)
    }

    fn dims(&self) -> [(&'static str, &Trajectory); 7] {
        [
            ("tx", &self.tx),
            ("ty", &self.ty),
            ("s", &self.s),
            ("rx", &self.rx),
            ("ry", &self.ry),
            ("rz", &self.rz),
            ("alpha", &self.alpha),
        ]
    }

    /// Exact pose at frame `k`; velocities are backward differences of the
    /// script formulas.
    pub fn pose_at<T: Real>(&self, k: u64) -> PoseState<T> {
        let kf = k as f64;
        let diff = |t: &Trajectory| t.eval(kf) - t.eval(kf - 1.0);
        PoseState {
            tx: lit(self.tx.eval(kf)),
            ty: lit(self.ty.eval(kf)),
            tx_dot: lit(diff(&self.tx)),
            ty_dot: lit(diff(&self.ty)),
            s: lit(self.s.eval(kf)),
            rx: wrap_degrees(lit(self.rx.eval(kf))),
            ry: wrap_degrees(lit(self.ry.eval(kf))),
            rz: wrap_degrees(lit(self.rz.eval(kf))),
            ry_dot: lit(diff(&self.ry)),
            alpha: lit(self.alpha.eval(kf)),
        }
    }

    pub fn trace<T: Real>(&self) -> GroundTruthTrace<T> {
        GroundTruthTrace((0..self.duration).map(|k| self.pose_at(k)).collect())
    }
}

/// Exact per-frame pose of the rendered head.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthTrace<T>(pub Vec<PoseState<T>>);

impl<T: Real> GroundTruthTrace<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn poses(&self) -> &[PoseState<T>] {
        &self.0
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<_> = self
            .0
            .iter()
            .enumerate()
            .map(|(k, p)| crate::eval::TraceRow {
                frame: k as u64,
                pose: *p,
                status: None,
            })
            .collect();
        crate::eval::write_pose_csv(path, &rows)
    }
}

/// Renders the textured ellipsoid (plus optional distractor) over the
/// background for every frame of the script.
pub fn render_sequence<T: Real>(
    script: &SceneScript,
    model: &EllipsoidModel<T>,
    cam: &CameraModel<T>,
) -> Result<(Vec<RgbImage>, GroundTruthTrace<T>)> {
    script.validate()?;
    model.validate()?;
    let trace = script.trace::<T>();
    let mut frames: Vec<RgbImage> = trace
        .0
        .par_iter()
        .map(|pose| render_frame(script, model, cam, pose))
        .collect();
    if let Some(spec) = &script.occlusion {
        inject_occlusion(&mut frames, &trace, model, cam, spec)?;
    }
    Ok((frames, trace))
}

/// Renders a single frame of `script` at an arbitrary pose.
pub fn render_frame<T: Real>(
    script: &SceneScript,
    model: &EllipsoidModel<T>,
    cam: &CameraModel<T>,
    pose: &PoseState<T>,
) -> RgbImage {
    let mut img =
        GrayImage::from_fn(cam.width, cam.height, |x, y| script.background.at(x, y)).to_rgb();
    if let Some(d) = &script.distractor {
        let tex = TextureSpec {
            seed: d.texture_seed,
            ..script.texture
        };
        draw_ellipsoid(&mut img, model, cam, &d.pose(), &tex);
    }
    draw_ellipsoid(&mut img, model, cam, pose, &script.texture);
    img
}

/// Gray calibration view of `texture` at the canonical pose.
pub fn render_frontal<T: Real>(
    texture: &TextureSpec,
    model: &EllipsoidModel<T>,
    cam: &CameraModel<T>,
    background: f32,
) -> RgbImage {
    let script = SceneScript {
        texture: *texture,
        background: Background::Flat(background),
        ..SceneScript::still(1)
    };
    render_frame(&script, model, cam, &PoseState::identity())
}

fn draw_ellipsoid<T: Real>(
    img: &mut RgbImage,
    model: &EllipsoidModel<T>,
    cam: &CameraModel<T>,
    pose: &PoseState<T>,
    texture: &TextureSpec,
) {
    let rot = pose.rotation();
    let Some((x0, y0, x1, y1)) = pixel_box(model, pose, cam) else {
        return;
    };
    let gain = pose.alpha.to_f32().unwrap_or(1.0);
    for v in y0..=y1 {
        for u in x0..=x1 {
            let (x, y) = unproject_pixel(
                T::from_usize(u).unwrap(),
                T::from_usize(v).unwrap(),
                pose,
                cam,
            );
            if let Some(p) = model.ray_hit(&rot, x, y) {
                let g = texture.intensity(model, p) * gain;
                let c = [0, 1, 2].map(|i| (g * texture.tint[i]).clamp(0.0, 1.0));
                img.set(u, v, c);
            }
        }
    }
}

/// Inclusive integer pixel box of the silhouette, clipped to the image.
pub fn pixel_box<T: Real>(
    model: &EllipsoidModel<T>,
    pose: &PoseState<T>,
    cam: &CameraModel<T>,
) -> Option<(usize, usize, usize, usize)> {
    let [u0, v0, u1, v1] = silhouette_bounds(model, pose, cam).map(to_f64);
    let x0 = u0.ceil().max(0.0);
    let y0 = v0.ceil().max(0.0);
    let x1 = u1.floor().min(cam.width as f64 - 1.0);
    let y1 = v1.floor().min(cam.height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        None
    } else {
        Some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }
}

/// Occluder rectangle for one frame: same aspect as the face bounding box,
/// `coverage` of its area, centered horizontally over the lower face.
pub fn occluder_rect<T: Real>(
    model: &EllipsoidModel<T>,
    pose: &PoseState<T>,
    cam: &CameraModel<T>,
    coverage: f64,
) -> Option<(usize, usize, usize, usize)> {
    let (x0, y0, x1, y1) = pixel_box(model, pose, cam)?;
    let bw = (x1 - x0 + 1) as f64;
    let bh = (y1 - y0 + 1) as f64;
    let k = coverage.sqrt();
    let w = (bw * k).round() as usize;
    let h = (bh * k).round() as usize;
    if w == 0 || h == 0 {
        return None;
    }
    let left = x0 + (x1 - x0 + 1 - w) / 2;
    let margin = (0.1 * bh).round() as usize;
    let bottom = y1.saturating_sub(margin);
    let top = (bottom + 1).saturating_sub(h).max(y0);
    Some((left, top, w, h))
}

/// Overwrites a flat rectangle covering `coverage` of the face bounding box
/// on every frame from `onset` on.
pub fn inject_occlusion<T: Real>(
    frames: &mut [RgbImage],
    trace: &GroundTruthTrace<T>,
    model: &EllipsoidModel<T>,
    cam: &CameraModel<T>,
    spec: &OcclusionSpec,
) -> Result<()> {
    if !(0.0..1.0).contains(&spec.coverage) {
        return Err(Error::InvalidCoverage(spec.coverage));
    }
    if frames.len() != trace.len() {
        return Err(Error::LengthMismatch(format!(
            "{} frames, {} poses",
            frames.len(),
            trace.len()
        )));
    }
    for (k, (frame, pose)) in frames.iter_mut().zip(trace.poses()).enumerate() {
        if (k as u64) < spec.onset {
            continue;
        }
        let Some((left, top, w, h)) = occluder_rect(model, pose, cam, spec.coverage) else {
            continue;
        };
        let c = [spec.level; 3];
        for y in top..(top + h).min(frame.height()) {
            for x in left..(left + w).min(frame.width()) {
                frame.set(x, y, c);
            }
        }
    }
    Ok(())
}

/// Adds a static background head, rejecting placements that intersect the
/// region swept by the primary head.
pub fn inject_distractor<T: Real>(
    script: &SceneScript,
    spec: DistractorSpec,
    model: &EllipsoidModel<T>,
    cam: &CameraModel<T>,
) -> Result<SceneScript> {
    script.validate()?;
    let mut swept = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for pose in script.trace::<T>().poses() {
        let b = silhouette_bounds(model, pose, cam).map(to_f64);
        swept = [
            swept[0].min(b[0]),
            swept[1].min(b[1]),
            swept[2].max(b[2]),
            swept[3].max(b[3]),
        ];
    }
    let d = silhouette_bounds(model, &spec.pose::<T>(), cam).map(to_f64);
    let overlaps = d[0] <= swept[2] && swept[0] <= d[2] && d[1] <= swept[3] && swept[1] <= d[3];
    if overlaps {
        return Err(Error::OverlapError);
    }
    Ok(SceneScript {
        distractor: Some(spec),
        ..script.clone()
    })
}

/// Writes `frame_%06d.ppm` files into `dir`.
pub fn write_frames(dir: impl AsRef<Path>, frames: &[RgbImage]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, f) in frames.iter().enumerate() {
        f.write_ppm(dir.join(frame_file_name(k as u64)))?;
    }
    Ok(())
}

pub fn frame_file_name(k: u64) -> String {
    format!("frame_{k:06}.ppm")
}

/// Sorted `frame_*.ppm` paths in `dir`.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".ppm"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic hash of a lattice cell to `[0, 1)`.
fn unit_hash(i: u64, j: u64, seed: u64) -> f64 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ i) ^ j);
    (h >> 11) as f64 / (1u64 << 53) as f64
}
