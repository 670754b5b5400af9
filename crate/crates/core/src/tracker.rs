//! Sparse-template particle filter over the ellipsoid head model.
//!
//! Each frame runs predict -> weigh -> estimate -> resample. The likelihood
//! compares illumination-normalized image intensities at the projections of
//! a few hundred textured surface points against their calibration values.

use std::cmp::Ordering;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    normal_faces_camera, project_with, unproject_pixel, wrap_degrees, CameraModel,
    EllipsoidModel, PoseState, Vec3,
};
use crate::image::GrayImage;
use crate::scalar::{from_f32, lit, to_f32, to_f64, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemplatePoint<T> {
    /// Surface point, model units.
    pub p: Vec3<T>,
    /// Outward unit normal.
    pub n: Vec3<T>,
    /// Reference gray intensity.
    pub t: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseTemplate<T> {
    pub points: Vec<TemplatePoint<T>>,
    /// Identifier of the calibration image.
    pub source: String,
}

impl<T: Real> SparseTemplate<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with header `x,y,z,nx,ny,nz,t`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y", "z", "nx", "ny", "nz", "t"])?;
        for tp in &self.points {
            let vals = [tp.p[0], tp.p[1], tp.p[2], tp.n[0], tp.n[1], tp.n[2], tp.t];
            w.write_record(vals.map(|v| to_f64(v).to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ctx = path.display().to_string();
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != ["x", "y", "z", "nx", "ny", "nz", "t"] {
            return Err(Error::parse(&ctx, format!("unexpected header {header:?}")));
        }
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut v = [T::zero(); 7];
            for (i, slot) in v.iter_mut().enumerate() {
                let x: f64 = rec
                    .get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::parse(&ctx, format!("bad field {}", header[i])))?;
                *slot = lit(x);
            }
            if !(v[6] >= T::zero() && v[6] <= T::one()) {
                return Err(Error::parse(&ctx, "intensity outside [0, 1]"));
            }
            points.push(TemplatePoint {
                p: [v[0], v[1], v[2]],
                n: [v[3], v[4], v[5]],
                t: v[6],
            });
        }
        Ok(SparseTemplate {
            points,
            source: ctx,
        })
    }
}

/// Template size used when none is specified.
pub const DEFAULT_TEMPLATE_POINTS: usize = 400;

/// Samples `n_points` salient surface points from a frontal calibration image.
///
/// The image must show the head at the canonical pose: centered on the
/// principal point, unit scale, no rotation. Points are drawn without
/// replacement with probability proportional to the local gradient
/// magnitude, keeping projections at least 2 px apart.
pub fn calibrate_template<T: Real>(
    frontal: &GrayImage,
    model: &EllipsoidModel<T>,
    cam: &CameraModel<T>,
    n_points: usize,
    seed: u64,
) -> Result<SparseTemplate<T>> {
    if n_points < 1 {
        return Err(Error::InvalidArgument("n_points must be >= 1".into()));
    }
    if frontal.dims() != cam.dims() {
        return Err(Error::DimensionMismatch {
            expected: cam.dims(),
            got: frontal.dims(),
        });
    }
    model.validate()?;
    let canonical = PoseState::identity();
    let on_face = |u: usize, v: usize| -> bool {
        let (x, y) = unproject_pixel(
            T::from_usize(u).unwrap(),
            T::from_usize(v).unwrap(),
            &canonical,
            cam,
        );
        T::one() - (x / model.ax).powi(2) - (y / model.ay).powi(2) > T::zero()
    };
    let grad = frontal.gradient_magnitude();
    let (w, h) = frontal.dims();
    let mut candidates = Vec::new();
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let g = grad.get(u, v);
            // the gradient stencil must not straddle the silhouette
            if g > 1e-3
                && on_face(u, v)
                && on_face(u - 1, v)
                && on_face(u + 1, v)
                && on_face(u, v - 1)
                && on_face(u, v + 1)
            {
                candidates.push((u, v, g));
            }
        }
    }
    if candidates.len() < n_points {
        return Err(Error::InsufficientTexture {
            found: candidates.len(),
            needed: n_points,
        });
    }

    // Weighted sampling without replacement: keep the largest ln(U)/w keys.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize, usize)> = candidates
        .iter()
        .map(|&(u, v, g)| {
            let r: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (r.ln() / g as f64, u, v)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));

    let mut taken = vec![false; w * h];
    let mut points = Vec::with_capacity(n_points);
    for &(_, u, v) in &keyed {
        if points.len() == n_points {
            break;
        }
        // minimum 2 px spacing: reject any already-taken pixel in the 3x3 block
        let crowded = (v.saturating_sub(1)..=(v + 1).min(h - 1)).any(|yy| {
            (u.saturating_sub(1)..=(u + 1).min(w - 1)).any(|xx| taken[yy * w + xx])
        });
        if crowded {
            continue;
        }
        taken[v * w + u] = true;
        let (x, y) = unproject_pixel(
            T::from_usize(u).unwrap(),
            T::from_usize(v).unwrap(),
            &canonical,
            cam,
        );
        let p = model.front_point(x, y).expect("candidate lies on the face");
        points.push(TemplatePoint {
            p,
            n: model.normal(p),
            t: from_f32(frontal.get(u, v)),
        });
    }
    if points.len() < n_points {
        return Err(Error::InsufficientTexture {
            found: points.len(),
            needed: n_points,
        });
    }
    Ok(SparseTemplate {
        points,
        source: "frontal".into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrackStatus {
    Tracking,
    Lost,
}

impl TrackStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackStatus::Tracking => "tracking",
            TrackStatus::Lost => "lost",
        }
    }
}

impl FromStr for TrackStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tracking" => Ok(TrackStatus::Tracking),
            "lost" => Ok(TrackStatus::Lost),
            other => Err(Error::parse("status", format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig<T> {
    pub n_particles: usize,
    /// Per-dimension standard deviation of the process noise.
    pub motion_std: PoseState<T>,
    /// Per-dimension spread of the initial particle cloud.
    pub init_std: PoseState<T>,
    /// Likelihood width, intensity units.
    pub sigma: T,
    /// Per-point squared residual cap.
    pub tau: T,
    /// Untruncated mean residual above which a frame counts as bad.
    pub lost_threshold: T,
    /// Consecutive bad frames before the status flips to `Lost`.
    pub lost_frames: u32,
}

impl<T: Real> Default for TrackerConfig<T> {
    fn default() -> Self {
        TrackerConfig {
            n_particles: 500,
            motion_std: PoseState::from_array(
                [0.5, 0.5, 0.05, 0.05, 0.003, 1.2, 0.8, 0.3, 0.15, 0.003].map(lit),
            ),
            init_std: PoseState::from_array(
                [2.0, 2.0, 0.0, 0.0, 0.01, 2.0, 2.0, 1.0, 0.0, 0.01].map(lit),
            ),
            sigma: lit(0.04),
            tau: lit(0.25),
            lost_threshold: lit(0.2),
            lost_frames: 10,
        }
    }
}

impl<T: Real> TrackerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let stds_ok = self
            .motion_std
            .to_array()
            .iter()
            .chain(self.init_std.to_array().iter())
            .all(|v| v.is_finite() && *v >= T::zero());
        if self.n_particles == 0
            || !stds_ok
            || !(self.sigma > T::zero())
            || !(self.tau > T::zero())
            || !(self.lost_threshold > T::zero())
            || self.lost_frames == 0
        {
            return Err(Error::InvalidArgument(format!("invalid tracker config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle<T> {
    pub state: PoseState<T>,
    pub weight: T,
}

#[derive(Clone, Debug)]
pub struct ParticleSet<T> {
    pub particles: Vec<Particle<T>>,
    rng: ChaCha8Rng,
    pub frame_index: u64,
}

impl<T: Real> ParticleSet<T> {
    /// `n` particles scattered around `init` with per-dimension spread `std`.
    pub fn around(init: PoseState<T>, n: usize, std: &PoseState<T>, seed: u64) -> Self {
        let mut set = ParticleSet {
            particles: Vec::with_capacity(n),
            rng: ChaCha8Rng::seed_from_u64(seed),
            frame_index: 0,
        };
        let w = T::one() / T::from_usize(n).unwrap();
        for _ in 0..n {
            let state = perturb(&mut set.rng, init, std);
            set.particles.push(Particle { state, weight: w });
        }
        set
    }

    pub fn from_particles(particles: Vec<Particle<T>>, seed: u64) -> Self {
        ParticleSet {
            particles,
            rng: ChaCha8Rng::seed_from_u64(seed),
            frame_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<T> {
        self.particles.iter().map(|p| p.weight).collect()
    }
}

fn gaussian<T: Real>(rng: &mut ChaCha8Rng) -> T {
    lit(rng.sample::<f64, _>(StandardNormal))
}

fn perturb<T: Real>(rng: &mut ChaCha8Rng, pose: PoseState<T>, std: &PoseState<T>) -> PoseState<T> {
    let mut a = pose.to_array();
    for (v, sd) in a.iter_mut().zip(std.to_array()) {
        *v += sd * gaussian::<T>(rng);
    }
    sanitize(PoseState::from_array(a))
}

fn sanitize<T: Real>(mut p: PoseState<T>) -> PoseState<T> {
    let floor = lit::<T>(1e-3);
    p.rx = wrap_degrees(p.rx);
    p.ry = wrap_degrees(p.ry);
    p.rz = wrap_degrees(p.rz);
    p.s = p.s.max(floor);
    p.alpha = p.alpha.max(floor);
    p
}

/// Constant-velocity dynamics on `(tx, ty)` and yaw, random walk elsewhere.
pub fn predict<T: Real>(set: &mut ParticleSet<T>, cfg: &TrackerConfig<T>) {
    let std = cfg.motion_std;
    for particle in &mut set.particles {
        let mut p = particle.state;
        p.tx += p.tx_dot;
        p.ty += p.ty_dot;
        p.ry += p.ry_dot;
        particle.state = perturb(&mut set.rng, p, &std);
    }
}

/// Mean residual of `tmpl` against `frame` at `pose`, over template points
/// that face the camera and project inside the frame. Per-point residuals
/// are `((I / alpha) - t)^2`, capped at `tau` when given. `None` when no
/// point is usable.
pub fn mean_residual<T: Real>(
    pose: &PoseState<T>,
    frame: &GrayImage,
    tmpl: &SparseTemplate<T>,
    cam: &CameraModel<T>,
    tau: Option<T>,
) -> Option<T> {
    let rot = pose.rotation();
    let inv_gain = T::one() / pose.alpha;
    let mut sum = T::zero();
    let mut used = 0usize;
    for tp in &tmpl.points {
        if !normal_faces_camera(&rot, tp.n) {
            continue;
        }
        let [u, v] = project_with(&rot, tp.p, pose, cam);
        let Some(i) = frame.sample(to_f32(u), to_f32(v)) else {
            continue;
        };
        let d = from_f32::<T>(i) * inv_gain - tp.t;
        let r = d * d;
        sum += match tau {
            Some(cap) => r.min(cap),
            None => r,
        };
        used += 1;
    }
    (used > 0).then(|| sum / T::from_usize(used).unwrap())
}

/// Unnormalized likelihood `exp(-r / (2 sigma^2))` of a single pose.
pub fn likelihood<T: Real>(
    pose: &PoseState<T>,
    frame: &GrayImage,
    tmpl: &SparseTemplate<T>,
    cam: &CameraModel<T>,
    cfg: &TrackerConfig<T>,
) -> T {
    (-log_likelihood_scaled(pose, frame, tmpl, cam, cfg)).exp()
}

fn log_likelihood_scaled<T: Real>(
    pose: &PoseState<T>,
    frame: &GrayImage,
    tmpl: &SparseTemplate<T>,
    cam: &CameraModel<T>,
    cfg: &TrackerConfig<T>,
) -> T {
    let r = mean_residual(pose, frame, tmpl, cam, Some(cfg.tau)).unwrap_or(cfg.tau);
    r / (lit::<T>(2.0) * cfg.sigma * cfg.sigma)
}

/// Scores every particle against `frame` and normalizes the weights to sum
/// to one. Evaluation is a pure per-particle map and runs in parallel.
pub fn weigh<T: Real>(
    set: &mut ParticleSet<T>,
    frame: &GrayImage,
    tmpl: &SparseTemplate<T>,
    cam: &CameraModel<T>,
    cfg: &TrackerConfig<T>,
) -> Result<Vec<T>> {
    if tmpl.is_empty() {
        return Err(Error::EmptyTemplate);
    }
    if frame.dims() != cam.dims() {
        return Err(Error::DimensionMismatch {
            expected: cam.dims(),
            got: frame.dims(),
        });
    }
    let energies: Vec<T> = set
        .particles
        .par_iter()
        .map(|p| log_likelihood_scaled(&p.state, frame, tmpl, cam, cfg))
        .collect();
    // subtracting the best energy keeps exp() away from underflow
    let best = energies.iter().copied().fold(T::infinity(), T::min);
    let raw: Vec<T> = energies.iter().map(|&e| (best - e).exp()).collect();
    let total = raw.iter().fold(T::zero(), |acc, &w| acc + w);
    if !(total > T::zero()) || !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    for (p, w) in set.particles.iter_mut().zip(&raw) {
        p.weight = *w / total;
    }
    Ok(set.weights())
}

/// Systematic resampling: one offset `u ~ U[0, 1/N)`, strata `u + i/N`.
pub fn resample<T: Real>(set: &mut ParticleSet<T>) -> Result<()> {
    let n = set.particles.len();
    if n == 0 {
        return Ok(());
    }
    let weights: Vec<f64> = set.particles.iter().map(|p| to_f64(p.weight)).collect();
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let step = 1.0 / n as f64;
    let offset = set.rng.random::<f64>() * step;
    let last_live = weights.iter().rposition(|w| *w > 0.0).unwrap_or(n - 1);
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0] / total;
    let mut j = 0;
    let uniform = T::one() / T::from_usize(n).unwrap();
    for i in 0..n {
        let target = offset + i as f64 * step;
        while target >= cumulative && j < last_live {
            j += 1;
            cumulative += weights[j] / total;
        }
        out.push(Particle {
            state: set.particles[j].state,
            weight: uniform,
        });
    }
    set.particles = out;
    Ok(())
}

/// Weighted arithmetic mean of every state dimension.
///
/// Angles are averaged linearly, which is only meaningful while the cloud
/// stays well inside `(-90, 90)` of each axis.
pub fn estimate<T: Real>(set: &ParticleSet<T>) -> PoseState<T> {
    let mut acc = [T::zero(); 10];
    let mut total = T::zero();
    for p in &set.particles {
        for (a, v) in acc.iter_mut().zip(p.state.to_array()) {
            *a += p.weight * v;
        }
        total += p.weight;
    }
    PoseState::from_array(acc.map(|a| a / total))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackOutput<T> {
    pub pose: PoseState<T>,
    pub status: TrackStatus,
    /// Untruncated mean residual at the estimate (`None`: no usable point).
    pub residual: Option<T>,
}

/// Single-target tracker: owns the particle set handed from frame to frame.
#[derive(Clone, Debug)]
pub struct Tracker<T> {
    pub template: SparseTemplate<T>,
    pub cam: CameraModel<T>,
    pub cfg: TrackerConfig<T>,
    pub set: ParticleSet<T>,
    bad_run: u32,
}

impl<T: Real> Tracker<T> {
    /// Starts from the calibration pose spread by `cfg.init_std`.
    pub fn new(
        template: SparseTemplate<T>,
        cam: CameraModel<T>,
        cfg: TrackerConfig<T>,
        seed: u64,
    ) -> Result<Self> {
        Self::starting_at(template, cam, cfg, PoseState::identity(), seed)
    }

    pub fn starting_at(
        template: SparseTemplate<T>,
        cam: CameraModel<T>,
        cfg: TrackerConfig<T>,
        init: PoseState<T>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        init.validate()?;
        if template.is_empty() {
            return Err(Error::EmptyTemplate);
        }
        let set = ParticleSet::around(init, cfg.n_particles, &cfg.init_std, seed);
        Ok(Tracker {
            template,
            cam,
            cfg,
            set,
            bad_run: 0,
        })
    }

    pub fn track_frame(&mut self, frame: &GrayImage) -> Result<TrackOutput<T>> {
        predict(&mut self.set, &self.cfg);
        weigh(&mut self.set, frame, &self.template, &self.cam, &self.cfg)?;
        let pose = estimate(&self.set);
        resample(&mut self.set)?;
        self.set.frame_index += 1;

        let residual = mean_residual(&pose, frame, &self.template, &self.cam, None);
        let bad = residual.is_none_or(|r| r > self.cfg.lost_threshold);
        self.bad_run = if bad { self.bad_run + 1 } else { 0 };
        let status = if self.bad_run >= self.cfg.lost_frames {
            TrackStatus::Lost
        } else {
            TrackStatus::Tracking
        };
        Ok(TrackOutput {
            pose,
            status,
            residual,
        })
    }
}
