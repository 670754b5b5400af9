//! Pose-tagged replacement faces rendered from one frontal photo.
//!
//! The frontal image is texture-mapped onto the camera-facing half of the
//! ellipsoid and re-rendered on a pitch/yaw grid. Scale, roll and
//! translation are left to a 2D similarity warp at query time, which keeps
//! the bank two-dimensional.

use std::path::Path;

use rayon::prelude::*;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, EllipsoidModel, PoseState};
use crate::image::{GrayImage, Image, Pixel, RgbImage};
use crate::scalar::{lit, to_f32, to_f64, Real};

/// Pitch/yaw grid of bank tags, degrees. Bounds are inclusive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BankGrid<T> {
    pub pitch_min: T,
    pub pitch_max: T,
    pub yaw_min: T,
    pub yaw_max: T,
    pub step: T,
}

impl<T: Real> Default for BankGrid<T> {
    fn default() -> Self {
        BankGrid {
            pitch_min: lit(-70.0),
            pitch_max: lit(70.0),
            yaw_min: lit(-70.0),
            yaw_max: lit(70.0),
            step: lit(10.0),
        }
    }
}

impl<T: Real> BankGrid<T> {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.pitch_min, self.pitch_max, self.yaw_min, self.yaw_max, self.step]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidGrid("non-finite bound".into()));
        }
        if !(self.step > T::zero()) {
            return Err(Error::InvalidGrid(format!("step {} must be positive", self.step)));
        }
        if self.pitch_max < self.pitch_min || self.yaw_max < self.yaw_min {
            return Err(Error::InvalidGrid("empty range".into()));
        }
        Ok(())
    }

    fn count(min: T, max: T, step: T) -> usize {
        // tolerate ranges that are a whole number of steps up to rounding
        let n = ((max - min) / step + lit(1e-9)).floor();
        n.to_usize().unwrap_or(0) + 1
    }

    pub fn pitch_count(&self) -> usize {
        Self::count(self.pitch_min, self.pitch_max, self.step)
    }

    pub fn yaw_count(&self) -> usize {
        Self::count(self.yaw_min, self.yaw_max, self.step)
    }

    pub fn len(&self) -> usize {
        self.pitch_count() * self.yaw_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pitch_tag(&self, i: usize) -> T {
        self.pitch_min + T::from_usize(i).unwrap() * self.step
    }

    pub fn yaw_tag(&self, j: usize) -> T {
        self.yaw_min + T::from_usize(j).unwrap() * self.step
    }

    /// `(pitch, yaw)` tags, pitch-major.
    pub fn nodes(&self) -> Vec<(T, T)> {
        let (np, ny) = (self.pitch_count(), self.yaw_count());
        (0..np)
            .flat_map(|i| (0..ny).map(move |j| (i, j)))
            .map(|(i, j)| (self.pitch_tag(i), self.yaw_tag(j)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceBankEntry<T> {
    /// Render in the canonical crop frame (unit scale, no roll, centered).
    pub image: RgbImage,
    /// Support of the textured face, values in `[0, 1]`.
    pub mask: GrayImage,
    pub tag_rx: T,
    pub tag_ry: T,
    /// Illumination gain of the calibration photo.
    pub alpha_bank: T,
}

impl<T: Real> FaceBankEntry<T> {
    /// Pixel coordinates of the crop center.
    pub fn center(&self) -> (f32, f32) {
        (
            (self.image.width() - 1) as f32 / 2.0,
            (self.image.height() - 1) as f32 / 2.0,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceBank<T> {
    pub entries: Vec<FaceBankEntry<T>>,
    pub grid: BankGrid<T>,
    pub model: EllipsoidModel<T>,
}

/// How the replacement face is derived from the bank for a query pose.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BlendMode {
    /// Nearest entry only.
    #[default]
    Nearest,
    /// Inverse-distance blend of the two nearest entries.
    TwoNearest,
}

/// Crop half-size for the model: every rotation fits inside with a margin.
fn crop_radius<T: Real>(model: &EllipsoidModel<T>) -> usize {
    model.bounding_radius().ceil().to_usize().unwrap_or(0) + 2
}

/// Renders the frontal face of subject B at every grid node.
pub fn build_bank<T: Real>(
    frontal: &RgbImage,
    model: &EllipsoidModel<T>,
    cam: &CameraModel<T>,
    grid: BankGrid<T>,
) -> Result<FaceBank<T>> {
    grid.validate()?;
    model.validate()?;
    if frontal.dims() != cam.dims() {
        return Err(Error::DimensionMismatch {
            expected: cam.dims(),
            got: frontal.dims(),
        });
    }
    let r = crop_radius(model);
    let side = 2 * r + 1;
    let entries = grid
        .nodes()
        .into_par_iter()
        .map(|(rx, ry)| {
            let rot = PoseState::<T>::identity().with_rotation(rx, ry, T::zero()).rotation();
            let mut image = RgbImage::new(side, side, [0.0; 3]);
            let mut mask = GrayImage::new(side, side, 0.0);
            for j in 0..side {
                for i in 0..side {
                    let x = T::from_usize(i).unwrap() - T::from_usize(r).unwrap();
                    let y = T::from_usize(r).unwrap() - T::from_usize(j).unwrap();
                    let Some(p) = model.ray_hit(&rot, x, y) else {
                        continue;
                    };
                    // only the camera-facing half carries photo texture
                    if p[2] < T::zero() {
                        continue;
                    }
                    let u = to_f32(cam.cx + p[0]);
                    let v = to_f32(cam.cy - p[1]);
                    if let Some(c) = frontal.sample(u, v) {
                        image.set(i, j, c);
                        mask.set(i, j, 1.0);
                    }
                }
            }
            FaceBankEntry {
                image,
                mask,
                tag_rx: rx,
                tag_ry: ry,
                alpha_bank: T::one(),
            }
        })
        .collect();
    Ok(FaceBank {
        entries,
        grid,
        model: *model,
    })
}

#[inline]
fn tag_distance<T: Real>(e: &FaceBankEntry<T>, pose: &PoseState<T>) -> T {
    ((pose.rx - e.tag_rx).powi(2) + (pose.ry - e.tag_ry).powi(2)).sqrt()
}

/// Index of the entry whose tag is nearest to the query pitch/yaw; ties go
/// to the lowest index.
///
/// Locates the enclosing grid cell arithmetically and scores only the
/// surrounding nodes.
pub fn select_entry<T: Real>(bank: &FaceBank<T>, pose: &PoseState<T>) -> usize {
    let g = &bank.grid;
    let (np, ny) = (g.pitch_count(), g.yaw_count());
    debug_assert_eq!(bank.entries.len(), np * ny);
    let cell = |v: T, min: T, n: usize| -> (usize, usize) {
        let f = ((v - min) / g.step).floor();
        let f = f.max(T::zero()).min(T::from_usize(n - 1).unwrap());
        let i = f.to_usize().unwrap_or(0);
        (i.saturating_sub(1), (i + 2).min(n))
    };
    let (p0, p1) = cell(pose.rx, g.pitch_min, np);
    let (y0, y1) = cell(pose.ry, g.yaw_min, ny);
    let mut best = (T::infinity(), usize::MAX);
    for i in p0..p1 {
        for j in y0..y1 {
            let idx = i * ny + j;
            let d = tag_distance(&bank.entries[idx], pose);
            if d < best.0 || (d == best.0 && idx < best.1) {
                best = (d, idx);
            }
        }
    }
    best.1
}

/// Up to two `(index, weight)` pairs with weights summing to one. A query
/// sitting exactly on a node yields that node alone.
pub fn select_blend<T: Real>(bank: &FaceBank<T>, pose: &PoseState<T>) -> Vec<(usize, T)> {
    let mut scored: Vec<(T, usize)> = bank
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (tag_distance(e, pose), i))
        .collect();
    scored.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    match scored.as_slice() {
        [] => vec![],
        [(_, i)] => vec![(*i, T::one())],
        [(d0, i0), (d1, i1), ..] => {
            if *d0 == T::zero() {
                vec![(*i0, T::one())]
            } else {
                let total = *d0 + *d1;
                vec![(*i0, *d1 / total), (*i1, *d0 / total)]
            }
        }
    }
}

impl<T: Real> FaceBank<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical-frame replacement image, mask and bank gain for `pose`.
    pub fn replacement(&self, pose: &PoseState<T>, mode: BlendMode) -> (RgbImage, GrayImage, T) {
        match mode {
            BlendMode::Nearest => {
                let e = &self.entries[select_entry(self, pose)];
                (e.image.clone(), e.mask.clone(), e.alpha_bank)
            }
            BlendMode::TwoNearest => {
                let picks = select_blend(self, pose);
                if let [(i, _)] = picks.as_slice() {
                    let e = &self.entries[*i];
                    return (e.image.clone(), e.mask.clone(), e.alpha_bank);
                }
                let first = &self.entries[picks[0].0];
                let (w, h) = first.image.dims();
                let mut image = RgbImage::new(w, h, [0.0; 3]);
                let mut mask = GrayImage::new(w, h, 0.0);
                let mut gain = T::zero();
                for &(i, wt) in &picks {
                    let e = &self.entries[i];
                    let k = to_f32(wt);
                    for (o, p) in image.pixels_mut().iter_mut().zip(e.image.pixels()) {
                        *o = o.add(p.scale(k));
                    }
                    for (o, p) in mask.pixels_mut().iter_mut().zip(e.mask.pixels()) {
                        *o += p * k;
                    }
                    gain += wt * e.alpha_bank;
                }
                (image, mask, gain)
            }
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let g = &self.grid;
        let m = &self.model;
        let alpha_bank = self.entries.first().map(|e| to_f64(e.alpha_bank)).unwrap_or(1.0);
        let meta = format!(
            "# face bank\npitch_min = {}\npitch_max = {}\nyaw_min = {}\nyaw_max = {}\nstep = {}\n\
             ax = {}\nay = {}\naz = {}\ntexel_deg = {}\nalpha_bank = {}\n",
            to_f64(g.pitch_min),
            to_f64(g.pitch_max),
            to_f64(g.yaw_min),
            to_f64(g.yaw_max),
            to_f64(g.step),
            to_f64(m.ax),
            to_f64(m.ay),
            to_f64(m.az),
            to_f64(m.texel_deg),
            alpha_bank,
        );
        let meta_path = dir.join("bank.meta");
        std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
        self.entries.par_iter().try_for_each(|e| {
            let stem = entry_stem(e.tag_rx, e.tag_ry);
            e.image.write_ppm(dir.join(format!("{stem}.ppm")))?;
            e.mask.write_pgm(dir.join(format!("{stem}.pgm")))
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let kv = KeyValues::read(dir.join("bank.meta"))?;
        let f = |k: &str| -> Result<T> { Ok(lit(kv.require::<f64>(k)?)) };
        let grid = BankGrid {
            pitch_min: f("pitch_min")?,
            pitch_max: f("pitch_max")?,
            yaw_min: f("yaw_min")?,
            yaw_max: f("yaw_max")?,
            step: f("step")?,
        };
        grid.validate()?;
        let model = EllipsoidModel {
            ax: f("ax")?,
            ay: f("ay")?,
            az: f("az")?,
            texel_deg: f("texel_deg")?,
        };
        model.validate()?;
        let alpha_bank = f("alpha_bank")?;
        let entries = grid
            .nodes()
            .into_par_iter()
            .map(|(rx, ry)| {
                let stem = entry_stem(rx, ry);
                let image = RgbImage::read_ppm(dir.join(format!("{stem}.ppm")))?;
                let mask = GrayImage::read_pgm(dir.join(format!("{stem}.pgm")))?;
                if mask.dims() != image.dims() {
                    return Err(Error::DimensionMismatch {
                        expected: image.dims(),
                        got: mask.dims(),
                    });
                }
                Ok(FaceBankEntry {
                    image,
                    mask,
                    tag_rx: rx,
                    tag_ry: ry,
                    alpha_bank,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FaceBank {
            entries,
            grid,
            model,
        })
    }
}

/// `entry_<rx>_<ry>`, tags printed in shortest decimal form.
pub fn entry_stem<T: Real>(rx: T, ry: T) -> String {
    format!("entry_{}_{}", to_f64(rx), to_f64(ry))
}

/// In-plane similarity warp by inverse mapping with bilinear resampling.
///
/// A source pixel at offset `d` from `src_center` lands at
/// `dst_center + scale * Rot(angle) * d`, where `angle` is a counter-clockwise
/// roll in the y-up model frame. Samples outside the source read as
/// `P::default()`.
pub fn warp_similarity<P: Pixel>(
    src: &Image<P>,
    src_center: (f32, f32),
    scale: f32,
    angle_deg: f32,
    dst_center: (f32, f32),
    out_w: usize,
    out_h: usize,
) -> Image<P> {
    let mut out = Image::new(out_w, out_h, P::default());
    let (sin, cos) = sin_cos_deg(angle_deg);
    // forward map of the (1 px padded) source rectangle bounds the work
    let (sw, sh) = (src.width() as f32, src.height() as f32);
    let corners = [(-1.0, -1.0), (sw, -1.0), (-1.0, sh), (sw, sh)];
    let (mut u0, mut v0, mut u1, mut v1) = (f32::MAX, f32::MAX, f32::MIN, f32::MIN);
    for (x, y) in corners {
        let (a, b) = (x - src_center.0, y - src_center.1);
        let u = dst_center.0 + scale * (a * cos + b * sin);
        let v = dst_center.1 + scale * (-a * sin + b * cos);
        u0 = u0.min(u);
        v0 = v0.min(v);
        u1 = u1.max(u);
        v1 = v1.max(v);
    }
    let clip = |lo: f32, hi: f32, n: usize| -> Option<(usize, usize)> {
        let lo = lo.floor().max(0.0);
        let hi = hi.ceil().min(n as f32 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    };
    let (Some((x0, x1)), Some((y0, y1))) = (clip(u0, u1, out_w), clip(v0, v1, out_h)) else {
        return out;
    };
    let inv = 1.0 / scale;
    for v in y0..=y1 {
        for u in x0..=x1 {
            let a2 = (u as f32 - dst_center.0) * inv;
            let b2 = (v as f32 - dst_center.1) * inv;
            let a = a2 * cos - b2 * sin;
            let b = a2 * sin + b2 * cos;
            out.set(u, v, src.sample_or_default(src_center.0 + a, src_center.1 + b));
        }
    }
    out
}

/// Sine and cosine of an angle in degrees, exact at multiples of 90.
fn sin_cos_deg(deg: f32) -> (f32, f32) {
    let r = deg.rem_euclid(360.0);
    match r {
        0.0 => (0.0, 1.0),
        90.0 => (1.0, 0.0),
        180.0 => (0.0, -1.0),
        270.0 => (-1.0, 0.0),
        _ => {
            let (s, c) = (deg as f64).to_radians().sin_cos();
            (s as f32, c as f32)
        }
    }
}

/// Places a canonical-frame face at `pose`: scale by `s`, roll by `rz`,
/// translate to `(cx + tx, cy + ty)`.
pub fn warp_canonical<T: Real>(
    image: &RgbImage,
    mask: &GrayImage,
    pose: &PoseState<T>,
    cam: &CameraModel<T>,
) -> Result<(RgbImage, GrayImage)> {
    let center = (
        (image.width() - 1) as f32 / 2.0,
        (image.height() - 1) as f32 / 2.0,
    );
    let dst = (to_f32(cam.cx + pose.tx), to_f32(cam.cy + pose.ty));
    let (s, rz) = (to_f32(pose.s), to_f32(pose.rz));
    let out_mask = warp_similarity(mask, center, s, rz, dst, cam.width, cam.height);
    if !out_mask.pixels().iter().any(|&m| m > 0.0) {
        return Err(Error::EmptyOutput);
    }
    let out_image = warp_similarity(image, center, s, rz, dst, cam.width, cam.height);
    Ok((out_image, out_mask))
}

/// Warps one bank entry onto the query pose. Residual pitch/yaw mismatch up
/// to half a grid step is accepted as approximation error.
pub fn warp_entry<T: Real>(
    entry: &FaceBankEntry<T>,
    pose: &PoseState<T>,
    cam: &CameraModel<T>,
) -> Result<(RgbImage, GrayImage)> {
    pose.validate()?;
    warp_canonical(&entry.image, &entry.mask, pose, cam)
}
