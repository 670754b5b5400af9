//! Feathered superimposition of the replacement face onto the frame.

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};
use crate::scalar::{to_f64, Real};

pub const DEFAULT_FEATHER_PX: usize = 5;

/// Scales every channel by `alpha_est / alpha_bank`, clamped to `[0, 1]`.
pub fn match_illumination<T: Real>(image: &RgbImage, alpha_est: T, alpha_bank: T) -> Result<RgbImage> {
    if !(alpha_est > T::zero() && alpha_bank > T::zero()) {
        return Err(Error::InvalidGain {
            est: to_f64(alpha_est),
            bank: to_f64(alpha_bank),
        });
    }
    if alpha_est == alpha_bank {
        return Ok(image.clone());
    }
    let k = (alpha_est / alpha_bank).to_f32().unwrap_or(1.0);
    Ok(image.map(|p| p.map(|v| (v * k).clamp(0.0, 1.0))))
}

/// Effective blend weight: the mask multiplied by a linear ramp that rises
/// from the nearest zero-mask pixel over `feather_px` pixels of Euclidean
/// distance. With `feather_px == 0` the mask is returned unchanged.
pub fn feathered_alpha(mask: &GrayImage, feather_px: usize) -> GrayImage {
    if feather_px == 0 {
        return mask.clone();
    }
    let dist2 = distance_to_zero_squared(mask);
    let f = feather_px as f32;
    let mut out = mask.clone();
    for (a, d2) in out.pixels_mut().iter_mut().zip(dist2) {
        if *a > 0.0 {
            let ramp = (d2.sqrt() / f).min(1.0);
            *a *= ramp;
        }
    }
    out
}

/// `out = a' * replacement + (1 - a') * frame`. Pixels where the mask is zero
/// are copied from `frame` untouched.
pub fn composite(
    frame: &RgbImage,
    replacement: &RgbImage,
    mask: &GrayImage,
    feather_px: usize,
) -> Result<RgbImage> {
    for dims in [replacement.dims(), mask.dims()] {
        if dims != frame.dims() {
            return Err(Error::DimensionMismatch {
                expected: frame.dims(),
                got: dims,
            });
        }
    }
    let alpha = feathered_alpha(mask, feather_px);
    let mut out = frame.clone();
    for ((o, r), &a) in out
        .pixels_mut()
        .iter_mut()
        .zip(replacement.pixels())
        .zip(alpha.pixels())
    {
        if a <= 0.0 {
            continue;
        }
        let a = a.min(1.0);
        for c in 0..3 {
            let (f, r) = (o[c], r[c]);
            let blended = a * r + (1.0 - a) * f;
            o[c] = blended.clamp(f.min(r), f.max(r));
        }
    }
    Ok(out)
}

/// Squared Euclidean distance from every pixel to the nearest pixel whose
/// mask value is exactly zero (infinite when there is none).
fn distance_to_zero_squared(mask: &GrayImage) -> Vec<f32> {
    let (w, h) = mask.dims();
    let inf = f32::INFINITY;
    let mut grid: Vec<f32> = mask
        .pixels()
        .iter()
        .map(|&m| if m <= 0.0 { 0.0 } else { inf })
        .collect();
    let mut line = Vec::new();
    let mut scratch = Scratch::default();
    for x in 0..w {
        line.clear();
        line.extend((0..h).map(|y| grid[y * w + x]));
        let d = edt_1d(&line, &mut scratch);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        line.clear();
        line.extend_from_slice(row);
        let d = edt_1d(&line, &mut scratch);
        row.copy_from_slice(d);
    }
    grid
}

#[derive(Default)]
struct Scratch {
    v: Vec<usize>,
    z: Vec<f32>,
    d: Vec<f32>,
}

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn edt_1d<'a>(f: &[f32], s: &'a mut Scratch) -> &'a [f32] {
    let n = f.len();
    s.d.clear();
    s.d.resize(n, f32::INFINITY);
    s.v.clear();
    s.z.clear();
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        return &s.d;
    }
    let isect = |p: usize, q: usize| -> f32 {
        let (p, q) = (p as f32, q as f32);
        ((f[q as usize] + q * q) - (f[p as usize] + p * p)) / (2.0 * q - 2.0 * p)
    };
    s.v.push(sites[0]);
    s.z.push(f32::NEG_INFINITY);
    s.z.push(f32::INFINITY);
    for &q in &sites[1..] {
        let mut k = s.v.len() - 1;
        let mut x = isect(s.v[k], q);
        while x <= s.z[k] {
            s.v.pop();
            s.z.pop();
            if s.v.is_empty() {
                break;
            }
            k -= 1;
            x = isect(s.v[k], q);
        }
        if s.v.is_empty() {
            s.v.push(q);
            s.z.clear();
            s.z.push(f32::NEG_INFINITY);
            s.z.push(f32::INFINITY);
        } else {
            s.v.push(q);
            let last = s.z.len() - 1;
            s.z[last] = x;
            s.z.push(f32::INFINITY);
        }
    }
    let mut k = 0;
    for q in 0..n {
        while s.z[k + 1] < q as f32 {
            k += 1;
        }
        let p = s.v[k];
        let dq = q as f32 - p as f32;
        s.d[q] = dq * dq + f[p];
    }
    &s.d
}
