//! Row-major floating point raster images with intensities in `[0, 1]`.
//!
//! Pixel centers sit on integer coordinates: pixel `(x, y)` covers
//! `[x - 0.5, x + 0.5] x [y - 0.5, y + 0.5]`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

/// Pixel types that support linear interpolation.
pub trait Pixel: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug {
    fn lerp(a: Self, b: Self, t: f32) -> Self;
    fn scale(self, k: f32) -> Self;
    fn add(self, other: Self) -> Self;
}

impl Pixel for f32 {
    #[inline]
    fn lerp(a: f32, b: f32, t: f32) -> f32 {
        a + (b - a) * t
    }
    #[inline]
    fn scale(self, k: f32) -> f32 {
        self * k
    }
    #[inline]
    fn add(self, other: f32) -> f32 {
        self + other
    }
}

impl Pixel for [f32; 3] {
    #[inline]
    fn lerp(a: Self, b: Self, t: f32) -> Self {
        [
            a[0] + (b[0] - a[0]) * t,
            a[1] + (b[1] - a[1]) * t,
            a[2] + (b[2] - a[2]) * t,
        ]
    }
    #[inline]
    fn scale(self, k: f32) -> Self {
        [self[0] * k, self[1] * k, self[2] * k]
    }
    #[inline]
    fn add(self, o: Self) -> Self {
        [self[0] + o[0], self[1] + o[1], self[2] + o[2]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

pub type GrayImage = Image<f32>;
pub type RgbImage = Image<[f32; 3]>;

impl<P: Pixel> Image<P> {
    pub fn new(width: usize, height: usize, fill: P) -> Self {
        Image {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<P>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} pixels for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> P {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, p: P) {
        self.data[y * self.width + x] = p;
    }

    pub fn pixels(&self) -> &[P] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [P] {
        &mut self.data
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, P> {
        self.data.chunks_exact_mut(self.width)
    }

    /// Bilinear sample at continuous coordinates; `None` outside
    /// `[0, width-1] x [0, height-1]`.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> Option<P> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let max_x = (self.width - 1) as f32;
        let max_y = (self.height - 1) as f32;
        if x > max_x || y > max_y {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = P::lerp(self.get(x0, y0), self.get(x1, y0), fx);
        let bottom = P::lerp(self.get(x0, y1), self.get(x1, y1), fx);
        Some(P::lerp(top, bottom, fy))
    }

    /// Bilinear sample treating everything outside the raster as `P::default()`.
    pub fn sample_or_default(&self, x: f32, y: f32) -> P {
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let fetch = |xi: f32, yi: f32| -> P {
            if xi < 0.0 || yi < 0.0 || xi >= self.width as f32 || yi >= self.height as f32 {
                P::default()
            } else {
                self.get(xi as usize, yi as usize)
            }
        };
        let top = P::lerp(fetch(x0f, y0f), fetch(x0f + 1.0, y0f), fx);
        let bottom = P::lerp(fetch(x0f, y0f + 1.0), fetch(x0f + 1.0, y0f + 1.0), fx);
        P::lerp(top, bottom, fy)
    }

    pub fn map<Q: Pixel>(&self, f: impl Fn(P) -> Q) -> Image<Q> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }
}

impl GrayImage {
    pub fn to_rgb(&self) -> RgbImage {
        self.map(|v| [v, v, v])
    }

    /// Central-difference gradient magnitude. Border pixels get zero.
    pub fn gradient_magnitude(&self) -> GrayImage {
        let (w, h) = self.dims();
        let mut out = GrayImage::new(w, h, 0.0);
        if w < 3 || h < 3 {
            return out;
        }
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let gx = 0.5 * (self.get(x + 1, y) - self.get(x - 1, y));
                let gy = 0.5 * (self.get(x, y + 1) - self.get(x, y - 1));
                out.set(x, y, (gx * gx + gy * gy).sqrt());
            }
        }
        out
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.into(),
                source,
            })?
            .to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.into_raw().into_iter().map(from_u8).collect();
        GrayImage::from_vec(w, h, data)
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        write_pnm(path.as_ref(), &buf, self.width, self.height, false)
    }
}

impl RgbImage {
    /// Luma (Rec. 601 weights).
    pub fn to_gray(&self) -> GrayImage {
        self.map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b)
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.into(),
                source,
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img
            .into_raw()
            .chunks_exact(3)
            .map(|c| [from_u8(c[0]), from_u8(c[1]), from_u8(c[2])])
            .collect();
        RgbImage::from_vec(w, h, data)
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: Vec<u8> = self.data.iter().flat_map(|p| p.map(to_u8)).collect();
        write_pnm(path.as_ref(), &buf, self.width, self.height, true)
    }

    /// 8-bit quantized copy, as it would round-trip through a PPM file.
    pub fn quantized(&self) -> RgbImage {
        self.map(|p| p.map(|v| from_u8(to_u8(v))))
    }
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn from_u8(v: u8) -> f32 {
    v as f32 / 255.0
}

fn write_pnm(path: &Path, buf: &[u8], width: usize, height: usize, color: bool) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let (subtype, color_type) = if color {
        (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
    } else {
        (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
    };
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(subtype)
        .write_image(buf, width as u32, height as u32, color_type)
        .map_err(|source| Error::Image {
            path: path.into(),
            source,
        })
}
