//! Planar float images, bilinear sampling and file I/O.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, LumaA, RgbImage};

use crate::color::AbPlanes;
use crate::error::{Error, Result};

/// Channel-planar `f32` image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Self::new(w, h, 3);
        for (i, p) in img.pixels().enumerate() {
            for c in 0..3 {
                out.data[c * w * h + i] = p.0[c] as f32 / 255.0;
            }
        }
        out
    }

    pub fn to_rgb(&self) -> RgbImage {
        assert_eq!(self.channels, 3, "to_rgb on {}-channel image", self.channels);
        let n = self.width * self.height;
        let mut out = RgbImage::new(self.width as u32, self.height as u32);
        for (i, p) in out.pixels_mut().enumerate() {
            for c in 0..3 {
                p.0[c] = (self.data[c * n + i].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        out
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Bilinear sample at pixel coordinates (pixel centers at integers),
    /// replicating edge pixels outside the frame.
    pub fn sample(&self, c: usize, x: f64, y: f64) -> f32 {
        let plane = self.plane(c);
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (xc.floor() as usize, yc.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = ((xc - x0 as f64) as f32, (yc - y0 as f64) as f32);
        let at = |x: usize, y: usize| plane[y * self.width + x];
        let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
        let bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Backward-mapped resampling: output pixel `(x, y)` takes the source
    /// value at `map(x, y)` (pixel coordinates).
    pub fn remap<F>(&self, width: usize, height: usize, map: F) -> Self
    where
        F: Fn(usize, usize) -> (f64, f64),
    {
        let mut out = Self::new(width, height, self.channels);
        let n = width * height;
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = map(x, y);
                for c in 0..self.channels {
                    out.data[c * n + y * width + x] = self.sample(c, sx, sy);
                }
            }
        }
        out
    }
}

pub fn load_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Load any supported file as 8-bit RGB, dropping alpha. Single-channel
/// files are rejected.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = load_image(path)?;
    if img.color().channel_count() < 3 {
        return Err(Error::InvalidInput(format!(
            "{}: grayscale image where a color image is required",
            path.display()
        )));
    }
    Ok(img.to_rgb8())
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Square-resize to `size × size` with a triangle filter.
pub fn resize_square(img: &RgbImage, size: u32) -> RgbImage {
    if img.dimensions() == (size, size) {
        return img.clone();
    }
    image::imageops::resize(img, size, size, image::imageops::FilterType::Triangle)
}

/// Offset applied before scaling when storing chroma in 16 bits.
pub const AB_PNG_OFFSET: f32 = 128.0;
/// Scale applied when storing chroma in 16 bits: `u16 = (v + 128) · 256`.
pub const AB_PNG_SCALE: f32 = 256.0;

/// Save chroma planes as a two-plane 16-bit PNG: `a` in the gray plane and
/// `b` in the alpha plane, each encoded as `round((v + 128) · 256)`.
pub fn save_ab_png(ab: &AbPlanes, path: &Path) -> Result<()> {
    let enc = |v: f32| ((v + AB_PNG_OFFSET) * AB_PNG_SCALE).round().clamp(0.0, 65535.0) as u16;
    let mut buf: ImageBuffer<LumaA<u16>, Vec<u16>> = ImageBuffer::new(ab.width as u32, ab.height as u32);
    for (i, p) in buf.pixels_mut().enumerate() {
        p.0 = [enc(ab.a[i]), enc(ab.b[i])];
    }
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_ab_png(path: &Path) -> Result<AbPlanes> {
    let img = load_image(path)?.into_luma_alpha16();
    let dec = |v: u16| v as f32 / AB_PNG_SCALE - AB_PNG_OFFSET;
    let (w, h) = img.dimensions();
    let mut ab = AbPlanes::zeros(h as usize, w as usize);
    for (i, p) in img.pixels().enumerate() {
        ab.a[i] = dec(p.0[0]);
        ab.b[i] = dec(p.0[1]);
    }
    Ok(ab)
}
