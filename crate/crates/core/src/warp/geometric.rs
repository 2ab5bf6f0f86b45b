use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::FloatImage;

pub const MAX_ROTATION_DEG: f64 = 45.0;
/// Smallest crop, as a fraction of each dimension.
pub const MIN_CROP_FRACTION: f64 = 0.5;

/// Rotate about the image center by `degrees` (counter-clockwise),
/// replicating edge pixels where the rotated frame leaves the source.
pub fn rotate(image: &FloatImage, degrees: f64) -> FloatImage {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cx, cy) = (image.width as f64 / 2.0, image.height as f64 / 2.0);
    image.remap(image.width, image.height, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        // Inverse rotation maps output positions back to the source. Image y
        // points down, so a visual counter-clockwise turn negates the angle.
        let sx = cos * dx - sin * dy;
        let sy = sin * dx + cos * dy;
        (sx + cx - 0.5, sy + cy - 0.5)
    })
}

pub fn random_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG)
}

pub fn random_rotation<R: Rng + ?Sized>(image: &FloatImage, rng: &mut R) -> FloatImage {
    rotate(image, random_angle(rng))
}

/// Axis-aligned crop window in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl CropWindow {
    pub fn full(image: &FloatImage) -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            width: image.width as f64,
            height: image.height as f64,
        }
    }

    /// A window keeping between half and all of each dimension, placed
    /// uniformly inside the frame.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        let cw = rng.random_range(MIN_CROP_FRACTION * w..=w);
        let ch = rng.random_range(MIN_CROP_FRACTION * h..=h);
        let x = rng.random_range(0.0..=(w - cw));
        let y = rng.random_range(0.0..=(h - ch));
        Self {
            x,
            y,
            width: cw,
            height: ch,
        }
    }
}

/// Crop and bilinearly resize back to the input resolution.
pub fn crop_resize(image: &FloatImage, window: CropWindow) -> FloatImage {
    let sx = window.width / image.width as f64;
    let sy = window.height / image.height as f64;
    image.remap(image.width, image.height, |x, y| {
        (
            window.x + (x as f64 + 0.5) * sx - 0.5,
            window.y + (y as f64 + 0.5) * sy - 0.5,
        )
    })
}

pub fn random_crop<R: Rng + ?Sized>(image: &FloatImage, rng: &mut R) -> FloatImage {
    crop_resize(image, CropWindow::random(rng, image.width, image.height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pattern(n: usize) -> FloatImage {
        let mut img = FloatImage::new(n, n, 3);
        for c in 0..3 {
            for y in 0..n {
                for x in 0..n {
                    let v = ((x * (c + 1) + 3 * y) % 7) as f32 / 6.0;
                    img.data[c * n * n + y * n + x] = v;
                }
            }
        }
        img
    }

    fn psnr(a: &FloatImage, b: &FloatImage) -> f64 {
        let mse: f64 = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| ((x - y) as f64).powi(2))
            .sum::<f64>()
            / a.data.len() as f64;
        if mse == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (1.0 / mse).log10()
        }
    }

    #[test]
    fn zero_rotation_and_full_crop_are_identity() {
        let img = pattern(12);
        assert_eq!(rotate(&img, 0.0), img);
        assert_eq!(crop_resize(&img, CropWindow::full(&img)), img);
    }

    #[test]
    fn four_quarter_turns_restore_the_pattern() {
        let img = pattern(16);
        let mut out = img.clone();
        for _ in 0..4 {
            out = rotate(&out, 90.0);
        }
        assert!(psnr(&img, &out) > 40.0);
        // A single quarter turn is a genuine change.
        assert!(psnr(&img, &rotate(&img, 90.0)) < 40.0);
    }

    #[test]
    fn random_parameters_respect_bounds_and_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = pattern(20);
        for _ in 0..200 {
            let a = random_angle(&mut rng);
            assert!(a.abs() <= MAX_ROTATION_DEG);
            let wnd = CropWindow::random(&mut rng, 20, 20);
            assert!(wnd.width >= 10.0 && wnd.height >= 10.0);
            assert!(wnd.x + wnd.width <= 20.0 + 1e-9 && wnd.y + wnd.height <= 20.0 + 1e-9);
        }
        let r = random_rotation(&img, &mut rng);
        let c = random_crop(&img, &mut rng);
        assert_eq!((r.width, r.height, c.width, c.height), (20, 20, 20, 20));
    }
}
