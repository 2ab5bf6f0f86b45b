use std::sync::LazyLock;

use image::{DynamicImage, RgbImage};

use crate::error::{Error, Result};

/// Linear sRGB → XYZ (D65).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

static XYZ_TO_RGB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert3(&RGB_TO_XYZ));

/// Reference white as the image of RGB (1,1,1), so white maps to a = b = 0.
static WHITE: LazyLock<[f64; 3]> = LazyLock::new(|| {
    let m = &RGB_TO_XYZ;
    [
        m[0][0] + m[0][1] + m[0][2],
        m[1][0] + m[1][1] + m[1][2],
        m[2][0] + m[2][1] + m[2][2],
    ]
});

static LINEAR_LUT: LazyLock<[f64; 256]> = LazyLock::new(|| {
    let mut lut = [0.0; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        *v = srgb_to_linear(i as f64 / 255.0);
    }
    lut
});

pub const L_MAX: f32 = 100.0;
pub const AB_MAX: f32 = 110.0;

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *v = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    inv
}

pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

const EPS: f64 = 216.0 / 24389.0; // (6/29)^3
const KAPPA_INV: f64 = 108.0 / 841.0; // 3 (6/29)^2

fn f(t: f64) -> f64 {
    if t > EPS {
        t.cbrt()
    } else {
        t / KAPPA_INV + 4.0 / 29.0
    }
}

fn f_inv(t: f64) -> f64 {
    if t > 6.0 / 29.0 {
        t * t * t
    } else {
        KAPPA_INV * (t - 4.0 / 29.0)
    }
}

fn linear_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let m = &RGB_TO_XYZ;
    let w = &*WHITE;
    let xyz = [0, 1, 2].map(|i| m[i][0] * rgb[0] + m[i][1] * rgb[1] + m[i][2] * rgb[2]);
    let (fx, fy, fz) = (f(xyz[0] / w[0]), f(xyz[1] / w[1]), f(xyz[2] / w[2]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Gamma-encoded sRGB in `[0, 1]` → CIE Lab (D65).
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    linear_to_lab(rgb.map(srgb_to_linear))
}

/// 8-bit sRGB → CIE Lab (D65).
pub fn srgb8_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lut = &*LINEAR_LUT;
    linear_to_lab(rgb.map(|c| lut[c as usize]))
}

/// CIE Lab → gamma-encoded sRGB, unclamped (may leave `[0, 1]`).
pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let w = &*WHITE;
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [w[0] * f_inv(fx), w[1] * f_inv(fy), w[2] * f_inv(fz)];
    let m = &*XYZ_TO_RGB;
    [0, 1, 2].map(|i| {
        let lin = m[i][0] * xyz[0] + m[i][1] * xyz[1] + m[i][2] * xyz[2];
        if lin < 0.0 {
            -linear_to_srgb(-lin)
        } else {
            linear_to_srgb(lin)
        }
    })
}

pub fn lab_to_srgb8(lab: [f64; 3]) -> [u8; 3] {
    lab_to_srgb(lab).map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// Luminance plus two chroma planes, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabImage {
    height: usize,
    width: usize,
    l: Vec<f32>,
    a: Vec<f32>,
    b: Vec<f32>,
}

impl LabImage {
    /// Planes are clamped into `L ∈ [0, 100]`, `a, b ∈ [-110, 110]`.
    pub fn new(height: usize, width: usize, l: Vec<f32>, a: Vec<f32>, b: Vec<f32>) -> Result<Self> {
        let n = height * width;
        if l.len() != n || a.len() != n || b.len() != n {
            return Err(Error::Shape(format!(
                "Lab planes {}/{}/{} for {height}x{width}",
                l.len(),
                a.len(),
                b.len()
            )));
        }
        let clamp = |v: Vec<f32>, lo: f32, hi: f32| v.into_iter().map(|x| x.clamp(lo, hi)).collect();
        Ok(Self {
            height,
            width,
            l: clamp(l, 0.0, L_MAX),
            a: clamp(a, -AB_MAX, AB_MAX),
            b: clamp(b, -AB_MAX, AB_MAX),
        })
    }

    pub fn from_planes(l: LumaPlane, ab: AbPlanes) -> Result<Self> {
        if (l.height, l.width) != (ab.height, ab.width) {
            return Err(Error::Shape(format!(
                "luminance {}x{} vs chroma {}x{}",
                l.height, l.width, ab.height, ab.width
            )));
        }
        Self::new(l.height, l.width, l.values, ab.a, ab.b)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn l(&self) -> &[f32] {
        &self.l
    }

    pub fn a(&self) -> &[f32] {
        &self.a
    }

    pub fn b(&self) -> &[f32] {
        &self.b
    }

    pub fn luma(&self) -> LumaPlane {
        LumaPlane {
            height: self.height,
            width: self.width,
            values: self.l.clone(),
        }
    }

    pub fn chroma(&self) -> AbPlanes {
        AbPlanes {
            height: self.height,
            width: self.width,
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }
}

/// Luminance plane in Lab units (`[0, 100]`).
#[derive(Clone, Debug, PartialEq)]
pub struct LumaPlane {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl LumaPlane {
    /// Network-side normalization `L / 50 - 1 ∈ [-1, 1]`.
    pub fn normalized(&self) -> Vec<f32> {
        self.values.iter().map(|l| l / 50.0 - 1.0).collect()
    }
}

/// Chroma planes in Lab units.
#[derive(Clone, Debug, PartialEq)]
pub struct AbPlanes {
    pub height: usize,
    pub width: usize,
    pub a: Vec<f32>,
    pub b: Vec<f32>,
}

impl AbPlanes {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            a: vec![0.0; height * width],
            b: vec![0.0; height * width],
        }
    }

    /// `[a, b] / 110` concatenated plane-major, the network's chroma units.
    pub fn normalized(&self) -> Vec<f32> {
        self.a
            .iter()
            .chain(&self.b)
            .map(|v| v / AB_MAX)
            .collect()
    }

    /// Inverse of [`AbPlanes::normalized`].
    pub fn from_normalized(height: usize, width: usize, data: &[f32]) -> Self {
        let n = height * width;
        assert_eq!(data.len(), 2 * n);
        Self {
            height,
            width,
            a: data[..n].iter().map(|v| v * AB_MAX).collect(),
            b: data[n..].iter().map(|v| v * AB_MAX).collect(),
        }
    }

    /// Box-filter downsample by an integer factor.
    pub fn downsample(&self, factor: usize) -> Self {
        let (h, w) = (self.height / factor, self.width / factor);
        let pool = |p: &[f32]| {
            let mut out = vec![0.0; h * w];
            for y in 0..h {
                for x in 0..w {
                    let mut s = 0.0;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            s += p[(y * factor + dy) * self.width + x * factor + dx];
                        }
                    }
                    out[y * w + x] = s / (factor * factor) as f32;
                }
            }
            out
        };
        Self {
            height: h,
            width: w,
            a: pool(&self.a),
            b: pool(&self.b),
        }
    }
}

/// Convert an 8-bit RGB image to Lab.
pub fn rgb_to_lab(image: &RgbImage) -> LabImage {
    let (w, h) = image.dimensions();
    let n = (w * h) as usize;
    let (mut l, mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for p in image.pixels() {
        let lab = srgb8_to_lab(p.0);
        l.push(lab[0] as f32);
        a.push(lab[1] as f32);
        b.push(lab[2] as f32);
    }
    LabImage::new(h as usize, w as usize, l, a, b).expect("planes sized from image")
}

/// Like [`rgb_to_lab`] for decoded images of unknown layout; only
/// three-channel images are accepted.
pub fn dynamic_to_lab(image: &DynamicImage) -> Result<LabImage> {
    match image.color().channel_count() {
        3 => Ok(rgb_to_lab(&image.to_rgb8())),
        c => Err(Error::InvalidInput(format!("expected 3 channels, got {c}"))),
    }
}

/// Convert Lab to 8-bit sRGB, clamping out-of-gamut values.
pub fn lab_to_rgb(image: &LabImage) -> RgbImage {
    let mut out = RgbImage::new(image.width as u32, image.height as u32);
    for (i, p) in out.pixels_mut().enumerate() {
        p.0 = lab_to_srgb8([image.l[i] as f64, image.a[i] as f64, image.b[i] as f64]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent conversion straight from the published sRGB formulas,
    /// using the published inverse matrix rather than a computed one.
    fn oracle_lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
        let fy = (lab[0] + 16.0) / 116.0;
        let fx = fy + lab[1] / 500.0;
        let fz = fy - lab[2] / 200.0;
        let finv = |t: f64| if t > 6.0 / 29.0 { t.powi(3) } else { 3.0 * (6.0f64 / 29.0).powi(2) * (t - 4.0 / 29.0) };
        let (x, y, z) = (0.95047 * finv(fx), finv(fy), 1.08883 * finv(fz));
        let r = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
        let g = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
        let b = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
        [r, g, b].map(|c| if c <= 0.0031308 { 12.92 * c } else { 1.055 * c.powf(1.0 / 2.4) - 0.055 })
    }

    #[test]
    fn black_and_white_points() {
        let black = srgb8_to_lab([0, 0, 0]);
        assert!(black.iter().all(|v| v.abs() < 1e-9), "{black:?}");
        let white = srgb8_to_lab([255, 255, 255]);
        assert!((white[0] - 100.0).abs() < 1e-9);
        assert!(white[1].abs() < 0.5 && white[2].abs() < 0.5);
        assert_eq!(lab_to_srgb8([0.0, 0.0, 0.0]), [0, 0, 0]);
        assert_eq!(lab_to_srgb8([100.0, 0.0, 0.0]), [255, 255, 255]);
    }

    #[test]
    fn mid_gray_round_trip_against_published_formulas() {
        let lab = srgb8_to_lab([128, 128, 128]);
        let rgb = oracle_lab_to_srgb(lab);
        for c in rgb {
            assert!((c * 255.0 - 128.0).abs() <= 1.0, "{rgb:?}");
        }
        assert_eq!(lab_to_srgb8(lab), [128, 128, 128]);
    }

    #[test]
    fn lab_round_trip_on_random_in_gamut_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tested = 0;
        while tested < 1000 {
            let lab = [rng.random_range(0.0..100.0), rng.random_range(-110.0..110.0), rng.random_range(-110.0..110.0)];
            let rgb = lab_to_srgb(lab);
            if rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
                continue;
            }
            let back = srgb_to_lab(rgb);
            for i in 0..3 {
                assert!((back[i] - lab[i]).abs() < 1e-3, "{lab:?} -> {back:?}");
            }
            tested += 1;
        }
    }

    #[test]
    fn non_rgb_images_rejected() {
        let gray = DynamicImage::new_luma8(4, 4);
        assert!(dynamic_to_lab(&gray).is_err());
        let rgba = DynamicImage::new_rgba8(4, 4);
        assert!(dynamic_to_lab(&rgba).is_err());
        assert!(dynamic_to_lab(&DynamicImage::new_rgb8(4, 4)).is_ok());
    }

    #[test]
    fn lab_image_rejects_mismatched_planes_and_clamps() {
        assert!(LabImage::new(2, 2, vec![0.0; 4], vec![0.0; 3], vec![0.0; 4]).is_err());
        let img = LabImage::new(1, 1, vec![120.0], vec![-200.0], vec![5.0]).unwrap();
        assert_eq!((img.l()[0], img.a()[0], img.b()[0]), (100.0, -110.0, 5.0));
    }
}
