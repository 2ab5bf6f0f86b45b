//! Lab conversion accuracy, the in-gamut ab bins and soft encoding of an
//! image into per-pixel color distributions.
//!
//! cargo run --example color_space [out_dir]

use std::path::PathBuf;

use sscn::color::{decode_distribution, encode_ab, lab_to_srgb8, rgb_to_lab, srgb8_to_lab, AbGamut};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sscn::data::synthetic_image;

fn main() -> sscn::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "example-out/color_space".into()));
    std::fs::create_dir_all(&out).map_err(|e| sscn::Error::io(&out, e))?;

    let mut worst = 0u8;
    for r in (0..=255u16).step_by(5) {
        for g in (0..=255u16).step_by(5) {
            for b in (0..=255u16).step_by(5) {
                let rgb = [r as u8, g as u8, b as u8];
                let back = lab_to_srgb8(srgb8_to_lab(rgb));
                for c in 0..3 {
                    worst = worst.max(rgb[c].abs_diff(back[c]));
                }
            }
        }
    }
    println!("sRGB -> Lab -> sRGB worst channel error on a 52^3 grid: {worst}");

    let gamut = AbGamut::shared();
    println!("in-gamut ab bins: {}", gamut.len());
    gamut.write_csv(&out.join("gamut.csv"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let img = synthetic_image(1, 4, 64, &mut rng);
    let lab = rgb_to_lab(&img);
    let dist = encode_ab(&lab.chroma(), gamut);
    let px = dist.pixel(0);
    let mass: f32 = px.iter().sum();
    let nonzero = px.iter().filter(|&&p| p > 0.0).count();
    println!("pixel 0 distribution: mass {mass:.4}, {nonzero} non-zero bins");

    for t in [1.0, 0.38, 0.01] {
        let ab = decode_distribution(&dist, gamut, t);
        let err: f32 = ab.a.iter().zip(lab.a()).chain(ab.b.iter().zip(lab.b())).map(|(x, y)| (x - y).abs()).sum::<f32>()
            / (2 * ab.a.len()) as f32;
        println!("decode at temperature {t}: mean |ab error| {err:.3}");
    }
    println!("wrote {}", out.join("gamut.csv").display());
    Ok(())
}
