//! The coarse stage on its own: one gray target colorized through the
//! style vectors of two different references.
//!
//! cargo run --example global_color_transfer [out_dir]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sscn::color::{lab_to_rgb, rgb_to_lab};
use sscn::data::synthetic_image;
use sscn::imaging::save_rgb;
use sscn::model::{ModelConfig, ModelInput, Sscn};
use sscn::nn::Graph;

fn main() -> sscn::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "example-out/global_color_transfer".into()));
    std::fs::create_dir_all(&out).map_err(|e| sscn::Error::io(&out, e))?;
    let model = Sscn::new(ModelConfig::desk())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let target = rgb_to_lab(&synthetic_image(0, 4, 96, &mut rng)).luma();
    let refs = [synthetic_image(1, 4, 96, &mut rng), synthetic_image(2, 4, 96, &mut rng)];

    let mut coarse = Vec::new();
    for (i, r) in refs.iter().enumerate() {
        let input = ModelInput::new(&[(&target, r, None)])?;
        let g = Graph::inference();
        let pyramid = model.encode_reference(&g, g.constant(input.reference.clone()))?;
        let style = model.style_vector(&g, &pyramid);
        let sites = style.values(&g, 0);
        let (ys, yb) = &sites[0];
        println!(
            "reference {i}: style length {}, first site mean scale {:.4}, mean bias {:.4}",
            style.len(),
            ys.iter().sum::<f32>() / ys.len() as f32,
            yb.iter().sum::<f32>() / yb.len() as f32
        );
        let ab = model.coarse_colorize(&g, g.constant(input.target_l.clone()), &style)?;
        let ab = g.value(ab);
        coarse.push(ab.data().to_vec());
        let planes = sscn::color::AbPlanes::from_normalized(96, 96, ab.sample(0));
        let lab = sscn::color::LabImage::from_planes(target.clone(), planes)?;
        save_rgb(&lab_to_rgb(&lab), &out.join(format!("coarse_{i}.png")))?;
    }
    let diff = coarse[0].iter().zip(&coarse[1]).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
    println!("max |ab difference| between the two coarse results (normalized units): {diff:.4}");
    println!("wrote {}", out.display());
    Ok(())
}
