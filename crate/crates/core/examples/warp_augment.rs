//! Training pairs from thin-plate-spline warps and the three evaluation
//! reference families, saved as PNGs for inspection.
//!
//! cargo run --example warp_augment [out_dir]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sscn::color::{lab_to_rgb, LabImage};
use sscn::data::synthetic_image;
use sscn::imaging::save_rgb;
use sscn::warp::{make_eval_triplet, make_training_pair, random_spec, AugKind};

fn main() -> sscn::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "example-out/warp_augment".into()));
    std::fs::create_dir_all(&out).map_err(|e| sscn::Error::io(&out, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = synthetic_image(0, 2, 128, &mut rng);
    save_rgb(&img, &out.join("source.png"))?;

    for violent in [false, true] {
        let spec = random_spec(&mut rng, violent);
        println!("{} warp: max control-point displacement {:.3}", if violent { "violent" } else { "mild" }, spec.max_displacement());
    }

    let pair = make_training_pair(&img, &mut rng, 0.1, Some(0))?;
    let gray = LabImage::from_planes(pair.target_l.clone(), sscn::color::AbPlanes::zeros(128, 128))?;
    save_rgb(&lab_to_rgb(&gray), &out.join("pair_target.png"))?;
    save_rgb(&pair.reference, &out.join("pair_reference.png"))?;

    for kind in AugKind::ALL {
        let t = make_eval_triplet(&img, kind, &mut rng)?;
        let name = format!("ref_{}.png", kind.label());
        save_rgb(&t.reference, &out.join(&name))?;
        println!("{}: reference {}x{} -> {name}", kind.label(), t.reference.width(), t.reference.height());
    }
    println!("wrote {}", out.display());
    Ok(())
}
