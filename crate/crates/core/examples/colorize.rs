//! Colorize a gray target from a color reference. With no arguments a
//! freshly initialized desk model and generated images are used.
//!
//! cargo run --release --example colorize [checkpoint target.png reference.png] [out_dir]

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sscn::checkpoint::Checkpoint;
use sscn::color::{lab_to_rgb, rgb_to_lab};
use sscn::data::synthetic_image;
use sscn::imaging::{load_rgb, resize_square, save_rgb};
use sscn::model::{ColorizeOptions, ModelConfig, Sscn};

fn main() -> sscn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (model, target, reference, out) = if args.len() >= 3 {
        let model = Checkpoint::load(Path::new(&args[0]))?.model;
        let target = resize_square(&load_rgb(Path::new(&args[1]))?, 96);
        let reference = resize_square(&load_rgb(Path::new(&args[2]))?, 96);
        (model, target, reference, args.get(3).cloned())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = Sscn::new(ModelConfig::desk())?;
        (model, synthetic_image(0, 2, 96, &mut rng), synthetic_image(0, 2, 96, &mut rng), args.first().cloned())
    };
    let out = PathBuf::from(out.unwrap_or_else(|| "example-out/colorize".into()));
    std::fs::create_dir_all(&out).map_err(|e| sscn::Error::io(&out, e))?;

    let l = rgb_to_lab(&target).luma();
    let result = model.colorize(&l, &reference, &ColorizeOptions::default())?;
    save_rgb(&lab_to_rgb(&result.image), &out.join("colorized.png"))?;
    if let Some(c) = &result.coarse {
        save_rgb(&lab_to_rgb(c), &out.join("coarse.png"))?;
    }
    save_rgb(&reference, &out.join("reference.png"))?;
    if let Some(sel) = &result.selection {
        println!("selected {} of {} reference regions", sel.len(), sel.cam.len());
    }
    println!("correspondence MACs {}", result.macs.correspondence);
    println!("wrote {}", out.display());
    Ok(())
}
