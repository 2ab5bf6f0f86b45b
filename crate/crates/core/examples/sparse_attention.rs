//! Dense against sparse correspondence: selection of top-k plus random
//! regions, the multiply-accumulate savings and an attention dump.
//!
//! cargo run --example sparse_attention [out_dir]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sscn::color::rgb_to_lab;
use sscn::data::synthetic_image;
use sscn::ldt::{region_grid, select_regions, MacCount};
use sscn::model::{AttentionMode, ColorizeOptions, ModelConfig, Sscn};

fn main() -> sscn::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "example-out/sparse_attention".into()));
    std::fs::create_dir_all(&out).map_err(|e| sscn::Error::io(&out, e))?;

    let d = ModelConfig::default().flat_dim();
    let (gh, gw) = region_grid(256, 256);
    let regions = gh * gw;
    let dense = MacCount::new(d, regions, regions);
    let sparse = MacCount::new(d, regions, 512);
    println!("256 px, d={d}, {regions} regions");
    println!("  dense  correspondence MACs {:>14}", dense.correspondence);
    println!("  sparse correspondence MACs {:>14} (k=256, r=256)", sparse.correspondence);
    println!("  ratio {:.2}x", dense.correspondence as f64 / sparse.correspondence as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cam: Vec<f32> = (0..64).map(|i| ((i * 37) % 64) as f32).collect();
    let sel = select_regions(&cam, 4, 4, &mut rng)?;
    println!("toy CAM: top-4 {:?}, random {:?}", sel.topk, sel.random);

    let model = Sscn::new(ModelConfig::desk())?;
    let target = rgb_to_lab(&synthetic_image(0, 2, 96, &mut rng)).luma();
    let reference = synthetic_image(0, 2, 96, &mut rng);
    let opts = ColorizeOptions { mode: AttentionMode::Sparse { k: 64, r: 64 }, seed: 1 };
    let result = model.colorize(&target, &reference, &opts)?;
    let dense_result = model.colorize(&target, &reference, &opts.with_mode(AttentionMode::Dense))?;
    println!(
        "96 px desk model: sparse {} vs dense {} correspondence MACs",
        result.macs.correspondence, dense_result.macs.correspondence
    );

    let dump = model.attention_dump(&target, &reference, &opts, &[0, 100, 300], Some(5))?;
    let path = out.join("attention.json");
    std::fs::write(&path, serde_json::to_string_pretty(&dump)?).map_err(|e| sscn::Error::io(&path, e))?;
    for row in &dump.rows {
        println!("query {:>3}: heaviest keys {:?}", row.query_index, row.key_indices);
    }
    println!("wrote {}", path.display());
    Ok(())
}
