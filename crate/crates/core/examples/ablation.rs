//! Ablation hooks on an untrained desk model: a small k/r sweep and the
//! coarse-vs-final stage comparison.
//!
//! cargo run --release --example ablation [out_dir]

use std::path::PathBuf;

use sscn::ablation::{stage_ablation, sweep_kr};
use sscn::data::write_synthetic_dataset;
use sscn::evaluator::{collect_sources, EvalOptions};
use sscn::model::{ColorizeOptions, ModelConfig, Sscn};
use sscn::warp::{AugKind, Manifest};

fn main() -> sscn::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "example-out/ablation".into()));
    write_synthetic_dataset(&out, 2, 2, 96, 9)?;
    let manifest = Manifest::build(&out, &collect_sources(&out)?, &AugKind::ALL, 0, 96)?;
    let model = Sscn::new(ModelConfig::desk())?;
    let opts = EvalOptions::default();

    let sweep = sweep_kr(&model, &manifest, &[64, 256, 512], &[0, 64], &opts, 0)?;
    println!("{} regions at 96 px", sweep.regions);
    print!("{}", sweep.to_table());

    print!("\n{}", stage_ablation(&model, ColorizeOptions::default(), &manifest, &opts)?.to_table());
    Ok(())
}
