//! Self-augmentation evaluation: build a manifest over generated images,
//! then score the copy-reference oracle and an untrained model.
//!
//! cargo run --release --example evaluate [out_dir]

use std::path::PathBuf;

use sscn::data::write_synthetic_dataset;
use sscn::evaluator::{collect_sources, evaluate, render_table, CopyReferenceChroma, EvalOptions, ModelColorizer, Stage};
use sscn::model::{ColorizeOptions, ModelConfig, Sscn};
use sscn::warp::{AugKind, Manifest};

fn main() -> sscn::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "example-out/evaluate".into()));
    write_synthetic_dataset(&out, 2, 3, 96, 4)?;
    let sources = collect_sources(&out)?;
    let manifest = Manifest::build(&out, &sources, &AugKind::ALL, 0, 96)?;
    manifest.write(&out.join("manifest.jsonl"))?;
    println!("manifest: {} entries, sha256 {}", manifest.entries.len(), manifest.hash());

    let opts = EvalOptions::default();
    let oracle = evaluate(&CopyReferenceChroma, &manifest, &EvalOptions { method: "copy-ref".into(), ..opts.clone() })?;
    let model = Sscn::new(ModelConfig::desk())?;
    let colorizer = ModelColorizer { model: &model, options: ColorizeOptions::default(), stage: Stage::Final };
    let untrained = evaluate(&colorizer, &manifest, &EvalOptions { method: "untrained".into(), ..opts })?;
    print!("{}", render_table(&[&oracle, &untrained]));
    let csv = untrained.write(&out.join("report.csv"))?;
    println!("wrote {}", csv.display());
    Ok(())
}
