//! A short desk-scale training run on generated class folders. Writes
//! checkpoints and the loss log under the output directory.
//!
//! cargo run --release --example train [steps] [out_dir]

use std::path::PathBuf;

use sscn::data::write_synthetic_dataset;
use sscn::trainer::{read_loss_log, TrainConfig, Trainer};

fn main() -> sscn::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let out = PathBuf::from(std::env::args().nth(2).unwrap_or_else(|| "example-out/train".into()));
    let data = out.join("data");
    let folder = write_synthetic_dataset(&data, 4, 8, 96, 0)?;
    println!("dataset: {} images in {} classes", folder.len(), folder.classes.len());

    let config = TrainConfig {
        batch_size: 2,
        max_steps: Some(steps),
        output_dir: out.join("run"),
        ..TrainConfig::desk(&data)
    };
    let mut trainer = Trainer::new(config)?;
    let last = trainer.run()?;
    let log = read_loss_log(&out.join("run").join("losses.csv"))?;
    for (step, parts, total) in log.iter().step_by((log.len() / 5).max(1)) {
        println!("step {step:>4}  stage1 {:.4}  stage2 {:.4}  total {total:.3}", parts.stage1, parts.stage2);
    }
    println!("last checkpoint: {}", last.display());
    Ok(())
}
