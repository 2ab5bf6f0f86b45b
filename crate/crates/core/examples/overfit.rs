//! Memorize 50 generated images at desk scale, then check that the
//! pipeline has learned them: stage-2 loss against its starting value and
//! self-augmentation PSNR with TPS references.
//!
//! cargo run --release --example overfit [steps] [lr] [batch] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use sscn::color::{lab_to_rgb, rgb_to_lab};
use sscn::data::write_synthetic_dataset;
use sscn::evaluator::{collect_sources, evaluate, psnr, EvalOptions, ModelColorizer, Stage};
use sscn::model::ColorizeOptions;
use sscn::trainer::{TrainConfig, Trainer};
use sscn::warp::{AugKind, Manifest};

fn main() -> sscn::Result<()> {
    let arg = |i: usize| std::env::args().nth(i);
    let config_base = TrainConfig::overfit("");
    let steps: u64 = arg(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let lr: f32 = arg(2).and_then(|s| s.parse().ok()).unwrap_or(config_base.lr);
    let batch: usize = arg(3).and_then(|s| s.parse().ok()).unwrap_or(config_base.batch_size);
    let out = PathBuf::from(arg(4).unwrap_or_else(|| "example-out/overfit".into()));
    let data = out.join("data");
    write_synthetic_dataset(&data, 10, 5, 96, 0)?;

    let config = TrainConfig {
        max_steps: Some(steps),
        lr,
        batch_size: batch,
        output_dir: out.join("run"),
        checkpoint_every: Some(steps.max(1)),
        ..TrainConfig::overfit(&data)
    };
    let mut trainer = Trainer::new(config)?;
    let all = trainer.train_indices().to_vec();
    let before = trainer.dataset_loss(&all)?;
    let start = Instant::now();
    while trainer.state.step < steps {
        let parts = trainer.step()?;
        if trainer.state.step % 100 == 0 {
            println!(
                "step {:>5}  stage1 {:.4}  stage2 {:.4}  his {:.3}  cls {:.3}  {:.0}s",
                trainer.state.step,
                parts.stage1,
                parts.stage2,
                parts.his,
                parts.cls,
                start.elapsed().as_secs_f64()
            );
        }
    }
    let after = trainer.dataset_loss(&all)?;
    println!("stage-2 smooth L1: {:.5} -> {:.5} ({:.1}% of initial)", before.stage2, after.stage2, 100.0 * after.stage2 / before.stage2);

    let manifest = Manifest::build(&data, &collect_sources(&data)?, &[AugKind::Tps], 0, 96)?;
    let colorizer = ModelColorizer { model: &trainer.model, options: ColorizeOptions::default(), stage: Stage::Final };
    let report = evaluate(&colorizer, &manifest, &EvalOptions::default())?;
    println!("TPS self-augmentation PSNR {:.2} dB, SSIM {:.4}", report.mean().0, report.mean().1);

    let mut coarse = 0.0;
    for img in trainer.images() {
        let c = trainer.model.colorize(&rgb_to_lab(img).luma(), img, &ColorizeOptions::default())?;
        coarse += psnr(&lab_to_rgb(c.coarse.as_ref().expect("two-stage model")), img)?;
    }
    println!("coarse PSNR with the undistorted image as reference {:.2} dB", coarse / trainer.images().len() as f64);
    println!("train time {:.0}s", start.elapsed().as_secs_f64());
    Ok(())
}
