//! The five training terms on small hand-made inputs, and their weighted
//! total.
//!
//! cargo run --example losses

use sscn::losses::{
    cross_entropy, histogram_loss, smooth_l1, total_loss, total_variation, LossParts, LossWeights,
};

fn main() -> sscn::Result<()> {
    let pred = [0.1f64, -0.4, 0.9, 0.0];
    let gt = [0.0f64, -0.5, 0.2, 0.0];
    let stage = smooth_l1(&pred, &gt, 1.0)?;
    println!("smooth L1 (delta 1): {stage:.5}");

    let checker: Vec<f64> = (0..16).map(|i| ((i + i / 4) % 2) as f64).collect();
    let flat = vec![0.5f64; 16];
    println!("TV of a 4x4 checkerboard {:.4}, of a flat plane {:.4}", total_variation(&checker, 1, 4, 4)?, total_variation(&flat, 1, 4, 4)?);

    let logits = [2.0f64, 0.5, -1.0];
    println!("cross-entropy, correct class {:.4}, wrong class {:.4}", cross_entropy(&logits, 0)?, cross_entropy(&logits, 2)?);

    // bin-major: [bin0 px0, bin0 px1, bin1 px0, ...]
    let pred_hist = [0.7f64, 0.1, 0.2, 0.8, 0.1, 0.1];
    let target_hist = [0.6f64, 0.2, 0.3, 0.7, 0.1, 0.1];
    println!("histogram loss over two pixels: {:.5}", histogram_loss(&pred_hist, &target_hist, 2)?);

    let parts = LossParts { stage1: 0.3, stage2: 0.2, tv: 0.05, cls: 1.1, his: 0.4 };
    let weights = LossWeights::default();
    println!("weights {weights:?}");
    println!("weighted total: {:.5}", total_loss(&parts, &weights)?);
    Ok(())
}
