//! End-to-end optimization with resumable checkpoints and a per-step loss log.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{checkpoint_path, config_diff, Checkpoint, TrainState};
use crate::color::{encode_ab, AbGamut};
use crate::data::ImageFolder;
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossParts, LossWeights};
use crate::model::{AttentionMode, ModelConfig, ModelInput, Sscn, Variant};
use crate::nn::{Adam, AdamConfig, Graph, ParamStore, Tensor, Var};
use crate::warp::{make_training_pair, TrainingPair};

/// Environment variable that overrides `dataset_root`.
pub const DATA_ENV: &str = "SSCN_DATA";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub resolution: u32,
    pub batch_size: usize,
    pub epochs: u64,
    /// Stop after this many optimizer steps, regardless of `epochs`.
    pub max_steps: Option<u64>,
    pub lr: f32,
    /// Cosine-anneal the learning rate to `lr * cosine_floor` over the run.
    pub cosine_floor: Option<f32>,
    pub adam_betas: (f32, f32),
    pub k: usize,
    pub r: usize,
    pub violent_prob: f64,
    pub seed: u64,
    pub dataset_root: PathBuf,
    /// Classifier width; `None` uses the number of class folders.
    pub class_count: Option<usize>,
    pub scale_factor: f64,
    pub variant: Variant,
    /// Use only this many images, balanced over classes.
    pub max_images: Option<usize>,
    pub val_fraction: f64,
    pub loss: LossWeights,
    pub output_dir: PathBuf,
    /// Also write `last.ckpt` every this many steps.
    pub checkpoint_every: Option<u64>,
    /// Retain only the newest this-many per-epoch checkpoints.
    pub keep_epoch_checkpoints: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            resolution: 256,
            batch_size: 8,
            epochs: 5,
            max_steps: None,
            lr: 1e-4,
            cosine_floor: None,
            adam_betas: (0.9, 0.999),
            k: 256,
            r: 256,
            violent_prob: 0.1,
            seed: 0,
            dataset_root: PathBuf::from("data"),
            class_count: None,
            scale_factor: 1.0,
            variant: Variant::TwoStage,
            max_images: None,
            val_fraction: 0.02,
            loss: LossWeights::default(),
            output_dir: PathBuf::from("runs/sscn"),
            checkpoint_every: None,
            keep_epoch_checkpoints: None,
        }
    }
}

impl TrainConfig {
    /// 96×96, quarter width.
    pub fn desk(dataset_root: impl Into<PathBuf>) -> Self {
        Self {
            resolution: 96,
            scale_factor: 0.25,
            dataset_root: dataset_root.into(),
            ..Self::default()
        }
    }

    /// Desk preset driven to memorize 50 images in 2000 steps.
    pub fn overfit(dataset_root: impl Into<PathBuf>) -> Self {
        Self {
            batch_size: 1,
            max_steps: Some(2000),
            lr: 5e-4,
            cosine_floor: Some(0.02),
            max_images: Some(50),
            val_fraction: 0.0,
            keep_epoch_checkpoints: Some(1),
            ..Self::desk(dataset_root)
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Apply the dataset-root environment override.
    pub fn with_env(mut self) -> Self {
        if let Some(root) = std::env::var_os(DATA_ENV) {
            self.dataset_root = PathBuf::from(root);
        }
        self
    }

    pub fn mode(&self) -> AttentionMode {
        AttentionMode::Sparse { k: self.k, r: self.r }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 || !self.resolution.is_multiple_of(8) {
            return Err(Error::InvalidInput(format!(
                "resolution must be a multiple of 8 and at least 16, got {}",
                self.resolution
            )));
        }
        if self.batch_size == 0 || self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidInput("batch_size and lr must be positive".into()));
        }
        if self.max_steps.is_none() && self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be positive".into()));
        }
        if let Some(f) = self.cosine_floor {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidInput(format!("cosine_floor must be in [0, 1], got {f}")));
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidInput(format!("val_fraction must be in [0, 1), got {}", self.val_fraction)));
        }
        let res = self.resolution as usize;
        self.mode().validate(res, res)?;
        self.loss.validate()
    }

    fn model_config(&self, classes_found: usize) -> Result<ModelConfig> {
        let class_count = self.class_count.unwrap_or(classes_found);
        if classes_found > class_count {
            return Err(Error::InvalidInput(format!(
                "dataset has {classes_found} classes but class_count is {class_count}"
            )));
        }
        let config = ModelConfig {
            scale_factor: self.scale_factor,
            class_count,
            variant: self.variant,
            init_seed: self.seed,
            ..ModelConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

/// Mix a base seed with stream identifiers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base ^ 0x5353_434e_5345_4544;
    for &p in parts {
        x = (x ^ p).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        x ^= x >> 31;
    }
    x
}

/// Ground truth for one batch in network units.
#[derive(Clone, Debug)]
pub struct Targets {
    /// `[N, 2, H, W]` normalized ab.
    pub ab: Tensor,
    /// `[N, Q, H/4, W/4]` soft-encoded distribution.
    pub distribution: Tensor,
}

/// Network inputs and targets for a list of pairs.
pub fn batch_from_pairs(pairs: &[TrainingPair]) -> Result<(ModelInput, Targets)> {
    let items: Vec<_> = pairs.iter().map(|p| (&p.target_l, &p.reference, p.class_label)).collect();
    let input = ModelInput::new(&items)?;
    let (h, w) = (pairs[0].gt_ab.height, pairs[0].gt_ab.width);
    let gamut = AbGamut::shared();
    let mut ab = Vec::with_capacity(pairs.len() * 2 * h * w);
    let mut dist = Vec::new();
    for p in pairs {
        ab.extend(p.gt_ab.normalized());
        dist.extend(encode_ab(&p.gt_ab.downsample(4), gamut).to_chw());
    }
    let n = pairs.len();
    let q = dist.len() / (n * (h / 4) * (w / 4));
    Ok((
        input,
        Targets {
            ab: Tensor::new(&[n, 2, h, w], ab),
            distribution: Tensor::new(&[n, q, h / 4, w / 4], dist),
        },
    ))
}

/// Loss values plus the weighted backward seeds. Terms with a zero weight
/// are evaluated for logging but not seeded.
pub fn compute_losses(
    model: &Sscn,
    g: &Graph,
    input: &ModelInput,
    targets: &Targets,
    mode: AttentionMode,
    weights: &LossWeights,
    selection_seed: u64,
) -> Result<(LossParts, Vec<(Var, f32)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(selection_seed);
    let out = model.forward(g, input, mode, &mut rng)?;
    let delta = weights.delta as f32;
    let mut parts = LossParts::default();
    let mut seeds = Vec::new();
    let mut add = |var: Var, weight: f64, slot: &mut f64| {
        *slot = g.value(var).item() as f64;
        if weight > 0.0 {
            seeds.push((var, weight as f32));
        }
    };
    if let Some(coarse) = out.coarse_ab {
        add(g.smooth_l1_loss(coarse, &targets.ab, delta)?, weights.stage1, &mut parts.stage1);
    }
    add(g.smooth_l1_loss(out.final_ab, &targets.ab, delta)?, weights.stage2, &mut parts.stage2);
    add(g.tv_loss(out.final_ab)?, weights.tv, &mut parts.tv);
    if let Some(ce) = g.cross_entropy_loss(out.logits, &input.labels)? {
        add(ce, weights.cls, &mut parts.cls);
    }
    add(g.histogram_loss(out.distribution, &targets.distribution)?, weights.his, &mut parts.his);
    Ok((parts, seeds))
}

fn mean_parts(all: &[LossParts]) -> LossParts {
    let n = all.len().max(1) as f64;
    let mut m = LossParts::default();
    for p in all {
        m.stage1 += p.stage1 / n;
        m.stage2 += p.stage2 / n;
        m.tv += p.tv / n;
        m.cls += p.cls / n;
        m.his += p.his / n;
    }
    m
}

const CSV_HEADER: &str = "step,L_stage1,L_stage2,L_cls,L_his,L_TV,total";

struct LossLog {
    out: BufWriter<File>,
}

impl LossLog {
    fn open(path: &Path, append: bool) -> Result<Self> {
        let fresh = !append || !path.exists();
        let file = if fresh {
            File::create(path)
        } else {
            OpenOptions::new().append(true).open(path)
        }
        .map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        if fresh {
            writeln!(out, "{CSV_HEADER}").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self { out })
    }

    fn record(&mut self, step: u64, p: &LossParts, total: f64) -> std::io::Result<()> {
        writeln!(
            self.out,
            "{step},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            p.stage1, p.stage2, p.cls, p.his, p.tv, total
        )?;
        self.out.flush()
    }
}

/// Parse a loss log written by the trainer.
pub fn read_loss_log(path: &Path) -> Result<Vec<(u64, LossParts, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let num = |i: usize| -> Result<f64> {
            f.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("malformed loss log line: {line}")))
        };
        let parts = LossParts {
            stage1: num(1)?,
            stage2: num(2)?,
            cls: num(3)?,
            his: num(4)?,
            tv: num(5)?,
        };
        rows.push((num(0)? as u64, parts, num(6)?));
    }
    Ok(rows)
}

struct Snapshot {
    params: ParamStore,
    optimizer: Adam,
    state: TrainState,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Sscn,
    pub optimizer: Adam,
    pub state: TrainState,
    pub dataset: ImageFolder,
    images: Vec<RgbImage>,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    log: LossLog,
    last_good: Option<Snapshot>,
    epoch_losses: Vec<f64>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        Self::build(config, None)
    }

    /// Continue from a checkpoint written by a previous run with the same
    /// model configuration.
    pub fn resume(config: TrainConfig, checkpoint: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(checkpoint)?;
        Self::build(config, Some(ckpt))
    }

    fn build(config: TrainConfig, resume: Option<Checkpoint>) -> Result<Self> {
        config.validate()?;
        let mut dataset = ImageFolder::open(&config.dataset_root)?;
        if let Some(n) = config.max_images {
            dataset.truncate_balanced(n);
        }
        let model_config = config.model_config(dataset.classes.len())?;
        let (model, optimizer, state) = match resume {
            Some(ckpt) => {
                let diffs = config_diff(&ckpt.model.config, &model_config);
                if !diffs.is_empty() {
                    return Err(Error::ConfigMismatch { diffs });
                }
                let mut optimizer = ckpt.optimizer.unwrap_or_else(|| Adam::new(AdamConfig::default()));
                optimizer.config = adam_config(&config);
                (ckpt.model, optimizer, ckpt.train.unwrap_or_default())
            }
            None => (Sscn::new(model_config)?, Adam::new(adam_config(&config)), TrainState::default()),
        };
        let images = dataset.load_all(config.resolution)?;
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0x5eed])));
        let n_val = ((images.len() as f64 * config.val_fraction).round() as usize).min(images.len() - 1);
        let val_idx = order[..n_val].to_vec();
        let mut train_idx = order[n_val..].to_vec();
        train_idx.sort_unstable();
        fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
        let log = LossLog::open(&config.output_dir.join("losses.csv"), state.step > 0)?;
        let mut state = state;
        state.config = serde_json::to_value(&config)?;
        info!(
            "training on {} images ({} held out), {} classes, {} parameters",
            train_idx.len(),
            val_idx.len(),
            dataset.classes.len(),
            model.params.numel()
        );
        Ok(Self {
            config,
            model,
            optimizer,
            state,
            dataset,
            images,
            train_idx,
            val_idx,
            log,
            last_good: None,
            epoch_losses: Vec::new(),
        })
    }

    pub fn train_len(&self) -> usize {
        self.train_idx.len()
    }

    pub fn batches_per_epoch(&self) -> u64 {
        self.train_idx.len().div_ceil(self.config.batch_size) as u64
    }

    fn total_steps(&self) -> u64 {
        self.config
            .max_steps
            .unwrap_or(self.config.epochs * self.batches_per_epoch())
    }

    /// Learning rate for the update that follows `step` completed steps.
    pub fn lr_at(&self, step: u64) -> f32 {
        let lr = self.config.lr;
        match self.config.cosine_floor {
            None => lr,
            Some(floor) => {
                let t = (step as f64 / self.total_steps().max(1) as f64).min(1.0);
                let c = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
                lr * (floor + (1.0 - floor) * c as f32)
            }
        }
    }

    fn class_of(&self, idx: usize) -> Option<usize> {
        Some(self.dataset.items[idx].class)
    }

    /// Dataset indices of the batch the next step will consume.
    pub fn next_batch(&self) -> Vec<usize> {
        let mut order = self.train_idx.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[1, self.state.epoch])));
        let bs = self.config.batch_size;
        let start = self.state.batch_in_epoch as usize * bs;
        order[start..(start + bs).min(order.len())].to_vec()
    }

    fn pairs(&self, indices: &[usize], stream: &[u64]) -> Result<Vec<TrainingPair>> {
        indices
            .par_iter()
            .enumerate()
            .map(|(j, &idx)| {
                let mut parts = stream.to_vec();
                parts.push(j as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &parts));
                make_training_pair(&self.images[idx], &mut rng, self.config.violent_prob, self.class_of(idx))
            })
            .collect()
    }

    /// One optimizer step on the next batch. Finishing an epoch also writes
    /// its checkpoints.
    pub fn step(&mut self) -> Result<LossParts> {
        let step = self.state.step;
        let batch = self.next_batch();
        let pairs = self.pairs(&batch, &[2, step])?;
        let (input, targets) = batch_from_pairs(&pairs)?;
        let g = Graph::new();
        let selection_seed = derive_seed(self.config.seed, &[3, step]);
        let (parts, seeds) =
            compute_losses(&self.model, &g, &input, &targets, self.config.mode(), &self.config.loss, selection_seed)?;
        let total = match total_loss(&parts, &self.config.loss) {
            Ok(t) => t,
            Err(e) => return Err(self.abort(e)),
        };
        let grads = g.backward(&seeds);
        if let Some((name, _)) = grads.params().find(|(_, t)| !t.is_finite()) {
            let e = Error::InvalidInput(format!("non-finite gradient for {name}"));
            return Err(self.abort(e));
        }
        self.last_good = Some(Snapshot {
            params: self.model.params.clone(),
            optimizer: self.optimizer.clone(),
            state: self.state.clone(),
        });
        self.optimizer.config.lr = self.lr_at(step);
        self.optimizer.update(&mut self.model.params, &grads);
        self.state.step += 1;
        self.state.batch_in_epoch += 1;
        self.log
            .record(self.state.step, &parts, total)
            .map_err(|e| Error::io(self.config.output_dir.join("losses.csv"), e))?;
        self.epoch_losses.push(total);
        if self.state.batch_in_epoch == self.batches_per_epoch() {
            self.end_epoch()?;
        }
        Ok(parts)
    }

    fn abort(&mut self, source: Error) -> Error {
        let step = self.state.step;
        let last_good = self.last_good.take().and_then(|s| {
            let path = checkpoint_path(&self.config.output_dir, "last-good");
            let ckpt = Checkpoint {
                model: Sscn {
                    config: self.model.config.clone(),
                    params: s.params,
                },
                optimizer: Some(s.optimizer),
                train: Some(s.state),
            };
            ckpt.save(&path).ok().map(|_| path)
        });
        Error::TrainingAborted {
            step,
            last_good,
            source: Box::new(source),
        }
    }

    /// Mean loss parts over `indices` with fixed pair and selection seeds.
    pub fn dataset_loss(&self, indices: &[usize]) -> Result<LossParts> {
        let mut all = Vec::new();
        for chunk in indices.chunks(self.config.batch_size.max(1)) {
            let pairs = self.pairs(chunk, &[4, chunk[0] as u64])?;
            let (input, targets) = batch_from_pairs(&pairs)?;
            let g = Graph::inference();
            let seed = derive_seed(self.config.seed, &[5, chunk[0] as u64]);
            let (parts, _) = compute_losses(&self.model, &g, &input, &targets, self.config.mode(), &self.config.loss, seed)?;
            for _ in chunk {
                all.push(parts);
            }
        }
        Ok(mean_parts(&all))
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn images(&self) -> &[RgbImage] {
        &self.images
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            optimizer: Some(self.optimizer.clone()),
            train: Some(self.state.clone()),
        }
    }

    fn end_epoch(&mut self) -> Result<()> {
        let dir = &self.config.output_dir;
        let epoch = self.state.epoch;
        let metric = if self.val_idx.is_empty() {
            self.epoch_losses.iter().sum::<f64>() / self.epoch_losses.len().max(1) as f64
        } else {
            total_loss(&self.dataset_loss(&self.val_idx)?, &self.config.loss)?
        };
        self.epoch_losses.clear();
        self.state.epoch += 1;
        self.state.batch_in_epoch = 0;
        info!("epoch {epoch} done at step {}: metric {metric:.5}", self.state.step);
        let improved = self.state.best_metric.is_none_or(|b| metric < b);
        if improved {
            self.state.best_metric = Some(metric);
        }
        let ckpt = self.checkpoint();
        ckpt.save(&checkpoint_path(dir, &format!("epoch-{epoch:04}")))?;
        if improved {
            ckpt.save(&checkpoint_path(dir, "best"))?;
        }
        if let Some(keep) = self.config.keep_epoch_checkpoints {
            if epoch >= keep as u64 {
                let old = checkpoint_path(dir, &format!("epoch-{:04}", epoch - keep as u64));
                let _ = fs::remove_file(old);
            }
        }
        Ok(())
    }

    /// Train until the configured step budget; returns the final checkpoint.
    pub fn run(&mut self) -> Result<PathBuf> {
        let total = self.total_steps();
        while self.state.step < total {
            let parts = self.step()?;
            let step = self.state.step;
            if step.is_multiple_of(50) || step == 1 {
                info!("step {step}/{total}: stage1 {:.5} stage2 {:.5} his {:.4}", parts.stage1, parts.stage2, parts.his);
            }
            if self.config.checkpoint_every.is_some_and(|n| step.is_multiple_of(n)) {
                self.checkpoint().save(&checkpoint_path(&self.config.output_dir, "last"))?;
            }
        }
        let path = checkpoint_path(&self.config.output_dir, "last");
        self.checkpoint().save(&path)?;
        Ok(path)
    }
}

fn adam_config(config: &TrainConfig) -> AdamConfig {
    AdamConfig {
        lr: config.lr,
        beta1: config.adam_betas.0,
        beta2: config.adam_betas.1,
        ..AdamConfig::default()
    }
}

/// Train from scratch and return the final checkpoint path.
pub fn train(config: TrainConfig) -> Result<PathBuf> {
    Trainer::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_synthetic_dataset;
    use crate::model::ColorizeOptions;

    fn tiny(root: &Path, out: &Path) -> TrainConfig {
        TrainConfig {
            resolution: 32,
            batch_size: 2,
            epochs: 1,
            k: 16,
            r: 16,
            scale_factor: 1.0 / 16.0,
            dataset_root: root.to_path_buf(),
            output_dir: out.to_path_buf(),
            lr: 1e-3,
            ..TrainConfig::default()
        }
    }

    fn dataset() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_dataset(dir.path(), 2, 3, 32, 11).unwrap();
        dir
    }

    #[test]
    fn cosine_schedule_runs_from_lr_to_floor() {
        let data = dataset();
        let out = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { max_steps: Some(10), cosine_floor: Some(0.1), ..tiny(data.path(), out.path()) };
        let t = Trainer::new(cfg.clone()).unwrap();
        assert_eq!(t.lr_at(0), 1e-3);
        assert!((t.lr_at(5) - 0.55e-3).abs() < 1e-9);
        assert!((t.lr_at(10) - 1e-4).abs() < 1e-9);
        assert!((1..10).all(|s| t.lr_at(s) < t.lr_at(s - 1)));
        let flat = Trainer::new(TrainConfig { cosine_floor: None, ..cfg }).unwrap();
        assert_eq!(flat.lr_at(7), 1e-3);
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let c = TrainConfig::overfit("d");
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), c);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
        let bad = TrainConfig { k: 600, ..TrainConfig::desk("d") };
        assert!(matches!(bad.validate(), Err(Error::SelectionTooLarge { .. })));
        let partial: TrainConfig = serde_json::from_str(r#"{"lr": 0.001}"#).unwrap();
        assert_eq!(partial.batch_size, 8);
    }

    #[test]
    fn one_step_checkpoint_loads_for_colorize() {
        let data = dataset();
        let out = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { max_steps: Some(1), ..tiny(data.path(), out.path()) };
        let path = train(cfg).unwrap();
        let ckpt = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt.train.as_ref().unwrap().step, 1);
        let log = read_loss_log(&out.path().join("losses.csv")).unwrap();
        assert_eq!(log.len(), 1);
        assert!(log[0].1.stage2 > 0.0);
        let img = image::RgbImage::from_fn(32, 32, |x, y| image::Rgb([x as u8 * 8, y as u8 * 8, 40]));
        let l = crate::color::rgb_to_lab(&img).luma();
        let opts = ColorizeOptions { mode: AttentionMode::Sparse { k: 8, r: 8 }, seed: 0 };
        ckpt.model.colorize(&l, &img, &opts).unwrap();
    }

    #[test]
    fn first_batch_loss_is_deterministic() {
        let data = dataset();
        let run = || {
            let out = tempfile::tempdir().unwrap();
            let mut t = Trainer::new(tiny(data.path(), out.path())).unwrap();
            t.step().unwrap()
        };
        let (a, b) = (run(), run());
        for ((_, x), (_, y)) in a.named().iter().zip(b.named()) {
            assert!((x - y).abs() <= 1e-6, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn stage1_only_step_touches_only_gct_path() {
        let data = dataset();
        let out = tempfile::tempdir().unwrap();
        let loss = LossWeights { stage2: 0.0, tv: 0.0, cls: 0.0, his: 0.0, ..LossWeights::default() };
        let mut t = Trainer::new(TrainConfig { loss, ..tiny(data.path(), out.path()) }).unwrap();
        let before = t.model.params.clone();
        t.step().unwrap();
        let mut changed = Vec::new();
        for (name, p) in t.model.params.iter() {
            if **before.get(name).unwrap() != *p {
                changed.push(name.to_string());
            }
        }
        assert!(!changed.is_empty());
        for name in &changed {
            assert!(
                ["gct.", "style.", "ref_enc."].iter().any(|p| name.starts_with(p)),
                "{name} changed"
            );
        }
        assert!(changed.iter().any(|n| n.starts_with("gct.")));
        assert!(t.model.params.names().any(|n| n.starts_with("fuse.")));
    }

    #[test]
    fn resume_matches_straight_run() {
        let data = dataset();
        let straight_dir = tempfile::tempdir().unwrap();
        let mut straight = Trainer::new(tiny(data.path(), straight_dir.path())).unwrap();
        let full: Vec<LossParts> = (0..4).map(|_| straight.step().unwrap()).collect();

        let split_dir = tempfile::tempdir().unwrap();
        let cfg = tiny(data.path(), split_dir.path());
        let mut first = Trainer::new(cfg.clone()).unwrap();
        first.step().unwrap();
        first.step().unwrap();
        let path = split_dir.path().join("mid.ckpt");
        first.checkpoint().save(&path).unwrap();
        drop(first);
        let mut resumed = Trainer::resume(cfg, &path).unwrap();
        assert_eq!(resumed.state.step, 2);
        let tail: Vec<LossParts> = (0..2).map(|_| resumed.step().unwrap()).collect();
        for (a, b) in full[2..].iter().zip(&tail) {
            assert!((a.stage2 - b.stage2).abs() <= 1e-6 * a.stage2.max(1.0), "{a:?} vs {b:?}");
        }
        let log = read_loss_log(&split_dir.path().join("losses.csv")).unwrap();
        assert_eq!(log.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn resume_with_other_scale_rejected() {
        let data = dataset();
        let out = tempfile::tempdir().unwrap();
        let cfg = tiny(data.path(), out.path());
        let t = Trainer::new(cfg.clone()).unwrap();
        let path = out.path().join("a.ckpt");
        t.checkpoint().save(&path).unwrap();
        let other = TrainConfig { scale_factor: 0.125, ..cfg };
        assert!(matches!(Trainer::resume(other, &path), Err(Error::ConfigMismatch { .. })));
    }

    #[test]
    fn non_finite_loss_aborts_with_last_good() {
        let data = dataset();
        let out = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(tiny(data.path(), out.path())).unwrap();
        t.step().unwrap();
        t.model.params.get_mut("fuse.out.b").unwrap().data_mut().fill(f32::NAN);
        match t.step() {
            Err(Error::TrainingAborted { step, last_good: Some(path), .. }) => {
                assert_eq!(step, 1);
                let ckpt = Checkpoint::load(&path).unwrap();
                assert!(ckpt.model.params.iter().all(|(_, p)| p.is_finite()));
                assert_eq!(ckpt.train.unwrap().step, 0);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn epochs_write_checkpoints() {
        let data = dataset();
        let out = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { epochs: 2, val_fraction: 0.2, ..tiny(data.path(), out.path()) };
        let mut t = Trainer::new(cfg).unwrap();
        assert_eq!(t.train_len(), 5);
        let last = t.run().unwrap();
        assert_eq!(t.state.step, 6);
        for name in ["epoch-0000", "epoch-0001", "best", "last"] {
            assert!(checkpoint_path(out.path(), name).exists(), "{name}");
        }
        assert_eq!(last, checkpoint_path(out.path(), "last"));
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(train(tiny(data.path(), out.path())), Err(Error::EmptyDataset(_))));
    }
}
