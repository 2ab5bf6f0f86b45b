//! Command-line front end. Every failure surfaces as one line,
//! `error: <kind>: <message>`, and a nonzero exit code.

use std::ffi::OsString;
use std::fs;
use std::path::{Component, Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use image::RgbImage;

use crate::ablation::{parse_sweep, stage_ablation, sweep_kr, Comparison};
use crate::checkpoint::Checkpoint;
use crate::color::{lab_to_rgb, rgb_to_lab, LumaPlane};
use crate::error::{Error, Result};
use crate::evaluator::{collect_sources, evaluate, Colorizer, CopyReferenceChroma, EvalOptions, ModelColorizer, Stage};
use crate::imaging::{load_rgb, resize_square, save_ab_png, save_rgb};
use crate::model::{AttentionMode, ColorizeOptions, Sscn, Variant};
use crate::trainer::{TrainConfig, Trainer};
use crate::warp::{AugKind, Manifest};

/// Where `train` leaves its final checkpoint with the default output dir.
pub const DEFAULT_CHECKPOINT: &str = "runs/sscn/last.ckpt";
pub const CHECKPOINT_ENV: &str = "SSCN_CHECKPOINT";
pub const SMOKE_MANIFEST: &str = "assets/smoke/manifest.jsonl";

#[derive(Debug, Parser)]
#[command(name = "sscn", version, about = "Exemplar-based colorization with semantic-sparse attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a class-folder dataset.
    Train(TrainArgs),
    /// Colorize one gray image from a color reference.
    Colorize(ColorizeArgs),
    /// Self-augmentation PSNR/SSIM over a manifest.
    Evaluate(EvaluateArgs),
    /// Write an evaluation manifest for a folder of images.
    MakeManifest(MakeManifestArgs),
    /// Export attention rows for one target/reference pair as JSON.
    DumpAttention(DumpAttentionArgs),
    /// k/r sweep, stage ablation or model comparison.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Dense,
    Sparse,
}

#[derive(Debug, Args)]
pub struct AttentionArgs {
    #[arg(long, value_enum, default_value = "sparse")]
    pub mode: ModeArg,
    /// Regions taken from the top of the class activation map.
    #[arg(long, default_value_t = 256)]
    pub k: usize,
    /// Regions drawn at random from the rest.
    #[arg(long, default_value_t = 256)]
    pub r: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl AttentionArgs {
    pub fn options(&self) -> ColorizeOptions {
        let mode = match self.mode {
            ModeArg::Dense => AttentionMode::Dense,
            ModeArg::Sparse => AttentionMode::Sparse { k: self.k, r: self.r },
        };
        ColorizeOptions { mode, seed: self.seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 256 px, full width.
    Paper,
    /// 96 px, quarter width.
    Desk,
    /// Desk scale, 50 images, 2000 steps.
    Overfit,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON file with any subset of the training configuration fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    /// Dataset root with one subdirectory per class.
    #[arg(long, env = "SSCN_DATA")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub resolution: Option<u32>,
    #[arg(long)]
    pub scale_factor: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    TwoStage,
    GrayEncoder,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::TwoStage => Variant::TwoStage,
            VariantArg::GrayEncoder => Variant::GrayEncoder,
        }
    }
}

#[derive(Debug, Args)]
pub struct ColorizeArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, env = CHECKPOINT_ENV, default_value = DEFAULT_CHECKPOINT)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also save the predicted ab planes as a 16-bit two-channel PNG.
    #[arg(long)]
    pub ab_out: Option<PathBuf>,
    /// Also save the first-stage result.
    #[arg(long)]
    pub coarse_out: Option<PathBuf>,
    /// Resize the target (and reference) to this square size first.
    #[arg(long)]
    pub resolution: Option<u32>,
    #[command(flatten)]
    pub attention: AttentionArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Final,
    Coarse,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// CSV output; the rendered table goes next to it with a `.txt` extension.
    #[arg(long)]
    pub report: PathBuf,
    /// Reference families to score, e.g. TPS,RR.
    #[arg(long, value_delimiter = ',', default_value = "TPS,RR,RC")]
    pub aug: Vec<AugKind>,
    /// Square size the manifest was built at.
    #[arg(long, default_value_t = 96)]
    pub resolution: u32,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value = "final")]
    pub stage: StageArg,
    #[arg(long, default_value = "SSCN")]
    pub method: String,
    /// Score the copy-reference-chroma oracle instead of a model.
    #[arg(long)]
    pub oracle: bool,
    #[command(flatten)]
    pub attention: AttentionArgs,
}

#[derive(Debug, Args)]
pub struct MakeManifestArgs {
    /// Folder searched recursively for PNG/JPEG images.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "TPS,RR,RC")]
    pub aug: Vec<AugKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 96)]
    pub resolution: u32,
    /// Use only the first N images in sorted order.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DumpAttentionArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, env = CHECKPOINT_ENV, default_value = DEFAULT_CHECKPOINT)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Query region ids; all regions when omitted.
    #[arg(long, value_delimiter = ',')]
    pub queries: Vec<usize>,
    /// Keep only the N heaviest keys of each row.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub resolution: Option<u32>,
    #[command(flatten)]
    pub attention: AttentionArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, env = CHECKPOINT_ENV, default_value = DEFAULT_CHECKPOINT)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = SMOKE_MANIFEST)]
    pub manifest: PathBuf,
    /// Output report (CSV for a sweep, text table otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Axes of a k/r sweep, e.g. `--sweep k=128,256 r=0,128`.
    #[arg(long, num_args = 2, value_names = ["K", "R"])]
    pub sweep: Vec<String>,
    /// Score the first-stage output against the full pipeline.
    #[arg(long)]
    pub stages: bool,
    /// Other checkpoints to compare against, e.g. a gray-encoder variant.
    #[arg(long)]
    pub compare: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "TPS,RR,RC")]
    pub aug: Vec<AugKind>,
    #[arg(long, default_value_t = 96)]
    pub resolution: u32,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub attention: AttentionArgs,
}

fn model_label(model: &Sscn) -> &'static str {
    match model.config.variant {
        Variant::TwoStage => "two-stage",
        Variant::GrayEncoder => "gray-encoder",
    }
}

fn load_model(path: &Path) -> Result<Sscn> {
    if !path.exists() {
        return Err(Error::MissingWeights(format!(
            "checkpoint {} not found; train a model or pass --checkpoint",
            path.display()
        )));
    }
    Ok(Checkpoint::load(path)?.model)
}

/// Target luminance and a reference resized to match, both at a size the
/// network accepts.
fn load_pair(target: &Path, reference: &Path, resolution: Option<u32>) -> Result<(LumaPlane, RgbImage)> {
    let mut t = load_rgb(target)?;
    if let Some(n) = resolution {
        t = resize_square(&t, n);
    }
    let (w, h) = ((t.width() / 8 * 8).max(16), (t.height() / 8 * 8).max(16));
    if (w, h) != t.dimensions() {
        log::warn!("resizing target from {:?} to {w}x{h}", t.dimensions());
        t = image::imageops::resize(&t, w, h, image::imageops::FilterType::Triangle);
    }
    let mut r = load_rgb(reference)?;
    if r.dimensions() != (w, h) {
        r = image::imageops::resize(&r, w, h, image::imageops::FilterType::Triangle);
    }
    Ok((rgb_to_lab(&t).luma(), r))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let data = args.data.clone().unwrap_or_else(|| PathBuf::from("data"));
    let mut c = match &args.config {
        Some(path) => TrainConfig::from_json_file(path)?,
        None => match args.preset {
            Preset::Paper => TrainConfig { dataset_root: data.clone(), ..TrainConfig::default() },
            Preset::Desk => TrainConfig::desk(&data),
            Preset::Overfit => TrainConfig::overfit(&data),
        },
    };
    if args.config.is_some() {
        c = c.with_env();
    }
    if let Some(d) = &args.data {
        c.dataset_root = d.clone();
    }
    if let Some(v) = &args.out {
        c.output_dir = v.clone();
    }
    if let Some(v) = args.steps {
        c.max_steps = Some(v);
    }
    if let Some(v) = args.epochs {
        c.epochs = v;
    }
    if let Some(v) = args.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = args.lr {
        c.lr = v;
    }
    if let Some(v) = args.resolution {
        c.resolution = v;
    }
    if let Some(v) = args.scale_factor {
        c.scale_factor = v;
    }
    if let Some(v) = args.k {
        c.k = v;
    }
    if let Some(v) = args.r {
        c.r = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.variant {
        c.variant = v.into();
    }
    Ok(c)
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let config = train_config(args)?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    config.validate()?;
    let mut trainer = match &args.resume {
        Some(ckpt) => Trainer::resume(config, ckpt)?,
        None => Trainer::new(config)?,
    };
    let path = trainer.run()?;
    println!("{}", path.display());
    Ok(())
}

fn run_colorize(args: &ColorizeArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let (l, reference) = load_pair(&args.target, &args.reference, args.resolution)?;
    let out = model.colorize(&l, &reference, &args.attention.options())?;
    save_rgb(&lab_to_rgb(&out.image), &args.out)?;
    if let Some(p) = &args.ab_out {
        save_ab_png(&out.image.chroma(), p)?;
    }
    if let Some(p) = &args.coarse_out {
        let coarse = out
            .coarse
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("this model variant has no coarse stage".into()))?;
        save_rgb(&lab_to_rgb(coarse), p)?;
    }
    println!(
        "{} correspondence_macs={} projection_macs={}",
        args.out.display(),
        out.macs.correspondence,
        out.macs.projection
    );
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let manifest = Manifest::read(&args.manifest)?;
    let opts = EvalOptions {
        method: args.method.clone(),
        resolution: args.resolution,
        aug_types: args.aug.clone(),
        jobs: args.jobs,
    };
    let report = if args.oracle {
        evaluate(&CopyReferenceChroma, &manifest, &opts)?
    } else {
        let path = args.checkpoint.as_ref().expect("clap requires a checkpoint without --oracle");
        let model = load_model(path)?;
        let stage = match args.stage {
            StageArg::Final => Stage::Final,
            StageArg::Coarse => Stage::Coarse,
        };
        let colorizer = ModelColorizer { model: &model, options: args.attention.options(), stage };
        evaluate(&colorizer, &manifest, &opts)?
    };
    report.write(&args.report)?;
    print!("{}", report.to_table());
    for m in &report.missing {
        eprintln!("missing: {} ({})", m.source.display(), m.reason);
    }
    Ok(())
}

fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let abs = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (p, b) = (abs(path), abs(base));
    let (pc, bc): (Vec<_>, Vec<_>) = (p.components().collect(), b.components().collect());
    let common = pc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return p;
    }
    let mut rel: PathBuf = bc[common..].iter().map(|_| Component::ParentDir).collect();
    rel.extend(&pc[common..]);
    rel
}

fn run_make_manifest(args: &MakeManifestArgs) -> Result<()> {
    let mut sources = collect_sources(&args.source)?;
    if let Some(n) = args.limit {
        sources.truncate(n);
    }
    if sources.is_empty() {
        return Err(Error::EmptyDataset(args.source.clone()));
    }
    let out_dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let prefix = relative_to(&args.source, out_dir);
    let sources: Vec<PathBuf> = sources.into_iter().map(|s| prefix.join(s)).collect();
    let manifest = Manifest::build(out_dir, &sources, &args.aug, args.seed, args.resolution)?;
    manifest.write(&args.out)?;
    println!("{} entries={} sha256={}", args.out.display(), manifest.entries.len(), manifest.hash());
    Ok(())
}

fn run_dump_attention(args: &DumpAttentionArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let (l, reference) = load_pair(&args.target, &args.reference, args.resolution)?;
    let dump = model.attention_dump(&l, &reference, &args.attention.options(), &args.queries, args.top)?;
    write_text(&args.out, &serde_json::to_string_pretty(&dump)?)?;
    println!("{} rows={}", args.out.display(), dump.rows.len());
    Ok(())
}

fn run_ablate(args: &AblateArgs) -> Result<()> {
    if args.sweep.is_empty() && !args.stages && args.compare.is_empty() {
        return Err(Error::InvalidInput("ablate needs --sweep, --stages or --compare".into()));
    }
    let model = load_model(&args.checkpoint)?;
    let manifest = Manifest::read(&args.manifest)?;
    let opts = EvalOptions {
        method: model_label(&model).into(),
        resolution: args.resolution,
        aug_types: args.aug.clone(),
        jobs: args.jobs,
    };
    let options = args.attention.options();
    let mut text = String::new();
    if !args.sweep.is_empty() {
        let (ks, rs) = parse_sweep(&args.sweep)?;
        let sweep = sweep_kr(&model, &manifest, &ks, &rs, &opts, options.seed)?;
        if let Some(out) = &args.out {
            write_text(&out.with_extension("csv"), &sweep.to_csv())?;
        }
        text.push_str(&sweep.to_table());
    }
    if args.stages {
        text.push_str(&stage_ablation(&model, options, &manifest, &opts)?.to_table());
    }
    if !args.compare.is_empty() {
        let others = args.compare.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
        let mut labels = vec![model_label(&model).to_string()];
        for (i, m) in others.iter().enumerate() {
            let base = model_label(m);
            labels.push(if labels.iter().any(|l| l == base) { format!("{base}-{}", i + 1) } else { base.into() });
        }
        let mut colorizers: Vec<ModelColorizer> = vec![ModelColorizer { model: &model, options, stage: Stage::Final }];
        colorizers.extend(others.iter().map(|m| ModelColorizer { model: m, options, stage: Stage::Final }));
        let entries: Vec<(&str, &dyn Colorizer)> =
            labels.iter().zip(&colorizers).map(|(l, c)| (l.as_str(), c as &dyn Colorizer)).collect();
        text.push_str(&Comparison::run(&entries, &manifest, &opts)?.to_table());
    }
    if let Some(out) = &args.out {
        write_text(&out.with_extension("txt"), &text)?;
    }
    print!("{text}");
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => run_train(a),
        Command::Colorize(a) => run_colorize(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::MakeManifest(a) => run_make_manifest(a),
        Command::DumpAttention(a) => run_dump_attention(a),
        Command::Ablate(a) => run_ablate(a),
    }
}

/// Parse `argv`, run, and return the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            1
        }
    }
}
