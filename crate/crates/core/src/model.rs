//! The assembled two-stage network.

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::{rgb_to_lab, AbPlanes, LabImage, LumaPlane, Q};
use crate::error::{Error, Result};
use crate::gct::{
    FeaturePyramid, GlobalColorTransfer, PyramidSource, ResidualEncoder, StyleMlp, StyleVector, DECODER_BASE_WIDTHS,
    ENCODER_BASE_WIDTHS, VGG_BASE_WIDTHS, VGG_CUT_POINTS,
};
use crate::ldt::{
    attend, flatten_pyramid, region_grid, select_regions, split_flattened, AttentionDump, AttentionProjections,
    Classifier, FusionDecoder, MacCount, SparseSelection, CAM_LEVEL, CORRESPONDENCE_LEVELS,
};
use crate::nn::{Graph, Init, ParamStore, Tensor, Var};

/// Which network produces the features the correspondence is built from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Coarse AdaIN colorization first, then re-encode the coarse result.
    #[default]
    TwoStage,
    /// No coarse stage: a one-channel copy of the reference encoder reads
    /// the gray target directly.
    GrayEncoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Channel-width multiplier applied to every convolutional width.
    pub scale_factor: f64,
    pub class_count: usize,
    pub variant: Variant,
    pub mlp_hidden: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            scale_factor: 1.0,
            class_count: 1000,
            variant: Variant::TwoStage,
            mlp_hidden: 256,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Quarter-width network over ten classes.
    pub fn desk() -> Self {
        Self {
            scale_factor: 0.25,
            class_count: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return Err(Error::InvalidInput(format!("scale_factor must be > 0, got {}", self.scale_factor)));
        }
        if self.class_count == 0 || self.mlp_hidden == 0 {
            return Err(Error::InvalidInput("class_count and mlp_hidden must be positive".into()));
        }
        Ok(())
    }

    pub fn width(&self, base: usize) -> usize {
        ((base as f64 * self.scale_factor).round() as usize).max(1)
    }

    fn widths<const N: usize>(&self, base: [usize; N]) -> [usize; N] {
        base.map(|b| self.width(b))
    }

    pub fn encoder_widths(&self) -> [usize; 6] {
        self.widths(ENCODER_BASE_WIDTHS)
    }

    /// Correspondence feature width `d`.
    pub fn flat_dim(&self) -> usize {
        self.encoder_widths()[..CORRESPONDENCE_LEVELS].iter().sum()
    }

    /// Human-readable architecture choices stored with checkpoints.
    pub fn arch_notes(&self) -> Vec<(String, String)> {
        let e = self.encoder_widths();
        vec![
            ("reference_encoder".into(), format!("6 residual blocks, widths {e:?}, strides [1,2,2,1,2,1]")),
            (
                "gray_encoder".into(),
                match self.variant {
                    Variant::TwoStage => format!(
                        "VGG-style, taps {} , widths {:?}",
                        VGG_CUT_POINTS.join(","),
                        self.widths(VGG_BASE_WIDTHS)
                    ),
                    Variant::GrayEncoder => format!("1-channel residual encoder, widths {e:?}"),
                },
            ),
            (
                "gct_decoder".into(),
                format!("4 upsampling stages with skips, AdaIN after each conv, widths {:?}", self.widths(DECODER_BASE_WIDTHS)),
            ),
            (
                "fusion_decoder".into(),
                format!(
                    "U-Net stages at 1/8,1/4,1/2,1 with attended features at each scale, widths {:?}, distribution head at 1/4",
                    self.widths(DECODER_BASE_WIDTHS)
                ),
            ),
            ("attention".into(), format!("single head, d={}", self.flat_dim())),
        ]
    }
}

/// Dense attention, or sparse over the `k` strongest CAM regions plus `r`
/// random ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AttentionMode {
    Dense,
    Sparse { k: usize, r: usize },
}

impl Default for AttentionMode {
    fn default() -> Self {
        AttentionMode::Sparse { k: 256, r: 256 }
    }
}

impl AttentionMode {
    /// Check against the region count of an `h × w` input.
    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        if let AttentionMode::Sparse { k, r } = *self {
            let (gh, gw) = region_grid(h, w);
            if k + r > gh * gw {
                return Err(Error::SelectionTooLarge { k, r, regions: gh * gw });
            }
            if k + r == 0 {
                return Err(Error::InvalidInput("sparse attention needs k+r >= 1".into()));
            }
        }
        Ok(())
    }
}

/// A batch of network inputs in normalized units.
#[derive(Clone, Debug)]
pub struct ModelInput {
    /// `[N, 1, H, W]`, `L / 50 − 1`.
    pub target_l: Tensor,
    /// `[N, 3, H', W']` normalized Lab of the reference.
    pub reference: Tensor,
    pub labels: Vec<Option<usize>>,
}

/// Normalized Lab planes `[L/50 − 1, a/110, b/110]` of an RGB image.
pub fn normalized_lab(image: &RgbImage) -> Vec<f32> {
    let lab = rgb_to_lab(image);
    let mut out = lab.luma().normalized();
    out.extend(lab.chroma().normalized());
    out
}

impl ModelInput {
    pub fn new(items: &[(&LumaPlane, &RgbImage, Option<usize>)]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
        let (h, w) = (first.0.height, first.0.width);
        let (rw, rh) = first.1.dimensions();
        let mut target = Vec::with_capacity(items.len() * h * w);
        let mut reference = Vec::with_capacity(items.len() * 3 * (rh * rw) as usize);
        let mut labels = Vec::with_capacity(items.len());
        for (l, r, label) in items {
            if (l.height, l.width) != (h, w) || r.dimensions() != (rw, rh) {
                return Err(Error::Shape("batch items differ in size".into()));
            }
            target.extend(l.normalized());
            reference.extend(normalized_lab(r));
            labels.push(*label);
        }
        let n = items.len();
        Ok(Self {
            target_l: Tensor::new(&[n, 1, h, w], target),
            reference: Tensor::new(&[n, 3, rh as usize, rw as usize], reference),
            labels,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.labels.len()
    }
}

/// Graph handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `[N, 2, H, W]` coarse ab (two-stage variant only).
    pub coarse_ab: Option<Var>,
    pub final_ab: Var,
    /// `[N, Q, H/4, W/4]`.
    pub distribution: Var,
    pub logits: Var,
    pub style: Option<StyleVector>,
    pub selections: Vec<Option<SparseSelection>>,
    pub cam_classes: Vec<usize>,
    pub macs: MacCount,
    /// `[N, d, R]` flattened coarse-image and reference features.
    pub coarse_features: Var,
    pub reference_features: Var,
}

/// Network description plus its parameters.
#[derive(Clone, Debug)]
pub struct Sscn {
    pub config: ModelConfig,
    pub params: ParamStore,
}

struct Parts {
    reference_encoder: ResidualEncoder,
    gray_encoder: ResidualEncoder,
    gct: GlobalColorTransfer,
    style: StyleMlp,
    classifier: Classifier,
    fusion: FusionDecoder,
}

impl Sscn {
    fn parts(config: &ModelConfig) -> Parts {
        let enc = config.encoder_widths();
        let dec = config.widths(DECODER_BASE_WIDTHS);
        let gct = GlobalColorTransfer::new("gct", config.widths(VGG_BASE_WIDTHS), dec);
        let style = StyleMlp::new("style", enc[5], config.mlp_hidden, gct.site_channels());
        Parts {
            reference_encoder: ResidualEncoder::new("ref_enc", 3, enc),
            gray_encoder: ResidualEncoder::new("gray_enc", 1, enc),
            gct,
            style,
            classifier: Classifier::new("cls", enc[CAM_LEVEL], config.class_count),
            fusion: FusionDecoder {
                prefix: "fuse".into(),
                flat_dim: config.flat_dim(),
                attended_width: config.width(256),
                level_channels: enc,
                widths: dec,
                bins: Q,
            },
        }
    }

    /// Freshly initialized weights, seeded by `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let parts = Self::parts(&config);
        let mut init = Init::new(config.init_seed);
        let mut params = ParamStore::new();
        parts.reference_encoder.init(&mut init, &mut params);
        match config.variant {
            Variant::TwoStage => {
                parts.gct.init(&mut init, &mut params);
                parts.style.init(&mut init, &mut params);
            }
            Variant::GrayEncoder => parts.gray_encoder.init(&mut init, &mut params),
        }
        parts.classifier.init(&mut init, &mut params);
        let d = config.flat_dim();
        let std = 1.0 / (d as f32).sqrt();
        for name in ["ldt.wq", "ldt.wk", "ldt.wv"] {
            params.insert(name, init.normal(&[d, d], std));
        }
        parts.fusion.init(&mut init, &mut params);
        Ok(Self { config, params })
    }

    /// Adopt externally supplied parameters after checking that every
    /// tensor the architecture needs is present with the right shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let reference = Self::new(config.clone())?;
        for (name, t) in reference.params.iter() {
            let have = params
                .get(name)
                .map_err(|_| Error::MissingWeights(format!("tensor {name} absent")))?;
            if have.shape() != t.shape() {
                return Err(Error::MissingWeights(format!(
                    "tensor {name} has shape {:?}, architecture needs {:?}",
                    have.shape(),
                    t.shape()
                )));
            }
        }
        if params.len() != reference.params.len() {
            let extra: Vec<&str> = params.names().filter(|n| !reference.params.contains(n)).collect();
            return Err(Error::MissingWeights(format!("unexpected tensors {extra:?}")));
        }
        Ok(Self { config, params })
    }

    pub fn encode_reference(&self, g: &Graph, x: Var) -> Result<FeaturePyramid> {
        let s = g.shape(x);
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::Shape(format!("reference must be [N, 3, H, W], got {s:?}")));
        }
        Ok(Self::parts(&self.config).reference_encoder.forward(g, &self.params, x, PyramidSource::Reference))
    }

    pub fn style_vector(&self, g: &Graph, pyramid: &FeaturePyramid) -> StyleVector {
        Self::parts(&self.config).style.style_from_features(g, &self.params, pyramid)
    }

    /// Coarse normalized ab from the gray target and a style vector.
    pub fn coarse_colorize(&self, g: &Graph, target_l: Var, style: &StyleVector) -> Result<Var> {
        if self.config.variant != Variant::TwoStage {
            return Err(Error::InvalidInput("the gray-encoder variant has no coarse stage".into()));
        }
        Ok(Self::parts(&self.config).gct.coarse_colorize(g, &self.params, target_l, style))
    }

    /// Full forward pass. `rng` drives the random part of sparse selection.
    pub fn forward<R: Rng + ?Sized>(&self, g: &Graph, input: &ModelInput, mode: AttentionMode, rng: &mut R) -> Result<ForwardOutput> {
        let (_, _, h, w) = input.target_l.dims4();
        let (_, rc, rh, rw) = input.reference.dims4();
        if rc != 3 {
            return Err(Error::Shape(format!("reference has {rc} channels, expected 3")));
        }
        for (name, a, b) in [("target", h, w), ("reference", rh, rw)] {
            if a < 16 || b < 16 || a % 8 != 0 || b % 8 != 0 {
                return Err(Error::Shape(format!("{name} size {a}x{b} must be multiples of 8, at least 16")));
            }
        }
        mode.validate(rh, rw)?;
        let parts = Self::parts(&self.config);
        let store = &self.params;

        let target = g.constant(input.target_l.clone());
        let reference = g.constant(input.reference.clone());
        let ref_pyr = parts.reference_encoder.forward(g, store, reference, PyramidSource::Reference);

        let (coarse_ab, style, coarse_pyr) = match self.config.variant {
            Variant::TwoStage => {
                let style = parts.style.style_from_features(g, store, &ref_pyr);
                let ab = parts.gct.coarse_colorize(g, store, target, &style);
                let ic = g.concat(&[target, ab]);
                let pyr = parts.reference_encoder.forward(g, store, ic, PyramidSource::Coarse);
                (Some(ab), Some(style), pyr)
            }
            Variant::GrayEncoder => {
                let pyr = parts.gray_encoder.forward(g, store, target, PyramidSource::Gray);
                (None, None, pyr)
            }
        };

        let fr = flatten_pyramid(g, &ref_pyr, (rh, rw))?;
        let fc = flatten_pyramid(g, &coarse_pyr, (h, w))?;
        let cam = parts
            .classifier
            .compute_cam(g, store, &ref_pyr, &input.labels, region_grid(rh, rw))?;
        let d = self.config.flat_dim();
        let (gh, gw) = region_grid(h, w);
        let n = input.batch_size();
        let (keys, selections) = match mode {
            AttentionMode::Dense => (fr, vec![None; n]),
            AttentionMode::Sparse { k, r } => {
                let sels = cam
                    .scores
                    .iter()
                    .map(|s| select_regions(s, k, r, rng))
                    .collect::<Result<Vec<_>>>()?;
                let idx: Vec<Vec<usize>> = sels.iter().map(|s| s.indices()).collect();
                (g.gather_columns(fr, &idx), sels.into_iter().map(Some).collect())
            }
        };
        let nk = g.shape(keys)[2];
        let attended = g.attend(
            fc,
            keys,
            store.var(g, "ldt.wq"),
            store.var(g, "ldt.wk"),
            store.var(g, "ldt.wv"),
        );
        let mut macs = MacCount::default();
        for _ in 0..n {
            macs += MacCount::new(d, gh * gw, nk);
        }
        let attended = g.reshape(attended, &[n, d, gh, gw]);
        let (final_ab, distribution) = parts.fusion.fuse_and_decode(g, store, attended, &coarse_pyr);
        Ok(ForwardOutput {
            coarse_ab,
            final_ab,
            distribution,
            logits: cam.logits,
            style,
            selections,
            cam_classes: cam.classes,
            macs,
            coarse_features: fc,
            reference_features: fr,
        })
    }

    /// Colorize one gray image. The luminance plane is passed through
    /// untouched; only chroma is predicted.
    pub fn colorize(&self, target_l: &LumaPlane, reference: &RgbImage, opts: &ColorizeOptions) -> Result<Colorization> {
        let input = ModelInput::new(&[(target_l, reference, None)])?;
        let g = Graph::inference();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let out = self.forward(&g, &input, opts.mode, &mut rng)?;
        let (h, w) = (target_l.height, target_l.width);
        let to_lab = |v: Var| -> Result<LabImage> {
            let ab = AbPlanes::from_normalized(h, w, g.value(v).data());
            LabImage::from_planes(target_l.clone(), ab)
        };
        Ok(Colorization {
            image: to_lab(out.final_ab)?,
            coarse: out.coarse_ab.map(to_lab).transpose()?,
            selection: out.selections.into_iter().next().flatten(),
            macs: out.macs,
        })
    }
}

impl Sscn {
    /// Attention rows of `queries` (all query regions when empty) for one
    /// target/reference pair, as used by [`Sscn::colorize`] with `opts`.
    pub fn attention_dump(
        &self,
        target_l: &LumaPlane,
        reference: &RgbImage,
        opts: &ColorizeOptions,
        queries: &[usize],
        top: Option<usize>,
    ) -> Result<AttentionDump> {
        let input = ModelInput::new(&[(target_l, reference, None)])?;
        let g = Graph::inference();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let out = self.forward(&g, &input, opts.mode, &mut rng)?;
        let (gh, gw) = region_grid(target_l.height, target_l.width);
        let (rh, rw) = region_grid(reference.height() as usize, reference.width() as usize);
        let fc = split_flattened(&g.value(out.coarse_features), gh, gw, PyramidSource::Coarse);
        let fr = split_flattened(&g.value(out.reference_features), rh, rw, PyramidSource::Reference);
        let proj = AttentionProjections {
            wq: (**self.params.get("ldt.wq")?).clone(),
            wk: (**self.params.get("ldt.wk")?).clone(),
            wv: (**self.params.get("ldt.wv")?).clone(),
        };
        let selection = out.selections.into_iter().next().flatten();
        let att = attend(&fc[0], &fr[0], selection.as_ref(), &proj)?;
        let all: Vec<usize> = (0..gh * gw).collect();
        let queries = if queries.is_empty() { &all[..] } else { queries };
        if let Some(&bad) = queries.iter().find(|&&q| q >= gh * gw) {
            return Err(Error::InvalidInput(format!("query region {bad} outside {} regions", gh * gw)));
        }
        Ok(AttentionDump::new(&att, selection.as_ref(), queries, top))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorizeOptions {
    pub mode: AttentionMode,
    /// Seed of the random part of sparse selection.
    pub seed: u64,
}

impl ColorizeOptions {
    pub fn with_mode(self, mode: AttentionMode) -> Self {
        Self { mode, ..self }
    }
}

#[derive(Clone, Debug)]
pub struct Colorization {
    pub image: LabImage,
    pub coarse: Option<LabImage>,
    pub selection: Option<SparseSelection>,
    pub macs: MacCount,
}
