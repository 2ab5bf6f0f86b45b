use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometric::{crop_resize, random_angle, rotate, CropWindow};
use super::tps::{random_spec, tps_warp, TpsWarpSpec};
use crate::color::{rgb_to_lab, AbPlanes, LumaPlane};
use crate::error::{Error, Result};
use crate::imaging::FloatImage;

/// Probability that a training reference gets a violent warp.
pub const DEFAULT_VIOLENT_PROB: f64 = 0.1;

/// Gray target, synthetic reference and ground-truth chroma of one source.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub target_l: LumaPlane,
    pub reference: RgbImage,
    pub gt_ab: AbPlanes,
    pub class_label: Option<usize>,
}

fn ensure_color(image: &RgbImage) -> Result<()> {
    if image.pixels().all(|p| p.0[0] == p.0[1] && p.0[1] == p.0[2]) {
        return Err(Error::InvalidInput("grayscale-only source cannot provide chroma".into()));
    }
    Ok(())
}

/// Build a pair with an explicit warp.
pub fn make_training_pair_with(image: &RgbImage, spec: &TpsWarpSpec, class_label: Option<usize>) -> Result<TrainingPair> {
    ensure_color(image)?;
    let lab = rgb_to_lab(image);
    let reference = tps_warp(&FloatImage::from_rgb(image), spec)?.to_rgb();
    Ok(TrainingPair {
        target_l: lab.luma(),
        reference,
        gt_ab: lab.chroma(),
        class_label,
    })
}

/// Build a pair with a random TPS reference, violent with probability
/// `violent_prob`.
pub fn make_training_pair<R: Rng + ?Sized>(
    image: &RgbImage,
    rng: &mut R,
    violent_prob: f64,
    class_label: Option<usize>,
) -> Result<TrainingPair> {
    let violent = rng.random_bool(violent_prob.clamp(0.0, 1.0));
    let spec = random_spec(rng, violent);
    make_training_pair_with(image, &spec, class_label)
}

/// Self-augmentation reference families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugKind {
    #[serde(rename = "TPS")]
    Tps,
    #[serde(rename = "RR")]
    Rr,
    #[serde(rename = "RC")]
    Rc,
}

impl AugKind {
    pub const ALL: [AugKind; 3] = [AugKind::Tps, AugKind::Rr, AugKind::Rc];

    pub fn label(self) -> &'static str {
        match self {
            AugKind::Tps => "TPS",
            AugKind::Rr => "RR",
            AugKind::Rc => "RC",
        }
    }
}

impl fmt::Display for AugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AugKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TPS" => Ok(AugKind::Tps),
            "RR" => Ok(AugKind::Rr),
            "RC" => Ok(AugKind::Rc),
            _ => Err(Error::InvalidInput(format!("unknown augmentation {s:?} (TPS|RR|RC)"))),
        }
    }
}

/// A fully parameterized augmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Augmentation {
    Tps(TpsWarpSpec),
    Rotation { degrees: f64 },
    Crop(CropWindow),
}

impl Augmentation {
    /// Draw parameters for `kind`. Evaluation TPS warps use the normal regime.
    pub fn sample<R: Rng + ?Sized>(kind: AugKind, rng: &mut R, width: usize, height: usize) -> Self {
        match kind {
            AugKind::Tps => Augmentation::Tps(random_spec(rng, false)),
            AugKind::Rr => Augmentation::Rotation {
                degrees: random_angle(rng),
            },
            AugKind::Rc => Augmentation::Crop(CropWindow::random(rng, width, height)),
        }
    }

    pub fn kind(&self) -> AugKind {
        match self {
            Augmentation::Tps(_) => AugKind::Tps,
            Augmentation::Rotation { .. } => AugKind::Rr,
            Augmentation::Crop(_) => AugKind::Rc,
        }
    }

    pub fn apply(&self, image: &FloatImage) -> Result<FloatImage> {
        Ok(match self {
            Augmentation::Tps(spec) => tps_warp(image, spec)?,
            Augmentation::Rotation { degrees } => rotate(image, *degrees),
            Augmentation::Crop(window) => crop_resize(image, *window),
        })
    }
}

/// Gray target, augmented reference and full-color ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTriplet {
    pub target_l: LumaPlane,
    pub reference: RgbImage,
    pub gt_rgb: RgbImage,
}

pub fn make_eval_triplet_with(image: &RgbImage, aug: &Augmentation) -> Result<EvalTriplet> {
    ensure_color(image)?;
    let reference = aug.apply(&FloatImage::from_rgb(image))?.to_rgb();
    Ok(EvalTriplet {
        target_l: rgb_to_lab(image).luma(),
        reference,
        gt_rgb: image.clone(),
    })
}

pub fn make_eval_triplet<R: Rng + ?Sized>(image: &RgbImage, kind: AugKind, rng: &mut R) -> Result<EvalTriplet> {
    let aug = Augmentation::sample(kind, rng, image.width() as usize, image.height() as usize);
    make_eval_triplet_with(image, &aug)
}
