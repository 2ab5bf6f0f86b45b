//! Synthetic reference generation by geometric distortion.

mod geometric;
mod manifest;
mod pairs;
mod tps;

pub use geometric::{
    crop_resize, random_angle, random_crop, random_rotation, rotate, CropWindow, MAX_ROTATION_DEG, MIN_CROP_FRACTION,
};
pub use manifest::{sha256_hex, Manifest, ManifestEntry};
pub use pairs::{
    make_eval_triplet, make_eval_triplet_with, make_training_pair, make_training_pair_with, AugKind, Augmentation,
    EvalTriplet, TrainingPair, DEFAULT_VIOLENT_PROB,
};
pub use tps::{random_spec, tps_warp, ThinPlateSpline, TpsWarpSpec, DEFAULT_GRID, NORMAL_MAX, VIOLENT_RANGE};
