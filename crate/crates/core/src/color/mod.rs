//! RGB ↔ CIE Lab conversion and the quantized ab-bin representation.

mod distribution;
mod gamut;
mod lab;

pub use distribution::{decode_distribution, encode_ab, ColorDistribution, SOFT_NEIGHBORS, SOFT_SIGMA};
pub use gamut::{build_gamut, AbGamut, GRID, Q};
pub use lab::{
    dynamic_to_lab, lab_to_rgb, lab_to_srgb, lab_to_srgb8, rgb_to_lab, srgb8_to_lab, srgb_to_lab, AbPlanes,
    LabImage, LumaPlane, AB_MAX, L_MAX,
};
