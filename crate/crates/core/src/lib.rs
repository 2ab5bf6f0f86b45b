pub mod ablation;
pub mod checkpoint;
pub mod cli;
pub mod color;
pub mod data;
pub mod error;
pub mod evaluator;
pub mod gct;
pub mod imaging;
pub mod ldt;
pub mod losses;
pub mod model;
pub mod nn;
pub mod trainer;
pub mod warp;

pub use error::{Error, Result};
