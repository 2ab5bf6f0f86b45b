use super::encoder::{FeaturePyramid, PyramidSource};
use crate::nn::{Conv, Graph, Init, ParamStore, Var};

pub const VGG_BASE_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
/// Where each pyramid level is tapped, named after the VGG19 layers they mirror.
pub const VGG_CUT_POINTS: [&str; 5] = ["relu1_2", "relu2_2", "relu3_2", "relu4_2", "relu5_2"];

/// VGG-style gray-image encoder: five stages of two 3×3 conv + ReLU
/// layers, 2×2 max pooling between stages, single-channel input.
#[derive(Clone, Debug)]
pub struct GrayVgg {
    pub prefix: String,
    pub widths: [usize; 5],
}

impl GrayVgg {
    pub fn new(prefix: impl Into<String>, widths: [usize; 5]) -> Self {
        Self {
            prefix: prefix.into(),
            widths,
        }
    }

    fn conv(&self, stage: usize, j: usize) -> String {
        format!("{}.conv{}_{}", self.prefix, stage + 1, j + 1)
    }

    pub fn init(&self, init: &mut Init, store: &mut ParamStore) {
        let mut cin = 1;
        for (s, &w) in self.widths.iter().enumerate() {
            init.conv(store, &self.conv(s, 0), w, cin, 3);
            init.conv(store, &self.conv(s, 1), w, w, 3);
            cin = w;
        }
    }

    /// Levels at scales 1, 1/2, 1/4, 1/8, 1/16.
    pub fn forward(&self, g: &Graph, store: &ParamStore, gray: Var) -> FeaturePyramid {
        let mut levels = Vec::with_capacity(5);
        let mut h = gray;
        for s in 0..self.widths.len() {
            if s > 0 {
                h = g.max_pool2(h);
            }
            for j in 0..2 {
                h = g.relu(Conv::new(self.conv(s, j), 1, 1).forward(g, store, h));
            }
            levels.push(h);
        }
        FeaturePyramid {
            levels,
            source: PyramidSource::Gray,
        }
    }
}
