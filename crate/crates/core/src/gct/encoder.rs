use crate::nn::{Conv, Graph, Init, ParamStore, Var};

/// Stride of each residual block; cumulative scales are 1, 1/2, 1/4, 1/4, 1/8, 1/8.
pub const ENCODER_STRIDES: [usize; 6] = [1, 2, 2, 1, 2, 1];
/// Base channel widths before the desk-scale multiplier.
pub const ENCODER_BASE_WIDTHS: [usize; 6] = [64, 128, 256, 256, 512, 512];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PyramidSource {
    Reference,
    Coarse,
    Gray,
}

/// Encoder feature maps, finest first. Each level is `[N, C, H, W]`.
#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    pub levels: Vec<Var>,
    pub source: PyramidSource,
}

impl FeaturePyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, i: usize) -> Var {
        self.levels[i]
    }

    /// `(channels, height, width)` per level.
    pub fn shapes(&self, g: &Graph) -> Vec<(usize, usize, usize)> {
        self.levels
            .iter()
            .map(|&v| {
                let s = g.shape(v);
                (s[1], s[2], s[3])
            })
            .collect()
    }
}

/// Six residual blocks of two 3×3 convolutions; the first convolution of a
/// block carries its stride and a 1×1 projection matches the shortcut.
#[derive(Clone, Debug)]
pub struct ResidualEncoder {
    pub prefix: String,
    pub in_channels: usize,
    pub widths: [usize; 6],
}

impl ResidualEncoder {
    pub fn new(prefix: impl Into<String>, in_channels: usize, widths: [usize; 6]) -> Self {
        Self {
            prefix: prefix.into(),
            in_channels,
            widths,
        }
    }

    fn block(&self, i: usize) -> String {
        format!("{}.b{}", self.prefix, i + 1)
    }

    fn needs_projection(&self, i: usize) -> bool {
        let cin = if i == 0 { self.in_channels } else { self.widths[i - 1] };
        cin != self.widths[i] || ENCODER_STRIDES[i] != 1
    }

    pub fn init(&self, init: &mut Init, store: &mut ParamStore) {
        let mut cin = self.in_channels;
        for (i, &w) in self.widths.iter().enumerate() {
            let b = self.block(i);
            init.conv(store, &format!("{b}.c1"), w, cin, 3);
            init.conv(store, &format!("{b}.c2"), w, w, 3);
            if self.needs_projection(i) {
                init.conv(store, &format!("{b}.skip"), w, cin, 1);
            }
            cin = w;
        }
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var, source: PyramidSource) -> FeaturePyramid {
        let mut levels = Vec::with_capacity(6);
        let mut h = x;
        for (i, &stride) in ENCODER_STRIDES.iter().enumerate() {
            let b = self.block(i);
            let y = g.relu(Conv::new(format!("{b}.c1"), stride, 1).forward(g, store, h));
            let y = Conv::new(format!("{b}.c2"), 1, 1).forward(g, store, y);
            let shortcut = if self.needs_projection(i) {
                Conv::new(format!("{b}.skip"), stride, 0).forward(g, store, h)
            } else {
                h
            };
            h = g.relu(g.add(y, shortcut));
            levels.push(h);
        }
        FeaturePyramid { levels, source }
    }
}
