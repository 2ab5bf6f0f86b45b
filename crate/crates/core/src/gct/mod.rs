//! Coarse stage: reference encoding, style extraction and AdaIN-driven
//! colorization of the gray target.

mod adain;
mod encoder;
mod style;
mod vgg;

pub use adain::{adain, adain_backward, adain_forward, channel_moments, AdainCache, ADAIN_EPS};
pub use encoder::{FeaturePyramid, PyramidSource, ResidualEncoder, ENCODER_BASE_WIDTHS, ENCODER_STRIDES};
pub use style::{StyleMlp, StyleVector};
pub use vgg::{GrayVgg, VGG_BASE_WIDTHS, VGG_CUT_POINTS};

use crate::nn::{Conv, Graph, Init, ParamStore, Var};

pub const DECODER_BASE_WIDTHS: [usize; 4] = [512, 256, 128, 64];

/// Gray encoder plus a skip-connected decoder with AdaIN after every
/// decoder convolution. Emits normalized ab through `tanh`.
#[derive(Clone, Debug)]
pub struct GlobalColorTransfer {
    pub encoder: GrayVgg,
    pub prefix: String,
    pub decoder_widths: [usize; 4],
}

impl GlobalColorTransfer {
    pub fn new(prefix: &str, encoder_widths: [usize; 5], decoder_widths: [usize; 4]) -> Self {
        Self {
            encoder: GrayVgg::new(format!("{prefix}.enc"), encoder_widths),
            prefix: prefix.to_string(),
            decoder_widths,
        }
    }

    /// Channel count of each AdaIN site, in decoding order.
    pub fn site_channels(&self) -> Vec<usize> {
        self.decoder_widths.to_vec()
    }

    fn dec(&self, i: usize) -> String {
        format!("{}.dec{}", self.prefix, i + 1)
    }

    fn out(&self) -> String {
        format!("{}.out", self.prefix)
    }

    pub fn init(&self, init: &mut Init, store: &mut ParamStore) {
        self.encoder.init(init, store);
        let enc = self.encoder.widths;
        let mut cin = enc[4];
        for (i, &w) in self.decoder_widths.iter().enumerate() {
            let skip = enc[3 - i];
            init.conv(store, &self.dec(i), w, cin + skip, 3);
            cin = w;
        }
        init.conv_head(store, &self.out(), 2, cin, 3, crate::ldt::HEAD_GAIN);
    }

    /// `gray: [N, 1, H, W]` normalized luminance → `[N, 2, H, W]` in `[-1, 1]`.
    pub fn coarse_colorize(&self, g: &Graph, store: &ParamStore, gray: Var, style: &StyleVector) -> Var {
        let feats = self.encoder.forward(g, store, gray);
        let mut h = feats.level(4);
        for i in 0..self.decoder_widths.len() {
            let skip = feats.level(3 - i);
            let s = g.shape(skip);
            let up = g.resize_bilinear(h, s[2], s[3]);
            let x = Conv::new(self.dec(i), 1, 1).forward(g, store, g.concat(&[up, skip]));
            let (ys, yb) = style.site(g, i);
            h = g.relu(g.adain(x, ys, yb));
        }
        g.tanh(Conv::new(self.out(), 1, 1).forward(g, store, h))
    }
}
