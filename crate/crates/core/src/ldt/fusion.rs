use crate::gct::FeaturePyramid;
use crate::nn::{Conv, Graph, Init, ParamStore, Var};

pub const HEAD_GAIN: f32 = 1e-3;

/// U-Net style decoder over the coarse-image pyramid with the attended
/// features injected at every scale.
///
/// Stages run at 1/8, 1/4, 1/2 and full resolution. The distribution head
/// reads the 1/4 stage; the ab head the last one.
#[derive(Clone, Debug)]
pub struct FusionDecoder {
    pub prefix: String,
    pub flat_dim: usize,
    pub attended_width: usize,
    pub level_channels: [usize; 6],
    pub widths: [usize; 4],
    pub bins: usize,
}

impl FusionDecoder {
    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    fn stage_inputs(&self) -> [usize; 4] {
        let (c, a, w) = (self.level_channels, self.attended_width, self.widths);
        [c[5] + c[4] + a, w[0] + c[3] + c[2] + a, w[1] + c[1] + a, w[2] + c[0] + a]
    }

    pub fn init(&self, init: &mut Init, store: &mut ParamStore) {
        init.conv(store, &self.name("proj"), self.attended_width, self.flat_dim, 1);
        for (i, (&cin, &cout)) in self.stage_inputs().iter().zip(&self.widths).enumerate() {
            init.conv(store, &self.name(&format!("d{}", i + 1)), cout, cin, 3);
        }
        init.conv_head(store, &self.name("dist"), self.bins, self.widths[1], 1, HEAD_GAIN);
        init.conv_head(store, &self.name("out"), 2, self.widths[3], 3, HEAD_GAIN);
    }

    /// `attended: [N, d, H/4, W/4]`. Returns `(ab [N, 2, H, W] in [-1, 1],
    /// distribution [N, Q, H/4, W/4])`.
    pub fn fuse_and_decode(&self, g: &Graph, store: &ParamStore, attended: Var, coarse: &FeaturePyramid) -> (Var, Var) {
        let a = g.relu(Conv::new(self.name("proj"), 1, 0).forward(g, store, attended));
        let at = |v: Var| {
            let s = g.shape(v);
            (s[2], s[3])
        };
        let fit = |v: Var, (h, w): (usize, usize)| g.resize_bilinear(v, h, w);
        let stage = |i: usize, parts: &[Var]| {
            g.relu(Conv::new(self.name(&format!("d{}", i + 1)), 1, 1).forward(g, store, g.concat(parts)))
        };
        let l = &coarse.levels;
        let s8 = at(l[5]);
        let x = stage(0, &[l[5], l[4], fit(a, s8)]);
        let s4 = at(l[3]);
        let x = stage(1, &[fit(x, s4), l[3], l[2], fit(a, s4)]);
        let logits = Conv::new(self.name("dist"), 1, 0).forward(g, store, x);
        let dist = g.softmax_channels(logits);
        let s2 = at(l[1]);
        let x = stage(2, &[fit(x, s2), l[1], fit(a, s2)]);
        let s1 = at(l[0]);
        let x = stage(3, &[fit(x, s1), l[0], fit(a, s1)]);
        let ab = g.tanh(Conv::new(self.name("out"), 1, 1).forward(g, store, x));
        (ab, dist)
    }
}
