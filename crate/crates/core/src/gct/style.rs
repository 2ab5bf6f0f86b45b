use super::encoder::FeaturePyramid;
use crate::nn::{Graph, Init, ParamStore, Tensor, Var};

/// Per-site AdaIN parameters packed as `[N, Σ 2·C_site]`, each site laid
/// out as its scales followed by its biases.
#[derive(Clone, Debug)]
pub struct StyleVector {
    pub packed: Var,
    pub site_channels: Vec<usize>,
}

impl StyleVector {
    pub fn len(&self) -> usize {
        2 * self.site_channels.iter().sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.site_channels.is_empty()
    }

    /// `(y_s, y_b)`, each `[N, C_site]`.
    pub fn site(&self, g: &Graph, i: usize) -> (Var, Var) {
        let offset: usize = self.site_channels[..i].iter().map(|c| 2 * c).sum();
        let c = self.site_channels[i];
        (g.narrow(self.packed, offset, c), g.narrow(self.packed, offset + c, c))
    }

    /// Plain values of sample `n`: `(scales, biases)` per site.
    pub fn values(&self, g: &Graph, n: usize) -> Vec<(Vec<f32>, Vec<f32>)> {
        let packed = g.value(self.packed);
        let row = packed.sample(n);
        let mut out = Vec::with_capacity(self.site_channels.len());
        let mut off = 0;
        for &c in &self.site_channels {
            out.push((row[off..off + c].to_vec(), row[off + c..off + 2 * c].to_vec()));
            off += 2 * c;
        }
        out
    }
}

/// Global pooling of the last reference level followed by a three-layer MLP.
#[derive(Clone, Debug)]
pub struct StyleMlp {
    pub prefix: String,
    pub in_features: usize,
    pub hidden: usize,
    pub site_channels: Vec<usize>,
}

impl StyleMlp {
    pub fn new(prefix: impl Into<String>, in_features: usize, hidden: usize, site_channels: Vec<usize>) -> Self {
        Self {
            prefix: prefix.into(),
            in_features,
            hidden,
            site_channels,
        }
    }

    fn out_features(&self) -> usize {
        2 * self.site_channels.iter().sum::<usize>()
    }

    fn name(&self, layer: usize, part: &str) -> String {
        format!("{}.fc{layer}.{part}", self.prefix)
    }

    /// The output layer starts near zero with bias `(1, 0)` per channel, so a
    /// fresh model begins from plain instance normalization.
    pub fn init(&self, init: &mut Init, store: &mut ParamStore) {
        init.linear(store, &format!("{}.fc1", self.prefix), self.hidden, self.in_features);
        init.linear(store, &format!("{}.fc2", self.prefix), self.hidden, self.hidden);
        store.insert(self.name(3, "w"), init.normal(&[self.out_features(), self.hidden], 1e-3));
        store.insert(self.name(3, "b"), Tensor::new(&[self.out_features()], self.identity_bias()));
    }

    pub fn identity_bias(&self) -> Vec<f32> {
        let mut bias = Vec::with_capacity(self.out_features());
        for &c in &self.site_channels {
            bias.extend(std::iter::repeat_n(1.0, c));
            bias.extend(std::iter::repeat_n(0.0, c));
        }
        bias
    }

    pub fn style_from_features(&self, g: &Graph, store: &ParamStore, pyramid: &FeaturePyramid) -> StyleVector {
        let last = *pyramid.levels.last().expect("non-empty pyramid");
        let mut h = g.global_avg_pool(last);
        for layer in 1..=3 {
            let w = store.var(g, &self.name(layer, "w"));
            let b = store.var(g, &self.name(layer, "b"));
            h = g.linear(h, w, Some(b));
            if layer < 3 {
                h = g.relu(h);
            }
        }
        StyleVector {
            packed: h,
            site_channels: self.site_channels.clone(),
        }
    }
}
