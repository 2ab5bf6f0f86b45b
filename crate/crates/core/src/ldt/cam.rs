use crate::error::{Error, Result};
use crate::gct::FeaturePyramid;
use crate::nn::{resize_plane, AxisWeights, Graph, Init, ParamStore, Var};

/// Pyramid level (0-based) read by the classifier.
pub const CAM_LEVEL: usize = 4;

/// Global-average-pool + linear classifier over one pyramid level.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub prefix: String,
    pub channels: usize,
    pub classes: usize,
}

/// Logits plus the flattened activation map of the class that drove it.
#[derive(Clone, Debug)]
pub struct CamOutput {
    pub logits: Var,
    pub classes: Vec<usize>,
    /// One length-R score vector per sample.
    pub scores: Vec<Vec<f32>>,
}

impl Classifier {
    pub fn new(prefix: impl Into<String>, channels: usize, classes: usize) -> Self {
        Self {
            prefix: prefix.into(),
            channels,
            classes,
        }
    }

    fn weight(&self) -> String {
        format!("{}.w", self.prefix)
    }

    pub fn init(&self, init: &mut Init, store: &mut ParamStore) {
        init.linear(store, &self.prefix, self.classes, self.channels);
    }

    pub fn logits(&self, g: &Graph, store: &ParamStore, pyramid: &FeaturePyramid) -> Var {
        let pooled = g.global_avg_pool(pyramid.level(CAM_LEVEL));
        let w = store.var(g, &self.weight());
        let b = store.var(g, &format!("{}.b", self.prefix));
        g.linear(pooled, w, Some(b))
    }

    /// Classifier logits and, per sample, the CAM of `class_ids[s]` (or of
    /// the arg-max class when absent) on the `grid` region lattice. The map
    /// is computed from values only; no gradient flows through it.
    pub fn compute_cam(
        &self,
        g: &Graph,
        store: &ParamStore,
        pyramid: &FeaturePyramid,
        class_ids: &[Option<usize>],
        grid: (usize, usize),
    ) -> Result<CamOutput> {
        let logits = self.logits(g, store, pyramid);
        let lv = g.value(logits);
        let feats = g.value(pyramid.level(CAM_LEVEL));
        let (n, c, h, w) = feats.dims4();
        if class_ids.len() != n {
            return Err(Error::Shape(format!("{} class ids for a batch of {n}", class_ids.len())));
        }
        let weights = store.get(&self.weight())?;
        let mut classes = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        for (s, id) in class_ids.iter().enumerate() {
            let class = match *id {
                Some(cl) if cl >= self.classes => {
                    return Err(Error::ClassOutOfRange {
                        class_id: cl,
                        class_count: self.classes,
                    })
                }
                Some(cl) => cl,
                None => argmax(lv.sample(s)),
            };
            let row = &weights.data()[class * c..(class + 1) * c];
            scores.push(class_activation(feats.sample(s), c, h, w, row, grid));
            classes.push(class);
        }
        Ok(CamOutput { logits, classes, scores })
    }
}

pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `Σ_c w_c · F_c` over a `[C, h, w]` map, bilinearly resized to `grid`
/// and flattened row-major.
pub fn class_activation(feats: &[f32], c: usize, h: usize, w: usize, class_weights: &[f32], grid: (usize, usize)) -> Vec<f32> {
    let hw = h * w;
    let mut map = vec![0.0f32; hw];
    for (ch, &wc) in class_weights.iter().enumerate().take(c) {
        for (m, f) in map.iter_mut().zip(&feats[ch * hw..(ch + 1) * hw]) {
            *m += wc * f;
        }
    }
    let mut out = vec![0.0; grid.0 * grid.1];
    resize_plane(&map, w, &AxisWeights::new(h, grid.0), &AxisWeights::new(w, grid.1), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gct::PyramidSource;
    use crate::nn::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(feats: Tensor, classes: usize) -> (Graph, ParamStore, Classifier, FeaturePyramid) {
        let g = Graph::inference();
        let c = feats.shape()[1];
        let cls = Classifier::new("cls", c, classes);
        let mut store = ParamStore::new();
        cls.init(&mut Init::new(7), &mut store);
        let dummy = g.constant(Tensor::zeros(&[1, 1, 1, 1]));
        let l5 = g.constant(feats);
        let p = FeaturePyramid {
            levels: vec![dummy, dummy, dummy, dummy, l5],
            source: PyramidSource::Reference,
        };
        (g, store, cls, p)
    }

    #[test]
    fn uniform_features_give_constant_map() {
        let (g, store, cls, p) = setup(Tensor::full(&[1, 3, 4, 4], 0.7), 5);
        let out = cls.compute_cam(&g, &store, &p, &[Some(2)], (8, 8)).unwrap();
        assert_eq!(g.shape(out.logits), vec![1, 5]);
        let first = out.scores[0][0];
        assert!(out.scores[0].iter().all(|v| (v - first).abs() < 1e-6));
    }

    #[test]
    fn matches_direct_weighted_sum_at_grid_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data: Vec<f32> = (0..4 * 6 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (g, store, cls, p) = setup(Tensor::new(&[1, 4, 6, 6], data.clone()), 3);
        // A grid equal to the level size makes the resize an identity.
        let out = cls.compute_cam(&g, &store, &p, &[Some(1)], (6, 6)).unwrap();
        let w = store.get("cls.w").unwrap();
        for _ in 0..3 {
            let pos = rng.random_range(0..36);
            let want: f32 = (0..4).map(|c| w.data()[4 + c] * data[c * 36 + pos]).sum();
            assert!((out.scores[0][pos] - want).abs() < 1e-5);
        }
    }

    #[test]
    fn argmax_class_used_without_label_and_range_checked() {
        let (g, store, cls, p) = setup(Tensor::full(&[1, 2, 2, 2], 1.0), 4);
        let out = cls.compute_cam(&g, &store, &p, &[None], (4, 4)).unwrap();
        assert_eq!(out.classes[0], argmax(g.value(out.logits).data()));
        let err = cls.compute_cam(&g, &store, &p, &[Some(4)], (4, 4)).unwrap_err();
        assert!(matches!(err, Error::ClassOutOfRange { .. }));
    }
}
