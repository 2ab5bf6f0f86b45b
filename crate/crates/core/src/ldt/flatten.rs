use crate::error::{Error, Result};
use crate::gct::{FeaturePyramid, PyramidSource};
use crate::nn::{Graph, Tensor, Var};

/// Number of finest pyramid levels used for correspondence.
pub const CORRESPONDENCE_LEVELS: usize = 4;

/// A `d × R` feature matrix over the quarter-resolution grid. Columns are
/// regions in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct FlattenedFeatures {
    pub matrix: Tensor,
    pub height: usize,
    pub width: usize,
    pub origin: PyramidSource,
}

impl FlattenedFeatures {
    pub fn new(matrix: Tensor, height: usize, width: usize, origin: PyramidSource) -> Result<Self> {
        if matrix.shape().len() != 2 || matrix.shape()[1] != height * width {
            return Err(Error::Shape(format!(
                "flattened features {:?} do not cover a {height}×{width} grid",
                matrix.shape()
            )));
        }
        Ok(Self {
            matrix,
            height,
            width,
            origin,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn regions(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn column(&self, j: usize) -> Vec<f32> {
        let r = self.regions();
        (0..self.dim()).map(|c| self.matrix.data()[c * r + j]).collect()
    }

    /// Back to a `[d, H/4, W/4]` map.
    pub fn unflatten(&self) -> Tensor {
        self.matrix.clone().reshape(&[self.dim(), self.height, self.width])
    }
}

/// Quarter-resolution grid of an `h × w` input.
pub fn region_grid(h: usize, w: usize) -> (usize, usize) {
    (h / 4, w / 4)
}

/// Resize levels 1–4 to the quarter-resolution grid, concatenate channels
/// and flatten: `[N, d, R]`.
pub fn flatten_pyramid(g: &Graph, pyramid: &FeaturePyramid, input_hw: (usize, usize)) -> Result<Var> {
    if pyramid.len() < CORRESPONDENCE_LEVELS {
        return Err(Error::Shape(format!(
            "pyramid has {} levels, correspondence needs {CORRESPONDENCE_LEVELS}",
            pyramid.len()
        )));
    }
    let (gh, gw) = region_grid(input_hw.0, input_hw.1);
    let parts: Vec<Var> = pyramid.levels[..CORRESPONDENCE_LEVELS]
        .iter()
        .map(|&l| g.resize_bilinear(l, gh, gw))
        .collect();
    let cat = g.concat(&parts);
    let s = g.shape(cat);
    Ok(g.reshape(cat, &[s[0], s[1], gh * gw]))
}

/// Split a batched `[N, d, R]` value into per-sample matrices.
pub fn split_flattened(t: &Tensor, height: usize, width: usize, origin: PyramidSource) -> Vec<FlattenedFeatures> {
    let (n, d, r) = t.dims3();
    (0..n)
        .map(|s| FlattenedFeatures {
            matrix: Tensor::new(&[d, r], t.sample(s).to_vec()),
            height,
            width,
            origin,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_count_at_full_resolution() {
        let (h, w) = region_grid(256, 256);
        assert_eq!(h * w, 4096);
    }

    #[test]
    fn flatten_concatenates_and_round_trips() {
        let g = Graph::inference();
        let mk = |c: usize, hw: usize, base: f32| {
            let n = c * hw * hw;
            g.constant(Tensor::new(&[1, c, hw, hw], (0..n).map(|i| base + i as f32).collect()))
        };
        let quarter = mk(3, 4, 100.0);
        let p = FeaturePyramid {
            levels: vec![mk(2, 16, 0.0), mk(2, 8, 0.0), quarter, mk(1, 4, 500.0)],
            source: PyramidSource::Reference,
        };
        let flat = flatten_pyramid(&g, &p, (16, 16)).unwrap();
        assert_eq!(g.shape(flat), vec![1, 8, 16]);
        let ff = split_flattened(&g.value(flat), 4, 4, PyramidSource::Reference).remove(0);
        let map = ff.unflatten();
        // The quarter-resolution level occupies channels 4..7 untouched.
        assert_eq!(&map.data()[4 * 16..7 * 16], g.value(quarter).data());
        assert_eq!(ff.unflatten().reshape(&[8, 16]), ff.matrix);
        assert!(flatten_pyramid(&g, &FeaturePyramid { levels: p.levels[..3].to_vec(), ..p }, (16, 16)).is_err());
    }
}
