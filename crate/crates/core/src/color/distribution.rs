use super::gamut::AbGamut;
use super::lab::AbPlanes;
use crate::error::{Error, Result};

/// Neighbours receiving weight in the soft encoding.
pub const SOFT_NEIGHBORS: usize = 5;
/// Gaussian kernel width of the soft encoding, in Lab units.
pub const SOFT_SIGMA: f32 = 5.0;

/// Per-pixel categorical distribution over the gamut bins, stored
/// pixel-major (`H × W × Q`).
#[derive(Clone, Debug, PartialEq)]
pub struct ColorDistribution {
    pub height: usize,
    pub width: usize,
    pub q: usize,
    probs: Vec<f32>,
}

impl ColorDistribution {
    /// Validates non-negativity and per-pixel normalization (±1e-5).
    pub fn new(height: usize, width: usize, q: usize, probs: Vec<f32>) -> Result<Self> {
        if probs.len() != height * width * q {
            return Err(Error::Shape(format!(
                "distribution of {} values for {height}x{width}x{q}",
                probs.len()
            )));
        }
        for (i, px) in probs.chunks(q).enumerate() {
            let sum: f32 = px.iter().sum();
            if px.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > 1e-5 {
                return Err(Error::InvalidInput(format!("pixel {i} is not a distribution (sum {sum})")));
            }
        }
        Ok(Self { height, width, q, probs })
    }

    /// From a channel-major `[Q, H, W]` buffer such as a network head.
    pub fn from_chw(height: usize, width: usize, q: usize, chw: &[f32]) -> Result<Self> {
        let hw = height * width;
        let mut probs = vec![0.0; hw * q];
        for c in 0..q {
            for p in 0..hw {
                probs[p * q + c] = chw[c * hw + p];
            }
        }
        Self::new(height, width, q, probs)
    }

    pub fn to_chw(&self) -> Vec<f32> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; hw * self.q];
        for p in 0..hw {
            for c in 0..self.q {
                out[c * hw + p] = self.probs[p * self.q + c];
            }
        }
        out
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.probs[i * self.q..(i + 1) * self.q]
    }
}

/// Soft-encode chroma over the [`SOFT_NEIGHBORS`] nearest bins with a
/// Gaussian kernel of width [`SOFT_SIGMA`]. Raw values are encoded against
/// their nearest centers without clamping to the gamut first.
pub fn encode_ab(ab: &AbPlanes, gamut: &AbGamut) -> ColorDistribution {
    let q = gamut.len();
    let n = ab.height * ab.width;
    let mut probs = vec![0.0f32; n * q];
    let denom = 2.0 * SOFT_SIGMA * SOFT_SIGMA;
    for i in 0..n {
        let near = gamut.nearest_n(ab.a[i], ab.b[i], SOFT_NEIGHBORS);
        // Shifted by the nearest distance so far-out-of-gamut input cannot underflow.
        let d0 = near[0].1;
        let weights: Vec<f32> = near.iter().map(|&(_, d2)| (-(d2 - d0) / denom).exp()).collect();
        let total: f32 = weights.iter().sum();
        let px = &mut probs[i * q..(i + 1) * q];
        for (&(bin, _), w) in near.iter().zip(&weights) {
            px[bin] = w / total;
        }
    }
    ColorDistribution {
        height: ab.height,
        width: ab.width,
        q,
        probs,
    }
}

/// Annealed-mean decode: each pixel's distribution is sharpened to
/// `p^(1/T)` and renormalized, then the bin centers are averaged under it.
/// `temperature == 0` takes the argmax center (lowest id on ties).
pub fn decode_distribution(dist: &ColorDistribution, gamut: &AbGamut, temperature: f32) -> AbPlanes {
    assert_eq!(dist.q, gamut.len(), "distribution and gamut disagree on Q");
    let n = dist.height * dist.width;
    let mut out = AbPlanes::zeros(dist.height, dist.width);
    let centers = gamut.centers();
    for i in 0..n {
        let px = dist.pixel(i);
        let (a, b) = if temperature <= 0.0 {
            let mut best = 0;
            for (q, p) in px.iter().enumerate() {
                if *p > px[best] {
                    best = q;
                }
            }
            (centers[best][0], centers[best][1])
        } else {
            let logs: Vec<f64> = px.iter().map(|&p| (p.max(1e-30) as f64).ln() / temperature as f64).collect();
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs
                .iter()
                .zip(px)
                .map(|(l, &p)| if p > 0.0 { (l - m).exp() } else { 0.0 })
                .collect();
            let z: f64 = w.iter().sum();
            let mut acc = [0.0f64; 2];
            for (wi, c) in w.iter().zip(centers) {
                acc[0] += wi * c[0] as f64;
                acc[1] += wi * c[1] as f64;
            }
            ((acc[0] / z) as f32, (acc[1] / z) as f32)
        };
        out.a[i] = a;
        out.b[i] = b;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::gamut::GRID;
    use proptest::prelude::*;

    fn planes(values: &[(f32, f32)]) -> AbPlanes {
        AbPlanes {
            height: 1,
            width: values.len(),
            a: values.iter().map(|v| v.0).collect(),
            b: values.iter().map(|v| v.1).collect(),
        }
    }

    #[test]
    fn exact_center_gets_the_largest_weight() {
        let g = AbGamut::shared();
        let bin = g.bin_at(20, -30).unwrap();
        let d = encode_ab(&planes(&[(20.0, -30.0)]), g);
        let px = d.pixel(0);
        let argmax = (0..px.len()).max_by(|&x, &y| px[x].total_cmp(&px[y])).unwrap();
        assert_eq!(argmax, bin);
        assert_eq!(px.iter().filter(|p| **p > 0.0).count(), SOFT_NEIGHBORS);
    }

    #[test]
    fn nearest_bin_matches_exhaustive_search() {
        let g = AbGamut::shared();
        let (a, b) = (30.0f32, -20.0f32);
        let mut best = (f32::INFINITY, usize::MAX);
        for (i, c) in g.centers().iter().enumerate() {
            let d = ((c[0] - a).powi(2) + (c[1] - b).powi(2)).sqrt();
            if d < best.0 {
                best = (d, i);
            }
        }
        assert_eq!(g.nearest(a, b), best.1);
        let d = encode_ab(&planes(&[(a, b)]), g);
        assert!(d.pixel(0)[best.1] > 0.0);
    }

    #[test]
    fn one_hot_decodes_to_its_center() {
        let g = AbGamut::shared();
        let bin = 100;
        let mut probs = vec![0.0; g.len()];
        probs[bin] = 1.0;
        let d = ColorDistribution::new(1, 1, g.len(), probs).unwrap();
        for t in [0.0, 0.38, 1.0] {
            let ab = decode_distribution(&d, g, t);
            assert_eq!([ab.a[0], ab.b[0]], g.centers()[bin]);
        }
    }

    #[test]
    fn uniform_decodes_to_mean_center() {
        let g = AbGamut::shared();
        let q = g.len();
        let d = ColorDistribution::new(1, 1, q, vec![1.0 / q as f32; q]).unwrap();
        let ab = decode_distribution(&d, g, 1.0);
        let mean_a: f64 = g.centers().iter().map(|c| c[0] as f64).sum::<f64>() / q as f64;
        let mean_b: f64 = g.centers().iter().map(|c| c[1] as f64).sum::<f64>() / q as f64;
        assert!((ab.a[0] as f64 - mean_a).abs() < 1e-3);
        assert!((ab.b[0] as f64 - mean_b).abs() < 1e-3);
    }

    #[test]
    fn annealed_two_bin_mixture_matches_hand_formula() {
        let g = AbGamut::shared();
        let (i, j) = (g.bin_at(0, 0).unwrap(), g.bin_at(40, -20).unwrap());
        let (pi, pj) = (0.7f64, 0.3f64);
        let mut probs = vec![0.0; g.len()];
        probs[i] = pi as f32;
        probs[j] = pj as f32;
        let d = ColorDistribution::new(1, 1, g.len(), probs).unwrap();
        let ab = decode_distribution(&d, g, 0.38);
        let t = 0.38f64;
        let (wi, wj) = (pi.powf(1.0 / t), pj.powf(1.0 / t));
        let want_a = (wi * 0.0 + wj * 40.0) / (wi + wj);
        let want_b = (wi * 0.0 + wj * -20.0) / (wi + wj);
        assert!((ab.a[0] as f64 - want_a).abs() < 1e-3, "{} vs {want_a}", ab.a[0]);
        assert!((ab.b[0] as f64 - want_b).abs() < 1e-3);
        let arg = decode_distribution(&d, g, 0.0);
        assert_eq!([arg.a[0], arg.b[0]], [0.0, 0.0]);
    }

    #[test]
    fn rejects_unnormalized_distributions() {
        assert!(ColorDistribution::new(1, 1, 3, vec![0.5, 0.2, 0.2]).is_err());
        assert!(ColorDistribution::new(1, 1, 3, vec![1.5, -0.5, 0.0]).is_err());
        assert!(ColorDistribution::new(1, 2, 3, vec![1.0, 0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn soft_encoding_sums_to_one_and_argmax_is_near(a in -110.0f32..110.0, b in -110.0f32..110.0) {
            let g = AbGamut::shared();
            let d = encode_ab(&planes(&[(a, b)]), g);
            let sum: f32 = d.pixel(0).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            // Argmax decode stays within one grid step of in-gamut input.
            let near = g.nearest(a, b);
            let c = g.centers()[near];
            let dist = ((c[0] - a).powi(2) + (c[1] - b).powi(2)).sqrt();
            if dist <= GRID as f32 {
                let back = decode_distribution(&d, g, 0.0);
                let e = ((back.a[0] - a).powi(2) + (back.b[0] - b).powi(2)).sqrt();
                prop_assert!(e <= GRID as f32, "({a},{b}) decoded {e} away");
            }
        }
    }
}
