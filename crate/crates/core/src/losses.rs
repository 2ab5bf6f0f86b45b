//! Training objectives: smooth-L1 on both stages, total variation,
//! classification cross-entropy and the per-pixel color histogram loss.
//!
//! Each loss has a scalar kernel generic over [`Scalar`] (used for
//! double-precision checks) and a graph op built on the `f32` instance.

use serde::{Deserialize, Serialize};

use crate::color::ColorDistribution;
use crate::error::{Error, Result};
use crate::nn::{Graph, Scalar, Tensor, Var};

/// Floor applied to predicted probabilities before the logarithm.
pub const LOG_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub stage1: f64,
    pub stage2: f64,
    pub tv: f64,
    pub cls: f64,
    pub his: f64,
    /// Smooth-L1 threshold in normalized ab units.
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            stage1: 100.0,
            stage2: 100.0,
            tv: 10.0,
            cls: 0.1,
            his: 1.0,
            delta: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("loss weight {name} must be finite and >= 0, got {v}")));
            }
        }
        if self.delta <= 0.0 {
            return Err(Error::InvalidInput(format!("smooth-L1 delta must be > 0, got {}", self.delta)));
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("stage1", self.stage1),
            ("stage2", self.stage2),
            ("tv", self.tv),
            ("cls", self.cls),
            ("his", self.his),
        ]
    }
}

/// Unweighted loss values of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub stage1: f64,
    pub stage2: f64,
    pub tv: f64,
    pub cls: f64,
    pub his: f64,
}

impl LossParts {
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("stage1", self.stage1),
            ("stage2", self.stage2),
            ("tv", self.tv),
            ("cls", self.cls),
            ("his", self.his),
        ]
    }
}

/// λ-weighted sum of the five terms. Any non-finite term is an error
/// naming that term.
pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> Result<f64> {
    for (term, value) in parts.named() {
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { term, value });
        }
    }
    Ok(weights.stage1 * parts.stage1
        + weights.stage2 * parts.stage2
        + weights.tv * parts.tv
        + weights.cls * parts.cls
        + weights.his * parts.his)
}

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} predictions vs {b} targets")));
    }
    Ok(())
}

/// Mean smooth-L1 (Huber) over elements.
pub fn smooth_l1<T: Scalar>(pred: &[T], gt: &[T], delta: T) -> Result<T> {
    same_len(pred.len(), gt.len(), "smooth_l1")?;
    let half = T::from_f64(0.5);
    let sum = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            let e = (p - g).abs();
            if e <= delta {
                half * e * e
            } else {
                delta * e - half * delta * delta
            }
        })
        .sum::<T>();
    Ok(sum / T::from_f64(pred.len() as f64))
}

pub fn smooth_l1_grad<T: Scalar>(pred: &[T], gt: &[T], delta: T) -> Vec<T> {
    let n = T::from_f64(pred.len() as f64);
    pred.iter()
        .zip(gt)
        .map(|(&p, &g)| {
            let e = p - g;
            let d = if e.abs() <= delta { e } else { delta * e.signum() };
            d / n
        })
        .collect()
}

/// Number of horizontal plus vertical neighbor pairs in `c` planes.
fn tv_pairs(c: usize, h: usize, w: usize) -> usize {
    c * (h * (w - 1) + (h - 1) * w)
}

/// Mean squared neighbor difference over `c` planes of `h × w`.
pub fn total_variation<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> Result<T> {
    if h < 2 || w < 2 || x.len() != c * h * w {
        return Err(Error::Shape(format!("total variation needs >=2x2 planes, got {c}x{h}x{w}")));
    }
    let mut sum = T::zero();
    for plane in x.chunks(h * w) {
        for y in 0..h {
            for xx in 0..w {
                let v = plane[y * w + xx];
                if xx + 1 < w {
                    let d = plane[y * w + xx + 1] - v;
                    sum = sum + d * d;
                }
                if y + 1 < h {
                    let d = plane[(y + 1) * w + xx] - v;
                    sum = sum + d * d;
                }
            }
        }
    }
    Ok(sum / T::from_f64(tv_pairs(c, h, w) as f64))
}

pub fn total_variation_grad<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let scale = T::from_f64(2.0 / tv_pairs(c, h, w) as f64);
    let mut g = vec![T::zero(); x.len()];
    for (plane, gp) in x.chunks(h * w).zip(g.chunks_mut(h * w)) {
        for y in 0..h {
            for xx in 0..w {
                let i = y * w + xx;
                if xx + 1 < w {
                    let d = (plane[i + 1] - plane[i]) * scale;
                    gp[i + 1] = gp[i + 1] + d;
                    gp[i] = gp[i] - d;
                }
                if y + 1 < h {
                    let d = (plane[i + w] - plane[i]) * scale;
                    gp[i + w] = gp[i + w] + d;
                    gp[i] = gp[i] - d;
                }
            }
        }
    }
    g
}

fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z = e.iter().copied().sum::<T>();
    e.into_iter().map(|v| v / z).collect()
}

/// Softmax cross-entropy of one logit vector against a class index.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(Error::ClassOutOfRange {
            class_id: label,
            class_count: logits.len(),
        });
    }
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&l| (l - m).exp()).sum::<T>().ln() + m;
    Ok(lse - logits[label])
}

pub fn cross_entropy_grad<T: Scalar>(logits: &[T], label: usize) -> Vec<T> {
    let mut p = softmax(logits);
    p[label] = p[label] - T::one();
    p
}

/// `−Σ Z log max(Ẑ, floor)` over `q × pixels` channel-major arrays,
/// divided by the pixel count.
pub fn histogram_loss<T: Scalar>(pred: &[T], target: &[T], pixels: usize) -> Result<T> {
    same_len(pred.len(), target.len(), "histogram_loss")?;
    let floor = T::from_f64(LOG_FLOOR);
    let sum = pred
        .iter()
        .zip(target)
        .filter(|(_, &z)| z != T::zero())
        .map(|(&p, &z)| z * p.max(floor).ln())
        .sum::<T>();
    Ok(-sum / T::from_f64(pixels as f64))
}

pub fn histogram_loss_grad<T: Scalar>(pred: &[T], target: &[T], pixels: usize) -> Vec<T> {
    let floor = T::from_f64(LOG_FLOOR);
    let n = T::from_f64(pixels as f64);
    pred.iter()
        .zip(target)
        .map(|(&p, &z)| if p > floor { -z / (p * n) } else { T::zero() })
        .collect()
}

/// Histogram loss between two [`ColorDistribution`]s of equal size.
pub fn distribution_loss(pred: &ColorDistribution, target: &ColorDistribution) -> Result<f64> {
    if (pred.height, pred.width, pred.q) != (target.height, target.width, target.q) {
        return Err(Error::Shape("histogram_loss: distribution sizes differ".into()));
    }
    let p: Vec<f64> = pred.probs().iter().map(|&v| v as f64).collect();
    let z: Vec<f64> = target.probs().iter().map(|&v| v as f64).collect();
    histogram_loss(&p, &z, pred.height * pred.width)
}

fn scalar_grad(shape: &[usize], up: &Tensor, g: Vec<f32>) -> Tensor {
    let s = up.item();
    Tensor::new(shape, g.into_iter().map(|v| v * s).collect())
}

impl Graph {
    /// Mean smooth-L1 between `pred` and a fixed target of the same shape.
    pub fn smooth_l1_loss(&self, pred: Var, target: &Tensor, delta: f32) -> Result<Var> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(Error::Shape(format!("smooth_l1: {:?} vs {:?}", vp.shape(), target.shape())));
        }
        let value = smooth_l1(vp.data(), target.data(), delta)?;
        let target = target.clone();
        Ok(self.custom(Tensor::scalar(value), &[pred], || {
            Box::new(move |up| {
                let g = smooth_l1_grad(vp.data(), target.data(), delta);
                vec![Some(scalar_grad(vp.shape(), up, g))]
            })
        }))
    }

    /// Total variation of `[N, C, H, W]`, averaged over the batch.
    pub fn tv_loss(&self, pred: Var) -> Result<Var> {
        let vp = self.value(pred);
        let (n, c, h, w) = vp.dims4();
        let value = total_variation(vp.data(), n * c, h, w)?;
        Ok(self.custom(Tensor::scalar(value), &[pred], || {
            Box::new(move |up| {
                let g = total_variation_grad(vp.data(), n * c, h, w);
                vec![Some(scalar_grad(vp.shape(), up, g))]
            })
        }))
    }

    /// Mean cross-entropy over the samples of `[N, classes]` logits that
    /// carry a label. Returns `None` when no sample is labeled.
    pub fn cross_entropy_loss(&self, logits: Var, labels: &[Option<usize>]) -> Result<Option<Var>> {
        let vl = self.value(logits);
        let (n, classes) = vl.dims2();
        same_len(labels.len(), n, "cross_entropy labels")?;
        let labeled: Vec<(usize, usize)> = labels.iter().enumerate().filter_map(|(s, l)| l.map(|l| (s, l))).collect();
        if labeled.is_empty() {
            return Ok(None);
        }
        let mut total = 0.0;
        for &(s, l) in &labeled {
            total += cross_entropy(vl.sample(s), l)?;
        }
        let count = labeled.len() as f32;
        Ok(Some(self.custom(Tensor::scalar(total / count), &[logits], || {
            Box::new(move |up| {
                let mut g = Tensor::zeros(&[n, classes]);
                for &(s, l) in &labeled {
                    let row = cross_entropy_grad(vl.sample(s), l);
                    for (d, v) in g.sample_mut(s).iter_mut().zip(row) {
                        *d = v * up.item() / count;
                    }
                }
                vec![Some(g)]
            })
        })))
    }

    /// Histogram loss of `[N, Q, h, w]` probabilities against targets of
    /// the same layout, averaged over pixels and batch.
    pub fn histogram_loss(&self, pred: Var, target: &Tensor) -> Result<Var> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(Error::Shape(format!("histogram_loss: {:?} vs {:?}", vp.shape(), target.shape())));
        }
        let (n, _, h, w) = vp.dims4();
        let pixels = n * h * w;
        let value = histogram_loss(vp.data(), target.data(), pixels)?;
        let target = target.clone();
        Ok(self.custom(Tensor::scalar(value), &[pred], || {
            Box::new(move |up| {
                let g = histogram_loss_grad(vp.data(), target.data(), pixels);
                vec![Some(scalar_grad(vp.shape(), up, g))]
            })
        }))
    }
}
