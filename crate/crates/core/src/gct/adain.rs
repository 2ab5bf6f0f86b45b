use crate::error::{Error, Result};
use crate::nn::{Graph, Scalar, Tensor, Var};

/// Variance stabilizer inside the square root.
pub const ADAIN_EPS: f64 = 1e-5;

/// Per-channel spatial `(mean, σ)` of a `[C, HW]` block, with
/// `σ = sqrt(var + ε)` and the population variance.
pub fn channel_moments<T: Scalar>(x: &[T], channels: usize) -> Vec<(T, T)> {
    let hw = x.len() / channels;
    let n = T::from_f64(hw as f64);
    let eps = T::from_f64(ADAIN_EPS);
    x.chunks(hw)
        .map(|ch| {
            let mean = ch.iter().copied().sum::<T>() / n;
            let var = ch.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            (mean, (var + eps).sqrt())
        })
        .collect()
}

/// Normalized activations and inverse σ kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AdainCache<T> {
    xhat: Vec<T>,
    inv_sigma: Vec<T>,
}

/// `y_s · (x − μ) / σ + y_b` per channel of one `[C, HW]` sample.
pub fn adain_forward<T: Scalar>(x: &[T], channels: usize, ys: &[T], yb: &[T]) -> (Vec<T>, AdainCache<T>) {
    assert_eq!(ys.len(), channels);
    assert_eq!(yb.len(), channels);
    let hw = x.len() / channels;
    let moments = channel_moments(x, channels);
    let mut xhat = Vec::with_capacity(x.len());
    let mut out = Vec::with_capacity(x.len());
    let mut inv_sigma = Vec::with_capacity(channels);
    for (c, &(mean, sigma)) in moments.iter().enumerate() {
        let inv = T::one() / sigma;
        inv_sigma.push(inv);
        for &v in &x[c * hw..(c + 1) * hw] {
            let h = (v - mean) * inv;
            xhat.push(h);
            out.push(ys[c] * h + yb[c]);
        }
    }
    (out, AdainCache { xhat, inv_sigma })
}

/// Gradients `(dx, dy_s, dy_b)` for one sample.
pub fn adain_backward<T: Scalar>(grad: &[T], ys: &[T], cache: &AdainCache<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
    let channels = ys.len();
    let hw = grad.len() / channels;
    let n = T::from_f64(hw as f64);
    let mut dx = Vec::with_capacity(grad.len());
    let mut dys = Vec::with_capacity(channels);
    let mut dyb = Vec::with_capacity(channels);
    for c in 0..channels {
        let g = &grad[c * hw..(c + 1) * hw];
        let xh = &cache.xhat[c * hw..(c + 1) * hw];
        let sum_g = g.iter().copied().sum::<T>();
        let sum_gx = g.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
        dys.push(sum_gx);
        dyb.push(sum_g);
        let (mean_g, mean_gx) = (sum_g / n, sum_gx / n);
        let scale = ys[c] * cache.inv_sigma[c];
        for (&gi, &hi) in g.iter().zip(xh) {
            dx.push(scale * (gi - mean_g - hi * mean_gx));
        }
    }
    (dx, dys, dyb)
}

/// AdaIN over a `[C, H, W]` or `[N, C, H, W]` tensor with one `(y_s, y_b)`
/// pair per channel shared across the batch.
pub fn adain(x: &Tensor, ys: &[f32], yb: &[f32]) -> Result<Tensor> {
    let c = match x.shape().len() {
        3 => x.shape()[0],
        4 => x.shape()[1],
        _ => return Err(Error::Shape(format!("adain expects 3-D or 4-D input, got {:?}", x.shape()))),
    };
    if ys.len() != c || yb.len() != c {
        return Err(Error::Shape(format!(
            "adain: {c} channels but {} scales and {} biases",
            ys.len(),
            yb.len()
        )));
    }
    let per_sample = c * x.shape()[x.shape().len() - 2..].iter().product::<usize>();
    let mut out = Vec::with_capacity(x.numel());
    for sample in x.data().chunks(per_sample) {
        out.extend(adain_forward(sample, c, ys, yb).0);
    }
    Ok(Tensor::new(x.shape(), out))
}

impl Graph {
    /// AdaIN with per-sample parameters: `x: [N, C, H, W]`, `ys, yb: [N, C]`.
    pub fn adain(&self, x: Var, ys: Var, yb: Var) -> Var {
        let (vx, vs, vb) = (self.value(x), self.value(ys), self.value(yb));
        let (n, c, h, w) = vx.dims4();
        assert_eq!(vs.shape(), [n, c], "adain: scale shape");
        assert_eq!(vb.shape(), [n, c], "adain: bias shape");
        let mut out = Vec::with_capacity(vx.numel());
        let mut caches = Vec::with_capacity(n);
        for s in 0..n {
            let (o, cache) = adain_forward(vx.sample(s), c, vs.sample(s), vb.sample(s));
            out.extend(o);
            caches.push(cache);
        }
        self.custom(Tensor::new(&[n, c, h, w], out), &[x, ys, yb], || {
            Box::new(move |g| {
                let mut dx = Vec::with_capacity(n * c * h * w);
                let mut ds = Vec::with_capacity(n * c);
                let mut db = Vec::with_capacity(n * c);
                for (s, cache) in caches.iter().enumerate() {
                    let (a, b, d) = adain_backward(g.sample(s), vs.sample(s), cache);
                    dx.extend(a);
                    ds.extend(b);
                    db.extend(d);
                }
                vec![
                    Some(Tensor::new(&[n, c, h, w], dx)),
                    Some(Tensor::new(&[n, c], ds)),
                    Some(Tensor::new(&[n, c], db)),
                ]
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    /// Mean and population standard deviation, computed directly.
    fn stats(v: &[f64]) -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
        (m, var.sqrt())
    }

    #[test]
    fn output_moments_follow_style_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (c, hw) = (rng.random_range(1..6), rng.random_range(4..80));
            let x = random(&mut rng, c * hw, -4.0, 7.0);
            let ys = random(&mut rng, c, -3.0, 3.0);
            let yb = random(&mut rng, c, -2.0, 2.0);
            let (out, _) = adain_forward(&x, c, &ys, &yb);
            for ch in 0..c {
                let (m, s) = stats(&out[ch * hw..(ch + 1) * hw]);
                assert!((m - yb[ch]).abs() < 1e-5, "mean {m} vs {}", yb[ch]);
                assert!((s - ys[ch].abs()).abs() < 1e-3, "std {s} vs {}", ys[ch]);
            }
        }
    }

    #[test]
    fn unit_style_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, 3 * 64, 10.0, 30.0);
        let (out, _) = adain_forward(&x, 3, &[1.0; 3], &[0.0; 3]);
        for ch in out.chunks(64) {
            let (m, s) = stats(ch);
            assert!(m.abs() < 1e-5);
            assert!((s * s - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn inverse_parameters_reproduce_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 4 * 25, -1.0, 3.0);
        let m = channel_moments(&x, 4);
        let ys: Vec<f64> = m.iter().map(|p| p.1).collect();
        let yb: Vec<f64> = m.iter().map(|p| p.0).collect();
        let (out, _) = adain_forward(&x, 4, &ys, &yb);
        for (a, b) in out.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-3 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn constant_channel_stays_finite() {
        let (out, _) = adain_forward(&[2.0f32; 16], 1, &[3.0], &[0.5]);
        assert!(out.iter().all(|v| (*v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (c, hw) = (3, 16);
        let x = random(&mut rng, c * hw, -2.0, 2.0);
        let ys = random(&mut rng, c, 0.5, 2.0);
        let yb = random(&mut rng, c, -1.0, 1.0);
        let probe = random(&mut rng, c * hw, -1.0, 1.0);
        let loss = |x: &[f64], ys: &[f64], yb: &[f64]| -> f64 {
            adain_forward(x, c, ys, yb).0.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = adain_forward(&x, c, &ys, &yb);
        let (dx, dys, dyb) = adain_backward(&probe, &ys, &cache);
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        for i in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += h;
            m[i] -= h;
            let num = (loss(&p, &ys, &yb) - loss(&m, &ys, &yb)) / (2.0 * h);
            assert!(rel(dx[i], num) < 1e-4, "dx[{i}] {} vs {num}", dx[i]);
        }
        for i in 0..c {
            let (mut p, mut m) = (ys.clone(), ys.clone());
            p[i] += h;
            m[i] -= h;
            let num = (loss(&x, &p, &yb) - loss(&x, &m, &yb)) / (2.0 * h);
            assert!(rel(dys[i], num) < 1e-4);
            let (mut p, mut m) = (yb.clone(), yb.clone());
            p[i] += h;
            m[i] -= h;
            let num = (loss(&x, &ys, &p) - loss(&x, &ys, &m)) / (2.0 * h);
            assert!(rel(dyb[i], num) < 1e-4);
        }
    }

    #[test]
    fn graph_op_matches_tensor_helper() {
        let x = Tensor::new(&[1, 2, 2, 2], vec![1.0, 2.0, 3.0, 5.0, -1.0, 0.0, 4.0, 4.0]);
        let g = Graph::inference();
        let (xs, ss, bs) = (
            g.constant(x.clone()),
            g.constant(Tensor::new(&[1, 2], vec![2.0, 0.5])),
            g.constant(Tensor::new(&[1, 2], vec![0.1, -0.3])),
        );
        let y = g.value(g.adain(xs, ss, bs));
        assert_eq!(*y, adain(&x, &[2.0, 0.5], &[0.1, -0.3]).unwrap());
        assert!(adain(&x, &[1.0], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn applying_twice_equals_once(
            x in prop::collection::vec(-50.0f64..50.0, 24),
            ys in prop::collection::vec(0.2f64..4.0, 2),
            yb in prop::collection::vec(-3.0f64..3.0, 2),
        ) {
            let once = adain_forward(&x, 2, &ys, &yb).0;
            let twice = adain_forward(&once, 2, &ys, &yb).0;
            let (m1, m2) = (channel_moments(&once, 2), channel_moments(&twice, 2));
            for (a, b) in m1.iter().zip(&m2) {
                prop_assert!((a.0 - b.0).abs() < 1e-3);
                prop_assert!((a.1 - b.1).abs() < 1e-3);
            }
        }
    }
}
