//! Differentiable primitives shared by every network in the crate.

use std::sync::Arc;

use super::gemm::gemm;
use super::graph::{Graph, Var};
use super::tensor::Tensor;

impl Graph {
    pub fn add(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add: shape mismatch");
        let out: Vec<f32> = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        self.custom(Tensor::new(va.shape(), out), &[a, b], || {
            Box::new(|g| vec![Some(g.clone()), Some(g.clone())])
        })
    }

    pub fn scale(&self, a: Var, s: f32) -> Var {
        let va = self.value(a);
        let out: Vec<f32> = va.data().iter().map(|x| x * s).collect();
        self.custom(Tensor::new(va.shape(), out), &[a], || {
            Box::new(move |g| {
                let d = g.data().iter().map(|x| x * s).collect();
                vec![Some(Tensor::new(g.shape(), d))]
            })
        })
    }

    pub fn relu(&self, a: Var) -> Var {
        let va = self.value(a);
        let out: Vec<f32> = va.data().iter().map(|&x| x.max(0.0)).collect();
        self.custom(Tensor::new(va.shape(), out), &[a], || {
            Box::new(move |g| {
                let d = g
                    .data()
                    .iter()
                    .zip(va.data())
                    .map(|(&gi, &x)| if x > 0.0 { gi } else { 0.0 })
                    .collect();
                vec![Some(Tensor::new(g.shape(), d))]
            })
        })
    }

    pub fn tanh(&self, a: Var) -> Var {
        let va = self.value(a);
        let out = Tensor::new(va.shape(), va.data().iter().map(|x| x.tanh()).collect());
        let y = Arc::new(out.clone());
        self.custom(out, &[a], || {
            Box::new(move |g| {
                let d = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gi, yi)| gi * (1.0 - yi * yi))
                    .collect();
                vec![Some(Tensor::new(g.shape(), d))]
            })
        })
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Var {
        let va = self.value(a);
        let in_shape = va.shape().to_vec();
        let out = (*va).clone().reshape(shape);
        self.custom(out, &[a], || {
            Box::new(move |g| vec![Some(g.clone().reshape(&in_shape))])
        })
    }

    /// Concatenate along axis 1; axes after 1 must agree.
    pub fn concat(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| self.value(*p)).collect();
        let n = values[0].shape()[0];
        let tail: Vec<usize> = values[0].shape()[2..].to_vec();
        let inner: usize = tail.iter().product();
        let widths: Vec<usize> = values
            .iter()
            .map(|v| {
                assert_eq!(v.shape()[0], n, "concat: batch mismatch");
                assert_eq!(&v.shape()[2..], &tail[..], "concat: trailing shape mismatch");
                v.shape()[1]
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total * inner);
        for s in 0..n {
            for v in &values {
                out.extend_from_slice(v.sample(s));
            }
        }
        let mut shape = vec![n, total];
        shape.extend_from_slice(&tail);
        self.custom(Tensor::new(&shape, out), parts, || {
            Box::new(move |g| {
                let mut grads: Vec<Vec<f32>> =
                    widths.iter().map(|w| Vec::with_capacity(n * w * inner)).collect();
                for s in 0..n {
                    let gs = g.sample(s);
                    let mut off = 0;
                    for (gi, w) in grads.iter_mut().zip(&widths) {
                        gi.extend_from_slice(&gs[off..off + w * inner]);
                        off += w * inner;
                    }
                }
                grads
                    .into_iter()
                    .zip(&widths)
                    .map(|(d, &w)| {
                        let mut shape = vec![n, w];
                        shape.extend_from_slice(&tail);
                        Some(Tensor::new(&shape, d))
                    })
                    .collect()
            })
        })
    }

    /// Columns `start..start+len` of a `[N, F]` matrix.
    pub fn narrow(&self, a: Var, start: usize, len: usize) -> Var {
        let va = self.value(a);
        let (n, f) = va.dims2();
        assert!(start + len <= f, "narrow out of range");
        let mut out = Vec::with_capacity(n * len);
        for s in 0..n {
            out.extend_from_slice(&va.sample(s)[start..start + len]);
        }
        self.custom(Tensor::new(&[n, len], out), &[a], || {
            Box::new(move |g| {
                let mut d = Tensor::zeros(&[n, f]);
                for s in 0..n {
                    d.sample_mut(s)[start..start + len].copy_from_slice(g.sample(s));
                }
                vec![Some(d)]
            })
        })
    }

    /// `[N, C, H, W] -> [N, C]` spatial mean.
    pub fn global_avg_pool(&self, a: Var) -> Var {
        let va = self.value(a);
        let (n, c, h, w) = va.dims4();
        let hw = h * w;
        let out: Vec<f32> = va
            .data()
            .chunks(hw)
            .map(|ch| ch.iter().sum::<f32>() / hw as f32)
            .collect();
        self.custom(Tensor::new(&[n, c], out), &[a], || {
            Box::new(move |g| {
                let mut d = Vec::with_capacity(n * c * hw);
                for &gi in g.data() {
                    d.extend(std::iter::repeat_n(gi / hw as f32, hw));
                }
                vec![Some(Tensor::new(&[n, c, h, w], d))]
            })
        })
    }

    /// `x[N, in] · wᵀ + b` with `w: [out, in]`.
    pub fn linear(&self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (vx, vw) = (self.value(x), self.value(w));
        let (n, fin) = vx.dims2();
        let (fout, fin_w) = vw.dims2();
        assert_eq!(fin, fin_w, "linear: input width mismatch");
        let mut out = vec![0.0; n * fout];
        if let Some(b) = b {
            let vb = self.value(b);
            for row in out.chunks_mut(fout) {
                row.copy_from_slice(vb.data());
            }
        }
        gemm(false, true, n, fout, fin, 1.0, vx.data(), vw.data(), 1.0, &mut out);
        let mut parents = vec![x, w];
        parents.extend(b);
        let has_bias = b.is_some();
        self.custom(Tensor::new(&[n, fout], out), &parents, || {
            Box::new(move |g| {
                let mut dx = vec![0.0; n * fin];
                gemm(false, false, n, fin, fout, 1.0, g.data(), vw.data(), 0.0, &mut dx);
                let mut dw = vec![0.0; fout * fin];
                gemm(true, false, fout, fin, n, 1.0, g.data(), vx.data(), 0.0, &mut dw);
                let mut grads = vec![
                    Some(Tensor::new(&[n, fin], dx)),
                    Some(Tensor::new(&[fout, fin], dw)),
                ];
                if has_bias {
                    let mut db = vec![0.0; fout];
                    for row in g.data().chunks(fout) {
                        for (d, r) in db.iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                    grads.push(Some(Tensor::new(&[fout], db)));
                }
                grads
            })
        })
    }

    /// Per-sample channel mixing `w · x[s]` for `x: [N, d, R]`, `w: [o, d]`.
    pub fn channel_mix(&self, x: Var, w: Var) -> Var {
        let (vx, vw) = (self.value(x), self.value(w));
        let (n, d, r) = vx.dims3();
        let (o, d_w) = vw.dims2();
        assert_eq!(d, d_w, "channel_mix: width mismatch");
        let mut out = Tensor::zeros(&[n, o, r]);
        for s in 0..n {
            gemm(false, false, o, r, d, 1.0, vw.data(), vx.sample(s), 0.0, out.sample_mut(s));
        }
        self.custom(out, &[x, w], || {
            Box::new(move |g| {
                let mut dx = Tensor::zeros(&[n, d, r]);
                let mut dw = vec![0.0; o * d];
                for s in 0..n {
                    gemm(true, false, d, r, o, 1.0, vw.data(), g.sample(s), 0.0, dx.sample_mut(s));
                    gemm(false, true, o, d, r, 1.0, g.sample(s), vx.sample(s), 1.0, &mut dw);
                }
                vec![Some(dx), Some(Tensor::new(&[o, d], dw))]
            })
        })
    }

    /// Select columns of `x: [N, d, R]` per sample; every sample must select
    /// the same number of columns.
    pub fn gather_columns(&self, x: Var, indices: &[Vec<usize>]) -> Var {
        let vx = self.value(x);
        let (n, d, r) = vx.dims3();
        assert_eq!(indices.len(), n, "gather_columns: one index list per sample");
        let k = indices[0].len();
        let mut out = Tensor::zeros(&[n, d, k]);
        for (s, idx) in indices.iter().enumerate() {
            assert_eq!(idx.len(), k, "gather_columns: ragged selection");
            let src = vx.sample(s);
            let dst = out.sample_mut(s);
            for c in 0..d {
                let row = &src[c * r..(c + 1) * r];
                for (j, &i) in idx.iter().enumerate() {
                    dst[c * k + j] = row[i];
                }
            }
        }
        let indices = indices.to_vec();
        self.custom(out, &[x], || {
            Box::new(move |g| {
                let mut dx = Tensor::zeros(&[n, d, r]);
                for (s, idx) in indices.iter().enumerate() {
                    let gs = g.sample(s);
                    let dst = dx.sample_mut(s);
                    for c in 0..d {
                        for (j, &i) in idx.iter().enumerate() {
                            dst[c * r + i] += gs[c * k + j];
                        }
                    }
                }
                vec![Some(dx)]
            })
        })
    }

    /// Softmax over axis 1 of `[N, Q, H, W]`.
    pub fn softmax_channels(&self, a: Var) -> Var {
        let va = self.value(a);
        let (n, q, h, w) = va.dims4();
        let hw = h * w;
        let mut out = Tensor::zeros(&[n, q, h, w]);
        for s in 0..n {
            let src = va.sample(s);
            let dst = out.sample_mut(s);
            for p in 0..hw {
                let mut m = f32::NEG_INFINITY;
                for c in 0..q {
                    m = m.max(src[c * hw + p]);
                }
                let mut z = 0.0;
                for c in 0..q {
                    let e = (src[c * hw + p] - m).exp();
                    dst[c * hw + p] = e;
                    z += e;
                }
                for c in 0..q {
                    dst[c * hw + p] /= z;
                }
            }
        }
        let y = Arc::new(out.clone());
        self.custom(out, &[a], || {
            Box::new(move |g| {
                let mut dx = Tensor::zeros(&[n, q, h, w]);
                for s in 0..n {
                    let (ys, gs) = (y.sample(s), g.sample(s));
                    let dst = dx.sample_mut(s);
                    for p in 0..hw {
                        let mut dot = 0.0;
                        for c in 0..q {
                            dot += ys[c * hw + p] * gs[c * hw + p];
                        }
                        for c in 0..q {
                            let i = c * hw + p;
                            dst[i] = ys[i] * (gs[i] - dot);
                        }
                    }
                }
                vec![Some(dx)]
            })
        })
    }

    /// 2×2 max pooling with stride 2 (odd trailing rows/cols are dropped).
    pub fn max_pool2(&self, a: Var) -> Var {
        let va = self.value(a);
        let (n, c, h, w) = va.dims4();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut arg = Vec::with_capacity(n * c * oh * ow);
        for (plane_idx, plane) in va.data().chunks(h * w).enumerate() {
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = (f32::NEG_INFINITY, 0usize);
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = (2 * y + dy) * w + 2 * x + dx;
                        if plane[i] > best.0 {
                            best = (plane[i], i);
                        }
                    }
                    out.push(best.0);
                    arg.push(plane_idx * h * w + best.1);
                }
            }
        }
        self.custom(Tensor::new(&[n, c, oh, ow], out), &[a], || {
            Box::new(move |g| {
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                let d = dx.data_mut();
                for (&i, &gi) in arg.iter().zip(g.data()) {
                    d[i] += gi;
                }
                vec![Some(dx)]
            })
        })
    }

    /// Bilinear resize of `[N, C, H, W]` (half-pixel centers, edge clamped).
    pub fn resize_bilinear(&self, a: Var, oh: usize, ow: usize) -> Var {
        let va = self.value(a);
        let (n, c, h, w) = va.dims4();
        if (h, w) == (oh, ow) {
            return a;
        }
        let ty = AxisWeights::new(h, oh);
        let tx = AxisWeights::new(w, ow);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        for (src, dst) in va.data().chunks(h * w).zip(out.data_mut().chunks_mut(oh * ow)) {
            resize_plane(src, w, &ty, &tx, dst);
        }
        self.custom(out, &[a], || {
            Box::new(move |g| {
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                for (gp, dp) in g.data().chunks(oh * ow).zip(dx.data_mut().chunks_mut(h * w)) {
                    resize_plane_backward(gp, w, &ty, &tx, dp);
                }
                vec![Some(dx)]
            })
        })
    }
}

/// Per-output-index source taps of a bilinear resize along one axis.
#[derive(Clone, Debug)]
pub struct AxisWeights {
    taps: Vec<(usize, usize, f32)>,
}

impl AxisWeights {
    pub fn new(input: usize, output: usize) -> Self {
        let ratio = input as f64 / output as f64;
        let taps = (0..output)
            .map(|o| {
                let src = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(input - 1);
                let i1 = (i0 + 1).min(input - 1);
                let frac = (src - i0 as f64) as f32;
                (i0, i1, if i0 == i1 { 0.0 } else { frac })
            })
            .collect();
        Self { taps }
    }
}

pub fn resize_plane(src: &[f32], w: usize, ty: &AxisWeights, tx: &AxisWeights, dst: &mut [f32]) {
    let ow = tx.taps.len();
    for (oy, &(y0, y1, fy)) in ty.taps.iter().enumerate() {
        let (r0, r1) = (&src[y0 * w..(y0 + 1) * w], &src[y1 * w..(y1 + 1) * w]);
        for (ox, &(x0, x1, fx)) in tx.taps.iter().enumerate() {
            let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
            let bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
            dst[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
        }
    }
}

fn resize_plane_backward(g: &[f32], w: usize, ty: &AxisWeights, tx: &AxisWeights, dst: &mut [f32]) {
    let ow = tx.taps.len();
    for (oy, &(y0, y1, fy)) in ty.taps.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in tx.taps.iter().enumerate() {
            let gi = g[oy * ow + ox];
            let (gt, gb) = (gi * (1.0 - fy), gi * fy);
            dst[y0 * w + x0] += gt * (1.0 - fx);
            dst[y0 * w + x1] += gt * fx;
            dst[y1 * w + x0] += gb * (1.0 - fx);
            dst[y1 * w + x1] += gb * fx;
        }
    }
}
