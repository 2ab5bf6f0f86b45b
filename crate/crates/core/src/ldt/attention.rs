use serde::{Deserialize, Serialize};

use super::flatten::FlattenedFeatures;
use super::selection::SparseSelection;
use crate::error::{Error, Result};
use crate::nn::{gemm, Graph, Scalar, Tensor, Var};

/// Multiply-accumulate counts of one attention call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCount {
    /// Query–key scores plus the weighted sum over values.
    pub correspondence: u64,
    /// The three `d × d` projections.
    pub projection: u64,
}

impl MacCount {
    pub fn new(d: usize, queries: usize, keys: usize) -> Self {
        let (d, q, k) = (d as u64, queries as u64, keys as u64);
        Self {
            correspondence: 2 * d * q * k,
            projection: d * d * (q + 2 * k),
        }
    }

    pub fn total(&self) -> u64 {
        self.correspondence + self.projection
    }
}

impl std::ops::AddAssign for MacCount {
    fn add_assign(&mut self, o: Self) {
        self.correspondence += o.correspondence;
        self.projection += o.projection;
    }
}

/// Row-stochastic `queries × keys` weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights<T> {
    pub queries: usize,
    pub keys: usize,
    pub rows: Vec<T>,
}

impl<T: Copy> AttentionWeights<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.rows[i * self.keys..(i + 1) * self.keys]
    }
}

/// Intermediates of one sample's forward pass.
#[derive(Clone, Debug)]
pub struct AttentionCache<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    pub alpha: AttentionWeights<T>,
}

/// Projection matrices, each `d × d` row-major.
#[derive(Clone, Copy, Debug)]
pub struct Projections<'a, T> {
    pub wq: &'a [T],
    pub wk: &'a [T],
    pub wv: &'a [T],
}

pub struct AttentionGrads<T> {
    pub coarse: Vec<T>,
    pub reference: Vec<T>,
    pub wq: Vec<T>,
    pub wk: Vec<T>,
    pub wv: Vec<T>,
}

fn softmax_rows<T: Scalar>(s: &mut [T], cols: usize) {
    for row in s.chunks_mut(cols) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z = z + *v;
        }
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
}

/// Scaled dot-product attention of one sample: `coarse` is `d × nq`,
/// `reference` is `d × nk`. Returns `d × nq` attended features.
pub fn attention_forward<T: Scalar>(
    coarse: &[T],
    reference: &[T],
    w: Projections<'_, T>,
    d: usize,
    nq: usize,
    nk: usize,
) -> (Vec<T>, AttentionCache<T>) {
    let (one, zero) = (T::one(), T::zero());
    let mut q = vec![zero; d * nq];
    let mut k = vec![zero; d * nk];
    let mut v = vec![zero; d * nk];
    gemm(false, false, d, nq, d, one, w.wq, coarse, zero, &mut q);
    gemm(false, false, d, nk, d, one, w.wk, reference, zero, &mut k);
    gemm(false, false, d, nk, d, one, w.wv, reference, zero, &mut v);
    let scale = one / T::from_f64(d as f64).sqrt();
    let mut alpha = vec![zero; nq * nk];
    gemm(true, false, nq, nk, d, scale, &q, &k, zero, &mut alpha);
    softmax_rows(&mut alpha, nk);
    let mut out = vec![zero; d * nq];
    gemm(false, true, d, nq, nk, one, &v, &alpha, zero, &mut out);
    let alpha = AttentionWeights {
        queries: nq,
        keys: nk,
        rows: alpha,
    };
    (out, AttentionCache { q, k, v, alpha })
}

pub fn attention_backward<T: Scalar>(
    grad: &[T],
    coarse: &[T],
    reference: &[T],
    w: Projections<'_, T>,
    cache: &AttentionCache<T>,
    d: usize,
) -> AttentionGrads<T> {
    let (one, zero) = (T::one(), T::zero());
    let (nq, nk) = (cache.alpha.queries, cache.alpha.keys);
    let a = &cache.alpha.rows;
    let mut dv = vec![zero; d * nk];
    gemm(false, false, d, nk, nq, one, grad, a, zero, &mut dv);
    let mut ds = vec![zero; nq * nk];
    gemm(true, false, nq, nk, d, one, grad, &cache.v, zero, &mut ds);
    for (ds_row, a_row) in ds.chunks_mut(nk).zip(a.chunks(nk)) {
        let dot = ds_row.iter().zip(a_row).map(|(&x, &y)| x * y).sum::<T>();
        for (x, &y) in ds_row.iter_mut().zip(a_row) {
            *x = y * (*x - dot);
        }
    }
    let scale = one / T::from_f64(d as f64).sqrt();
    let mut dq = vec![zero; d * nq];
    gemm(false, true, d, nq, nk, scale, &cache.k, &ds, zero, &mut dq);
    let mut dk = vec![zero; d * nk];
    gemm(false, false, d, nk, nq, scale, &cache.q, &ds, zero, &mut dk);

    let mut g_coarse = vec![zero; d * nq];
    gemm(true, false, d, nq, d, one, w.wq, &dq, zero, &mut g_coarse);
    let mut g_ref = vec![zero; d * nk];
    gemm(true, false, d, nk, d, one, w.wk, &dk, zero, &mut g_ref);
    gemm(true, false, d, nk, d, one, w.wv, &dv, one, &mut g_ref);
    let mut wq = vec![zero; d * d];
    gemm(false, true, d, d, nq, one, &dq, coarse, zero, &mut wq);
    let mut wk = vec![zero; d * d];
    gemm(false, true, d, d, nk, one, &dk, reference, zero, &mut wk);
    let mut wv = vec![zero; d * d];
    gemm(false, true, d, d, nk, one, &dv, reference, zero, &mut wv);
    AttentionGrads {
        coarse: g_coarse,
        reference: g_ref,
        wq,
        wk,
        wv,
    }
}

impl Graph {
    /// Batched attention: `coarse: [N, d, R]`, `reference: [N, d, K]`,
    /// projections `[d, d]`. Returns `[N, d, R]`.
    pub fn attend(&self, coarse: Var, reference: Var, wq: Var, wk: Var, wv: Var) -> Var {
        let (vc, vr) = (self.value(coarse), self.value(reference));
        let (vq, vk, vv) = (self.value(wq), self.value(wk), self.value(wv));
        let (n, d, nq) = vc.dims3();
        let (_, dr, nk) = vr.dims3();
        assert_eq!(d, dr, "attend: feature width mismatch");
        let mut out = Vec::with_capacity(n * d * nq);
        let mut caches = Vec::with_capacity(n);
        let w = Projections {
            wq: vq.data(),
            wk: vk.data(),
            wv: vv.data(),
        };
        for s in 0..n {
            let (o, cache) = attention_forward(vc.sample(s), vr.sample(s), w, d, nq, nk);
            out.extend(o);
            caches.push(cache);
        }
        self.custom(Tensor::new(&[n, d, nq], out), &[coarse, reference, wq, wk, wv], || {
            Box::new(move |g| {
                let w = Projections {
                    wq: vq.data(),
                    wk: vk.data(),
                    wv: vv.data(),
                };
                let mut gc = Vec::with_capacity(n * d * nq);
                let mut gr = Vec::with_capacity(n * d * nk);
                let (mut gq, mut gk, mut gv) = (vec![0.0; d * d], vec![0.0; d * d], vec![0.0; d * d]);
                for (s, cache) in caches.iter().enumerate() {
                    let gs = attention_backward(g.sample(s), vc.sample(s), vr.sample(s), w, cache, d);
                    gc.extend(gs.coarse);
                    gr.extend(gs.reference);
                    for (acc, x) in [(&mut gq, gs.wq), (&mut gk, gs.wk), (&mut gv, gs.wv)] {
                        acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
                    }
                }
                vec![
                    Some(Tensor::new(&[n, d, nq], gc)),
                    Some(Tensor::new(&[n, d, nk], gr)),
                    Some(Tensor::new(&[d, d], gq)),
                    Some(Tensor::new(&[d, d], gk)),
                    Some(Tensor::new(&[d, d], gv)),
                ]
            })
        })
    }
}

/// Owned projection weights for attention outside a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionProjections {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
}

impl AttentionProjections {
    pub fn dim(&self) -> usize {
        self.wq.shape()[0]
    }

    fn as_slices(&self) -> Projections<'_, f32> {
        Projections {
            wq: self.wq.data(),
            wk: self.wk.data(),
            wv: self.wv.data(),
        }
    }
}

/// Columns of `m: d × R` at `indices`.
pub fn gather(m: &[f32], d: usize, regions: usize, indices: &[usize]) -> Vec<f32> {
    let mut out = Vec::with_capacity(d * indices.len());
    for c in 0..d {
        let row = &m[c * regions..(c + 1) * regions];
        out.extend(indices.iter().map(|&i| row[i]));
    }
    out
}

/// Result of attending one coarse map to one reference map.
#[derive(Clone, Debug)]
pub struct Attended {
    pub features: FlattenedFeatures,
    pub weights: AttentionWeights<f32>,
    /// Reference region id of each weight column.
    pub key_indices: Vec<usize>,
    pub macs: MacCount,
}

/// Dense attention over every reference region, or sparse attention over
/// `selection` only.
pub fn attend(
    coarse: &FlattenedFeatures,
    reference: &FlattenedFeatures,
    selection: Option<&SparseSelection>,
    proj: &AttentionProjections,
) -> Result<Attended> {
    let d = coarse.dim();
    if reference.dim() != d || proj.dim() != d {
        return Err(Error::Shape(format!(
            "attend: coarse d={d}, reference d={}, projections d={}",
            reference.dim(),
            proj.dim()
        )));
    }
    let regions = reference.regions();
    let key_indices = match selection {
        Some(sel) => {
            let idx = sel.indices();
            if let Some(&bad) = idx.iter().find(|&&i| i >= regions) {
                return Err(Error::Shape(format!("selection index {bad} outside {regions} regions")));
            }
            idx
        }
        None => (0..regions).collect(),
    };
    let keys = match selection {
        Some(_) => gather(reference.matrix.data(), d, regions, &key_indices),
        None => reference.matrix.data().to_vec(),
    };
    let nq = coarse.regions();
    let (out, cache) = attention_forward(coarse.matrix.data(), &keys, proj.as_slices(), d, nq, key_indices.len());
    Ok(Attended {
        features: FlattenedFeatures::new(Tensor::new(&[d, nq], out), coarse.height, coarse.width, coarse.origin)?,
        weights: cache.alpha,
        macs: MacCount::new(d, nq, key_indices.len()),
        key_indices,
    })
}
