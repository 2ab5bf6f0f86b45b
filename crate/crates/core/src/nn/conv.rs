use super::gemm::gemm;
use super::graph::{Graph, Var};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

impl ConvGeom {
    /// Output columns `[lo, hi)` whose input column `ox·stride + kx − pad`
    /// lies inside the image, and the input column of `lo`.
    fn valid_cols(&self, kx: usize) -> (usize, usize, usize) {
        let lo = self.pad.saturating_sub(kx).div_ceil(self.stride).min(self.ow);
        let hi = if self.w + self.pad > kx {
            ((self.w + self.pad - kx - 1) / self.stride + 1).min(self.ow)
        } else {
            0
        };
        let hi = hi.max(lo);
        (lo, hi, (lo * self.stride + kx).saturating_sub(self.pad))
    }
}

fn im2col(x: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let p = g.positions();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let (lo, hi, ix0) = g.valid_cols(kx);
                let row = ((c * g.k + ky) * g.k + kx) * p;
                let dst = &mut cols[row..row + p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src[ix0..ix0 + hi - lo]);
                    } else {
                        for (v, s) in line[lo..hi].iter_mut().zip(src[ix0..].iter().step_by(g.stride)) {
                            *v = *s;
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    let p = g.positions();
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let (lo, hi, ix0) = g.valid_cols(kx);
                let row = ((c * g.k + ky) * g.k + kx) * p;
                let src = &cols[row..row + p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let line = &src[oy * g.ow + lo..oy * g.ow + hi];
                    for (d, s) in dst[ix0..].iter_mut().step_by(g.stride).zip(line) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

impl Graph {
    /// 2-D convolution: `x: [N, Cin, H, W]`, `w: [Cout, Cin, k, k]`, `b: [Cout]`.
    pub fn conv2d(&self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (vx, vw) = (self.value(x), self.value(w));
        let (n, cin, h, wd) = vx.dims4();
        let (cout, cin_w, k, k2) = vw.dims4();
        assert_eq!(cin, cin_w, "conv2d: channel mismatch {cin} vs {cin_w}");
        assert_eq!(k, k2, "conv2d: square kernels only");
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "conv2d: input smaller than kernel");
        let geom = ConvGeom {
            cin,
            h,
            w: wd,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (wd + 2 * pad - k) / stride + 1,
        };
        let (kk, p) = (geom.patch(), geom.positions());
        let mut out = Tensor::zeros(&[n, cout, geom.oh, geom.ow]);
        let bias = b.map(|b| self.value(b));
        let mut cols = if geom.is_pointwise() { Vec::new() } else { vec![0.0; kk * p] };
        for s in 0..n {
            let dst = out.sample_mut(s);
            if let Some(bias) = &bias {
                for (co, row) in dst.chunks_mut(p).enumerate() {
                    row.fill(bias.data()[co]);
                }
            }
            let src: &[f32] = if geom.is_pointwise() {
                vx.sample(s)
            } else {
                im2col(vx.sample(s), &geom, &mut cols);
                &cols
            };
            let beta = if bias.is_some() { 1.0 } else { 0.0 };
            gemm(false, false, cout, p, kk, 1.0, vw.data(), src, beta, dst);
        }
        let mut parents = vec![x, w];
        parents.extend(b);
        let has_bias = b.is_some();
        self.custom(out, &parents, || {
            Box::new(move |g| {
                let mut dx = Tensor::zeros(&[n, cin, h, wd]);
                let mut dw = vec![0.0; cout * kk];
                let mut db = vec![0.0; cout];
                let mut cols = if geom.is_pointwise() { Vec::new() } else { vec![0.0; kk * p] };
                // Stride-1 convolutions that narrow the channel count get dx as
                // a correlation of g with the flipped kernel: the column buffer
                // then has cout·k² rows instead of cin·k².
                let transposed = (stride == 1 && pad < k && cout < cin).then(|| {
                    let mut wf = vec![0.0; cin * cout * k * k];
                    for co in 0..cout {
                        for ci in 0..cin {
                            for t in 0..k * k {
                                wf[((ci * cout + co) * k * k) + (k * k - 1 - t)] = vw.data()[((co * cin + ci) * k * k) + t];
                            }
                        }
                    }
                    let tg = ConvGeom {
                        cin: cout,
                        h: geom.oh,
                        w: geom.ow,
                        k,
                        stride: 1,
                        pad: k - 1 - pad,
                        oh: h,
                        ow: wd,
                    };
                    (wf, tg)
                });
                let mut dcols = match &transposed {
                    Some((_, tg)) => vec![0.0; tg.patch() * tg.positions()],
                    None => vec![0.0; kk * p],
                };
                for s in 0..n {
                    let gs = g.sample(s);
                    if has_bias {
                        for (co, row) in gs.chunks(p).enumerate() {
                            db[co] += row.iter().sum::<f32>();
                        }
                    }
                    let src: &[f32] = if geom.is_pointwise() {
                        vx.sample(s)
                    } else {
                        im2col(vx.sample(s), &geom, &mut cols);
                        &cols
                    };
                    gemm(false, true, cout, kk, p, 1.0, gs, src, 1.0, &mut dw);
                    if geom.is_pointwise() {
                        gemm(true, false, kk, p, cout, 1.0, vw.data(), gs, 0.0, dx.sample_mut(s));
                    } else if let Some((wf, tg)) = &transposed {
                        im2col(gs, tg, &mut dcols);
                        gemm(false, false, cin, h * wd, tg.patch(), 1.0, wf, &dcols, 0.0, dx.sample_mut(s));
                    } else {
                        gemm(true, false, kk, p, cout, 1.0, vw.data(), gs, 0.0, &mut dcols);
                        col2im(&dcols, &geom, dx.sample_mut(s));
                    }
                }
                let mut grads = vec![Some(dx), Some(Tensor::new(&[cout, cin, k, k], dw))];
                if has_bias {
                    grads.push(Some(Tensor::new(&[cout], db)));
                }
                grads
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (n, cin, h, wd) = x.dims4();
        let (cout, _, k, _) = w.dims4();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(&[n, cout, oh, ow]);
        for s in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((s * cin + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((co * cin + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                        out.data_mut()[((s * cout + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn pseudo(shape: &[usize], seed: f32) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|i| ((i as f32 + seed) * 0.731).sin()).collect())
    }

    #[test]
    fn matches_direct_convolution() {
        for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (1, 2, 0), (5, 2, 2), (3, 2, 0), (3, 1, 2)] {
            let x = pseudo(&[2, 3, 7, 6], 0.3);
            let w = pseudo(&[4, 3, k, k], 1.7);
            let g = Graph::inference();
            let (vx, vw) = (g.constant(x.clone()), g.constant(w.clone()));
            let y = g.value(g.conv2d(vx, vw, None, stride, pad));
            let want = direct_conv(&x, &w, stride, pad);
            assert!(y.max_abs_diff(&want) < 1e-5, "k={k} stride={stride}");
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (5, 2, 2), (3, 2, 0), (1, 2, 0)] {
            let x = pseudo(&[1, 2, 7, 6], 0.9);
            let w = pseudo(&[3, 2, k, k], 2.3);
            let err = crate::nn::gradcheck::check(
                &x,
                |g, v| {
                    let y = g.conv2d(v, g.constant(w.clone()), None, stride, pad);
                    crate::nn::gradcheck::probe(g, y)
                },
                0.5,
            );
            assert!(err < 1e-3, "k={k} stride={stride} pad={pad}: {err}");
        }
    }

    #[test]
    fn gradients_match_adjoint_loops() {
        let geometries = [(3, 1, 1), (3, 2, 1), (5, 2, 2), (3, 1, 0), (3, 1, 2), (5, 1, 1), (1, 2, 0)];
        for ((k, stride, pad), (cin, cout)) in geometries.into_iter().flat_map(|g| [(g, (2, 3)), (g, (5, 2))]) {
            let (h, wd) = (7, 6);
            let x = pseudo(&[2, cin, h, wd], 0.9);
            let w = pseudo(&[cout, cin, k, k], 2.3);
            let g = Graph::new();
            let (xv, wv) = (g.input(x.clone()), g.input(w.clone()));
            let y = g.conv2d(xv, wv, None, stride, pad);
            let up = pseudo(g.shape(y).as_slice(), 4.1);
            let (_, _, oh, ow) = up.dims4();
            let upc = up.clone();
            let shape = up.shape().to_vec();
            let dot = up.data().iter().zip(g.value(y).data()).map(|(a, b)| a * b).sum();
            let loss = g.custom(Tensor::scalar(dot), &[y], move || {
                Box::new(move |s| vec![Some(Tensor::new(&shape, upc.data().iter().map(|v| v * s.item()).collect()))])
            });
            let grads = g.backward(&[(loss, 1.0)]);
            let mut dx = vec![0.0f64; x.numel()];
            let mut dw = vec![0.0f64; w.numel()];
            for n in 0..2 {
                for co in 0..cout {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let gv = up.data()[((n * cout + co) * oh + oy) * ow + ox] as f64;
                            for ci in 0..cin {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iy = (oy * stride + ky) as isize - pad as isize;
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                            continue;
                                        }
                                        let xi = ((n * cin + ci) * h + iy as usize) * wd + ix as usize;
                                        let wi = ((co * cin + ci) * k + ky) * k + kx;
                                        dx[xi] += gv * w.data()[wi] as f64;
                                        dw[wi] += gv * x.data()[xi] as f64;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            for (name, got, want) in [("dx", grads.input(xv).unwrap(), &dx), ("dw", grads.input(wv).unwrap(), &dw)] {
                let err = got.data().iter().zip(want.iter()).map(|(a, b)| (*a as f64 - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-4, "{name} k={k} stride={stride} pad={pad} {cin}->{cout}: {err}");
            }
        }
    }
}
