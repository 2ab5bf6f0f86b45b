//! Minimal reverse-mode autodiff over dense `f32` tensors.

mod adam;
mod conv;
mod gemm;
mod graph;
mod ops;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gemm::{gemm, Scalar};
pub use graph::{BackwardFn, Gradients, Graph, Var};
pub use ops::{resize_plane, AxisWeights};
pub use params::{Conv, Init, ParamStore};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) mod gradcheck {
    use super::*;

    /// Central-difference check of `f` with respect to a single input leaf.
    /// `f` must reduce to a scalar. Returns the worst relative error.
    pub fn check<F>(input: &Tensor, f: F, h: f32) -> f32
    where
        F: Fn(&Graph, Var) -> Var,
    {
        let g = Graph::new();
        let x = g.input(input.clone());
        let y = f(&g, x);
        let grads = g.backward(&[(y, 1.0)]);
        let analytic = grads.input(x).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        let eval = |t: Tensor| {
            let g = Graph::inference();
            let x = g.constant(t);
            g.value(f(&g, x)).item() as f64
        };
        let mut worst = 0.0f32;
        for i in 0..input.numel() {
            let mut plus = input.clone();
            plus.data_mut()[i] += h;
            let mut minus = input.clone();
            minus.data_mut()[i] -= h;
            let numeric = ((eval(plus) - eval(minus)) / (2.0 * h as f64)) as f32;
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / (a.abs().max(numeric.abs()).max(1e-2));
            worst = worst.max(err);
        }
        worst
    }

    /// Sum of `x ⊙ probe`: a scalar with a non-uniform upstream gradient.
    pub fn probe(g: &Graph, y: Var) -> Var {
        let v = g.value(y);
        let weights: Vec<f32> = (0..v.numel()).map(|i| ((i as f32) * 0.618).sin() + 0.3).collect();
        let total = v.data().iter().zip(&weights).map(|(a, b)| a * b).sum();
        let shape = v.shape().to_vec();
        g.custom(Tensor::scalar(total), &[y], move || {
            Box::new(move |up| vec![Some(Tensor::new(&shape, weights.iter().map(|w| w * up.item()).collect()))])
        })
    }
}
