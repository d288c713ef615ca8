//! Pointwise nonlinearities.

use crate::error::Result;
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Gradient of [`relu`] given its *output*; zero where the unit was inactive.
pub fn relu_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    output.zip_map(grad_out, "relu_backward", |y, g| if y > T::zero() { g } else { T::zero() })
}

/// Per-pixel softmax across channels, stabilised by subtracting the
/// per-pixel maximum.
pub fn softmax_channels<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let p = s.plane();
    let mut out = Tensor::zeros(s);
    let mut buf = vec![T::zero(); s.c];
    for n in 0..s.n {
        let base = n * s.c * p;
        for i in 0..p {
            let mut m = T::neg_infinity();
            for c in 0..s.c {
                m = m.max(input.data()[base + c * p + i]);
            }
            let mut z = T::zero();
            for c in 0..s.c {
                buf[c] = (input.data()[base + c * p + i] - m).exp();
                z = z + buf[c];
            }
            for c in 0..s.c {
                out.data_mut()[base + c * p + i] = buf[c] / z;
            }
        }
    }
    out
}

/// Gradient through [`softmax_channels`] given its output `probs`:
/// `dx_c = p_c · (g_c − Σ_k p_k g_k)`.
pub fn softmax_channels_backward<T: Real>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape("softmax_channels_backward", probs.shape())?;
    let s = probs.shape();
    let p = s.plane();
    let mut grad = Tensor::zeros(s);
    for n in 0..s.n {
        let base = n * s.c * p;
        for i in 0..p {
            let dot: T = (0..s.c)
                .map(|c| probs.data()[base + c * p + i] * grad_out.data()[base + c * p + i])
                .sum();
            for c in 0..s.c {
                let k = base + c * p + i;
                grad.data_mut()[k] = probs.data()[k] * (grad_out.data()[k] - dot);
            }
        }
    }
    Ok(grad)
}
