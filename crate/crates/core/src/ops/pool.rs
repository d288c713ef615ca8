//! 2×2, stride-2 max pooling.

use crate::error::Result;
use crate::parallel;
use crate::tensor::{Real, Shape, Tensor};

/// Flat input index of the winning element for every output element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Shape,
    pub argmax: Vec<usize>,
}

/// Max over non-overlapping 2×2 windows. Odd extents are padded on the
/// right/bottom with −∞, so the output is `ceil(h/2) × ceil(w/2)`.
pub fn maxpool2d<T: Real>(input: &Tensor<T>) -> (Tensor<T>, PoolIndices) {
    let s = input.shape();
    let (oh, ow) = (s.h.div_ceil(2), s.w.div_ceil(2));
    let out_shape = s.with_hw(oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out_shape.len()];
    let plane = oh * ow;

    let winners: Vec<Vec<(T, usize)>> = parallel::map_indexed(s.n * s.c, |p| {
        let base = p * s.plane();
        let src = &input.data()[base..base + s.plane()];
        let mut res = Vec::with_capacity(plane);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (T::neg_infinity(), base + 2 * oy * s.w + 2 * ox);
                for y in 2 * oy..(2 * oy + 2).min(s.h) {
                    for x in 2 * ox..(2 * ox + 2).min(s.w) {
                        let v = src[y * s.w + x];
                        if v > best.0 {
                            best = (v, base + y * s.w + x);
                        }
                    }
                }
                res.push(best);
            }
        }
        res
    });
    for (p, res) in winners.into_iter().enumerate() {
        for (i, (v, idx)) in res.into_iter().enumerate() {
            out.data_mut()[p * plane + i] = v;
            argmax[p * plane + i] = idx;
        }
    }
    (out, PoolIndices { input_shape: s, argmax })
}

/// Routes each output gradient to the input element that won its window.
pub fn maxpool2d_backward<T: Real>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let s = indices.input_shape;
    grad_out.expect_shape("maxpool2d_backward", s.with_hw(s.h.div_ceil(2), s.w.div_ceil(2)))?;
    let mut grad = Tensor::zeros(s);
    for (&i, &g) in indices.argmax.iter().zip(grad_out.data()) {
        grad.data_mut()[i] = grad.data()[i] + g;
    }
    Ok(grad)
}
