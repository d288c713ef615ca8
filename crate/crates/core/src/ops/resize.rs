//! Bilinear resampling with the align-corners convention: the centres of
//! the corner pixels of input and output coincide, so output coordinate
//! `o` samples input coordinate `o·(in−1)/(out−1)`.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug)]
struct Lerp<T> {
    i0: usize,
    i1: usize,
    w0: T,
    w1: T,
}

fn axis_table<T: Real>(input: usize, output: usize) -> Vec<Lerp<T>> {
    (0..output)
        .map(|o| {
            let pos = if output > 1 {
                o as f64 * (input - 1) as f64 / (output - 1) as f64
            } else {
                0.0
            };
            let i0 = (pos.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let frac = pos - i0 as f64;
            Lerp {
                i0,
                i1,
                w0: T::lit(1.0 - frac),
                w1: T::lit(frac),
            }
        })
        .collect()
}

/// Resizes every plane to `out_h × out_w`. Resizing to the same extent is
/// the identity.
pub fn bilinear_resize<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!("resize target {out_h}x{out_w} must be positive")));
    }
    let s = input.shape();
    if (out_h, out_w) == (s.h, s.w) {
        return Ok(input.clone());
    }
    let ys = axis_table::<T>(s.h, out_h);
    let xs = axis_table::<T>(s.w, out_w);
    let mut out = Tensor::zeros(s.with_hw(out_h, out_w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            let dst = out.plane_mut(n, c);
            for (oy, ly) in ys.iter().enumerate() {
                let r0 = &src[ly.i0 * s.w..(ly.i0 + 1) * s.w];
                let r1 = &src[ly.i1 * s.w..(ly.i1 + 1) * s.w];
                for (ox, lx) in xs.iter().enumerate() {
                    let top = r0[lx.i0] * lx.w0 + r0[lx.i1] * lx.w1;
                    let bot = r1[lx.i0] * lx.w0 + r1[lx.i1] * lx.w1;
                    dst[oy * out_w + ox] = top * ly.w0 + bot * ly.w1;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`bilinear_resize`]: scatters output gradients back onto the
/// `in_h × in_w` grid with the same interpolation weights.
pub fn bilinear_resize_backward<T: Real>(grad_out: &Tensor<T>, in_h: usize, in_w: usize) -> Result<Tensor<T>> {
    if in_h == 0 || in_w == 0 {
        return Err(Error::InvalidArgument(format!("resize source {in_h}x{in_w} must be positive")));
    }
    let s = grad_out.shape();
    if (in_h, in_w) == (s.h, s.w) {
        return Ok(grad_out.clone());
    }
    let ys = axis_table::<T>(in_h, s.h);
    let xs = axis_table::<T>(in_w, s.w);
    let mut grad = Tensor::zeros(s.with_hw(in_h, in_w));
    for n in 0..s.n {
        for c in 0..s.c {
            let g = grad_out.plane(n, c);
            let dst = grad.plane_mut(n, c);
            for (oy, ly) in ys.iter().enumerate() {
                for (ox, lx) in xs.iter().enumerate() {
                    let v = g[oy * s.w + ox];
                    let (t, b) = (v * ly.w0, v * ly.w1);
                    dst[ly.i0 * in_w + lx.i0] = dst[ly.i0 * in_w + lx.i0] + t * lx.w0;
                    dst[ly.i0 * in_w + lx.i1] = dst[ly.i0 * in_w + lx.i1] + t * lx.w1;
                    dst[ly.i1 * in_w + lx.i0] = dst[ly.i1 * in_w + lx.i0] + b * lx.w0;
                    dst[ly.i1 * in_w + lx.i1] = dst[ly.i1 * in_w + lx.i1] + b * lx.w1;
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn same_size_is_identity() {
        let x = Tensor::<f32>::from_fn(Shape::new(1, 2, 3, 5), |_, c, y, x| (c + y * x) as f32 * 0.3);
        assert_eq!(bilinear_resize(&x, 3, 5).unwrap(), x);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::full(Shape::new(1, 1, 3, 4), 0.7f64);
        for &(h, w) in &[(1, 1), (7, 2), (12, 16)] {
            let y = bilinear_resize(&x, h, w).unwrap();
            assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        }
    }

    #[test]
    fn two_to_four_hand_computed() {
        // Align-corners: output samples input positions 0, 1/3, 2/3, 1 per
        // axis, so out(y, x) = 1 + x_pos + 2·y_pos for [[1, 2], [3, 4]].
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let y = bilinear_resize(&x, 4, 4).unwrap();
        #[rustfmt::skip]
        let want = [
            1.0,       4.0 / 3.0,  5.0 / 3.0,  2.0,
            5.0 / 3.0, 2.0,        7.0 / 3.0,  8.0 / 3.0,
            7.0 / 3.0, 8.0 / 3.0,  3.0,        10.0 / 3.0,
            3.0,       10.0 / 3.0, 11.0 / 3.0, 4.0,
        ];
        for (a, b) in y.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_empty_target() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 2, 2));
        assert!(bilinear_resize(&x, 0, 3).is_err());
    }
}
