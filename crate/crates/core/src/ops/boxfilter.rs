//! Windowed means in constant time per pixel.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Mean over the `(2r+1)²` window around each pixel, clipped to the image
/// and divided by the number of pixels actually inside it.
///
/// Uses a summed-area table accumulated in `f64`, so the cost does not
/// depend on `radius` and `f32` inputs do not lose precision to the
/// running sums.
pub fn box_filter<T: Real>(input: &Tensor<T>, radius: usize) -> Tensor<T> {
    if radius == 0 {
        return input.clone();
    }
    let s = input.shape();
    let (h, w) = (s.h, s.w);
    let mut out = Tensor::zeros(s);
    let mut sat = vec![0.0f64; (h + 1) * (w + 1)];
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            for y in 0..h {
                let mut row = 0.0f64;
                for x in 0..w {
                    row += src[y * w + x].to_f64().unwrap_or(f64::NAN);
                    sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
                }
            }
            let dst = out.plane_mut(n, c);
            for y in 0..h {
                let (y0, y1) = (y.saturating_sub(radius), (y + radius + 1).min(h));
                for x in 0..w {
                    let (x0, x1) = (x.saturating_sub(radius), (x + radius + 1).min(w));
                    let sum = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]
                        + sat[y0 * (w + 1) + x0];
                    let count = ((y1 - y0) * (x1 - x0)) as f64;
                    dst[y * w + x] = T::lit(sum / count);
                }
            }
        }
    }
    out
}

/// [`box_filter`] with a checked signed radius, for callers that take the
/// radius from user input.
pub fn box_filter_checked<T: Real>(input: &Tensor<T>, radius: i64) -> Result<Tensor<T>> {
    if radius < 0 {
        return Err(Error::InvalidArgument(format!("box filter radius {radius} is negative")));
    }
    Ok(box_filter(input, radius as usize))
}

/// Adjoint of [`box_filter`]: each output gradient is spread evenly over
/// the pixels of its clipped window.
pub fn box_filter_backward<T: Real>(grad: &Tensor<T>, radius: usize) -> Tensor<T> {
    if radius == 0 {
        return grad.clone();
    }
    let s = grad.shape();
    let count = |i: usize, len: usize| ((i + radius + 1).min(len) - i.saturating_sub(radius)) as f64;
    let per_pixel = |y: usize, x: usize| count(y, s.h) * count(x, s.w);
    // windows are symmetric, so summing g/count over a window is the adjoint
    let spread = box_filter(&Tensor::from_fn(s, |n, c, y, x| grad.at(n, c, y, x) / T::lit(per_pixel(y, x))), radius);
    Tensor::from_fn(s, |n, c, y, x| spread.at(n, c, y, x) * T::lit(per_pixel(y, x)))
}
