//! Training objectives. Every loss returns `(value, gradient)` where the
//! gradient is taken w.r.t. the prediction.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Real, Tensor};

/// Charbonnier alpha loss: mean over pixels of `sqrt((α_gt − α_p)² + ε²)`.
pub fn loss_alpha<T: Real>(pred: &Tensor<T>, gt: &Tensor<T>, eps: T) -> Result<(T, Tensor<T>)> {
    gt.expect_shape("loss_alpha", pred.shape())?;
    let k = T::lit(pred.len() as f64);
    let eps2 = eps * eps;
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(gt.data()) {
        let d = p - t;
        let r = (d * d + eps2).sqrt();
        loss = loss + r;
        *g = d / r / k;
    }
    Ok((loss / k, grad))
}

/// Compositional loss on `q = α·I`: mean over pixels of
/// `Σ_{R,G,B} sqrt((α_gt·I_j − α_p·I_j)² + ε²)`.
pub fn loss_color<T: Real>(pred: &Tensor<T>, gt: &Tensor<T>, image: &Tensor<T>, eps: T) -> Result<(T, Tensor<T>)> {
    gt.expect_shape("loss_color", pred.shape())?;
    let s = pred.shape();
    if s.c != 1 || image.shape() != s.with_c(3) {
        return shape_err("loss_color", format!("alpha {s} vs image {}", image.shape()));
    }
    let k = T::lit((s.n * s.plane()) as f64);
    let eps2 = eps * eps;
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(s);
    for n in 0..s.n {
        let (p, t) = (pred.plane(n, 0), gt.plane(n, 0));
        let g = grad.plane_mut(n, 0);
        for c in 0..3 {
            let img = image.plane(n, c);
            for i in 0..p.len() {
                let d = (p[i] - t[i]) * img[i];
                let r = (d * d + eps2).sqrt();
                loss = loss + r;
                g[i] = g[i] + d * img[i] / r / k;
            }
        }
    }
    Ok((loss / k, grad))
}

/// Mean two-class softmax cross-entropy. `mask` is 1 for foreground
/// (logit channel 0) and 0 for background (channel 1).
pub fn cross_entropy_mask<T: Real>(logits: &Tensor<T>, mask: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let s = logits.shape();
    if s.c != 2 {
        return shape_err("cross_entropy_mask", format!("logits must have 2 channels, got {s}"));
    }
    mask.expect_shape("cross_entropy_mask", s.with_c(1))?;
    let k = T::lit((s.n * s.plane()) as f64);
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(s);
    for n in 0..s.n {
        let (lf, lb, m) = (logits.plane(n, 0), logits.plane(n, 1), mask.plane(n, 0));
        let mut gf = vec![T::zero(); m.len()];
        let mut gb = vec![T::zero(); m.len()];
        for i in 0..m.len() {
            let fg = if m[i] == T::one() {
                true
            } else if m[i] == T::zero() {
                false
            } else {
                return Err(Error::InvalidArgument(format!("mask value {:?} is not 0 or 1", m[i])));
            };
            let mx = lf[i].max(lb[i]);
            let (ef, eb) = ((lf[i] - mx).exp(), (lb[i] - mx).exp());
            let lse = mx + (ef + eb).ln();
            let (pf, pb) = (ef / (ef + eb), eb / (ef + eb));
            loss = loss + lse - if fg { lf[i] } else { lb[i] };
            gf[i] = (pf - if fg { T::one() } else { T::zero() }) / k;
            gb[i] = (pb - if fg { T::zero() } else { T::one() }) / k;
        }
        grad.plane_mut(n, 0).copy_from_slice(&gf);
        grad.plane_mut(n, 1).copy_from_slice(&gb);
    }
    Ok((loss / k, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn px(v: f64) -> Tensor<f64> {
        Tensor::full(Shape::new(1, 1, 1, 1), v)
    }

    #[test]
    fn alpha_loss_floor_and_unit_error() {
        let a = Tensor::from_fn(Shape::new(1, 1, 3, 3), |_, _, y, x| (y * 3 + x) as f64 / 8.0);
        let (l, g) = loss_alpha(&a, &a, 1e-3).unwrap();
        assert!((l - 1e-3).abs() < 1e-15);
        assert!(g.data().iter().all(|&v| v == 0.0));
        let (l, _) = loss_alpha(&px(1.0), &px(0.0), 1e-3).unwrap();
        assert_eq!(l, (1.0f64 + 1e-6).sqrt());
    }

    #[test]
    fn color_loss_floor_cases() {
        let sh = Shape::new(1, 1, 4, 4);
        let a = Tensor::from_fn(sh, |_, _, y, x| (y + x) as f64 / 6.0);
        let b = a.map(|v| 1.0 - v);
        let img = Tensor::from_fn(Shape::new(1, 3, 4, 4), |_, c, y, x| ((c + y * x) % 3) as f64 / 2.0);
        let (l, _) = loss_color(&a, &a, &img, 1e-3).unwrap();
        assert!((l - 3e-3).abs() < 1e-15);
        let black = Tensor::zeros(Shape::new(1, 3, 4, 4));
        let (l, g) = loss_color(&a, &b, &black, 1e-3).unwrap();
        assert!((l - 3e-3).abs() < 1e-15);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_entropy_limits() {
        let sh = Shape::new(1, 2, 2, 2);
        let mask = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (l, _) = cross_entropy_mask(&Tensor::zeros(sh), &mask).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let m = 20.0;
        let confident = Tensor::from_fn(sh, |_, c, y, x| {
            let fg = mask.at(0, 0, y, x) == 1.0;
            if (c == 0) == fg {
                m
            } else {
                0.0
            }
        });
        let (l, _) = cross_entropy_mask(&confident, &mask).unwrap();
        assert!(l <= 1e-6, "{l}");
        let soft = Tensor::full(Shape::new(1, 1, 2, 2), 0.5);
        assert!(cross_entropy_mask(&Tensor::zeros(sh), &soft).is_err());
    }

    #[test]
    fn alpha_gradient_bounded_by_inverse_pixel_count() {
        let sh = Shape::new(2, 1, 4, 4);
        let p = Tensor::from_fn(sh, |n, _, y, x| ((n + 3 * y + x) % 5) as f64 / 4.0);
        let t = p.map(|v| 1.0 - v);
        let (_, g) = loss_alpha(&p, &t, 1e-3).unwrap();
        assert!(g.data().iter().all(|v| v.abs() <= 1.0 / 32.0 + 1e-18));
    }
}
