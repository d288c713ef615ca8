//! Closed-form guided filter, used as the non-learned baseline refiner.

use crate::error::{shape_err, Error, Result};
use crate::ops::box_filter;
use crate::tensor::{Real, Tensor};

/// Luma weights for reducing an RGB guide to one channel.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Window radius and regulariser.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidedFilterConfig {
    pub radius: usize,
    pub eps: f64,
}

impl Default for GuidedFilterConfig {
    fn default() -> Self {
        GuidedFilterConfig { radius: 4, eps: 1e-4 }
    }
}

/// Single-channel guide: passes 1-channel tensors through and reduces
/// 3-channel ones to luma.
pub fn guide_luma<T: Real>(guide: &Tensor<T>) -> Result<Tensor<T>> {
    let s = guide.shape();
    match s.c {
        1 => Ok(guide.clone()),
        3 => {
            let mut out = Tensor::zeros(s.with_c(1));
            let w = LUMA.map(T::lit);
            for n in 0..s.n {
                let (r, g, b) = (guide.plane(n, 0), guide.plane(n, 1), guide.plane(n, 2));
                for (i, v) in out.plane_mut(n, 0).iter_mut().enumerate() {
                    *v = w[0] * r[i] + w[1] * g[i] + w[2] * b[i];
                }
            }
            Ok(out)
        }
        c => shape_err("guided_filter", format!("guide must have 1 or 3 channels, got {c}")),
    }
}

/// Filters `p` under the local linear model `q = a_k·I + b_k` per window.
///
/// Per window, `a_k = cov(I, p) / (var(I) + ε)` and
/// `b_k = mean(p) − a_k·mean(I)`; each output pixel averages `a_k·I + b_k`
/// over the windows that contain it. All window statistics use
/// border-clipped box means.
pub fn guided_filter<T: Real>(guide: &Tensor<T>, p: &Tensor<T>, radius: usize, eps: f64) -> Result<Tensor<T>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("guided filter eps must be positive, got {eps}")));
    }
    if radius == 0 {
        return Err(Error::InvalidArgument("guided filter radius must be at least 1".into()));
    }
    let i = guide_luma(guide)?;
    if p.shape() != i.shape() {
        return shape_err("guided_filter", format!("input {} vs guide {}", p.shape(), i.shape()));
    }
    let eps = T::lit(eps);
    let mean_i = box_filter(&i, radius);
    let mean_p = box_filter(p, radius);
    let corr_ip = box_filter(&i.mul(p)?, radius);
    let corr_ii = box_filter(&i.mul(&i)?, radius);

    let len = i.len();
    let mut a = Tensor::zeros(i.shape());
    let mut b = Tensor::zeros(i.shape());
    for k in 0..len {
        let (mi, mp) = (mean_i.data()[k], mean_p.data()[k]);
        let var = corr_ii.data()[k] - mi * mi;
        let cov = corr_ip.data()[k] - mi * mp;
        let ak = cov / (var + eps);
        a.data_mut()[k] = ak;
        b.data_mut()[k] = mp - ak * mi;
    }
    let mean_a = box_filter(&a, radius);
    let mean_b = box_filter(&b, radius);
    let mut q = mean_b;
    for k in 0..len {
        q.data_mut()[k] = mean_a.data()[k] * i.data()[k] + q.data()[k];
    }
    Ok(q)
}

/// [`guided_filter`] with a stored configuration.
pub fn guided_filter_with<T: Real>(guide: &Tensor<T>, p: &Tensor<T>, cfg: &GuidedFilterConfig) -> Result<Tensor<T>> {
    guided_filter(guide, p, cfg.radius, cfg.eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_, _, _, _| rng.random())
    }

    #[test]
    fn constant_guide_reduces_to_box_filter() {
        let sh = Shape::new(1, 1, 10, 10);
        let guide = Tensor::full(sh, 0.4);
        let p = random(sh, 1);
        let q = guided_filter(&guide, &p, 2, 1e-3).unwrap();
        // a = 0 and b = mean(p), so q is the box mean of the box mean of p
        let want = box_filter(&box_filter(&p, 2), 2);
        assert!(q.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn self_guided_small_eps_is_near_identity() {
        let sh = Shape::new(1, 1, 16, 16);
        let i = random(sh, 2);
        let q = guided_filter(&i, &i, 2, 1e-8).unwrap();
        assert!(q.max_abs_diff(&i) < 1e-3);
    }

    #[test]
    fn rgb_guides_use_luma() {
        let rgb = random(Shape::new(1, 3, 6, 6), 3);
        let luma = guide_luma(&rgb).unwrap();
        let p = random(Shape::new(1, 1, 6, 6), 4);
        let a = guided_filter(&rgb, &p, 1, 0.01).unwrap();
        let b = guided_filter(&luma, &p, 1, 0.01).unwrap();
        assert_eq!(a, b);
        assert!((luma.at(0, 0, 2, 3)
            - (0.299 * rgb.at(0, 0, 2, 3) + 0.587 * rgb.at(0, 1, 2, 3) + 0.114 * rgb.at(0, 2, 2, 3)))
        .abs()
            < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        let t = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 4));
        assert!(guided_filter(&t, &t, 1, 0.0).is_err());
        assert!(guided_filter(&t, &t, 1, -1.0).is_err());
        assert!(guided_filter(&t, &t, 0, 1.0).is_err());
        assert!(guided_filter(&t, &Tensor::zeros(Shape::new(1, 1, 4, 5)), 1, 1.0).is_err());
    }
}
