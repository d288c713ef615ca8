//! Stochastic gradient descent with momentum and L2 weight decay.

use crate::paramset::ParamSet;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One update of every array in `params`:
///
/// ```text
/// v ← momentum·v + grad + weight_decay·param
/// param ← param − lr·v
/// ```
///
/// `velocity` has the same layout as `params` and starts at zero.
pub fn sgd_step<T: Real, P: ParamSet<T>>(params: &mut P, grads: &P, velocity: &mut P, cfg: &SgdConfig) {
    let (lr, mu, wd) = (T::lit(cfg.lr), T::lit(cfg.momentum), T::lit(cfg.weight_decay));
    let grads = grads.arrays();
    let vel = velocity.arrays_mut();
    for ((p, g), v) in params.arrays_mut().into_iter().zip(grads).zip(vel) {
        for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = mu * *v + g + wd * *p;
            *p = *p - lr * *v;
        }
    }
}
