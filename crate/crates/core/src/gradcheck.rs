//! Central-difference gradient checking.
//!
//! Backward passes are verified by reducing an operator's output to a
//! scalar through a fixed random projection and comparing the analytic
//! gradient of that scalar against central differences, all in `f64`.
//!
//! Piecewise-smooth maps (ReLU, max-pool, clamp) can put a kink inside the
//! stencil. When the forward and backward one-sided slopes disagree, the
//! coordinate is re-estimated with a second-order one-sided stencil on
//! the smoother side, which stays accurate as long as `x` itself is not
//! on the kink.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Real, Tensor};

/// Relative error below which a backward pass is accepted.
pub const TOLERANCE: f64 = 1e-4;

/// Denominator floor, so parameters with near-zero gradients are judged on
/// absolute error instead of blowing up the ratio.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Outcome of a [`grad_check`] run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// One-sided slopes differing by more than this fraction flag a kink.
const KINK_RATIO: f64 = 0.1;

/// Compares `analytic` against central differences of the scalar function
/// `f` around `x`, one coordinate at a time.
///
/// Returns the maximum over coordinates of
/// `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
pub fn grad_check<F>(mut f: F, x: &[f64], analytic: &[f64], eps: f64, floor: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length must match input length");
    let f0 = f(x);
    let mut probe = x.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe);
        probe[i] = x[i] - eps;
        let minus = f(&probe);
        let (fwd, bwd) = ((plus - f0) / eps, (f0 - minus) / eps);
        let numeric = if (fwd - bwd).abs() > KINK_RATIO * fwd.abs().max(bwd.abs()).max(floor) {
            probe[i] = x[i] + 2.0 * eps;
            let plus2 = f(&probe);
            probe[i] = x[i] - 2.0 * eps;
            let minus2 = f(&probe);
            if (plus2 - 2.0 * plus + f0).abs() <= (f0 - 2.0 * minus + minus2).abs() {
                (4.0 * plus - 3.0 * f0 - plus2) / (2.0 * eps)
            } else {
                (3.0 * f0 - 4.0 * minus + minus2) / (2.0 * eps)
            }
        } else {
            (plus - minus) / (2.0 * eps)
        };
        probe[i] = x[i];
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if err > worst.max_rel_error || !err.is_finite() {
            worst = GradCheck {
                max_rel_error: if err.is_finite() { err } else { f64::INFINITY },
                worst_index: i,
                analytic: a,
                numeric,
            };
        }
    }
    worst
}

/// A fixed random projection vector in `[-1, 1)`, used to reduce a tensor
/// output to a scalar loss `⟨proj, y⟩` whose gradient w.r.t. `y` is `proj`.
pub fn projection(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `⟨proj, t⟩`.
pub fn project<T: Real>(t: &Tensor<T>, proj: &[f64]) -> f64 {
    t.data()
        .iter()
        .zip(proj)
        .map(|(v, p)| v.to_f64().unwrap_or(f64::NAN) * p)
        .sum()
}
