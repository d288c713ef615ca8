//! Matte quality measures and compositing.

use crate::data::Sample;
use crate::error::{shape_err, Result};
use crate::model::{refine, ModelParams, Refiner};
use crate::parallel::map_indexed;
use crate::segnet::ldn_forward;
use crate::tensor::{Real, Tensor};

fn check_pair<T: Real>(op: &'static str, pred: &Tensor<T>, gt: &Tensor<T>) -> Result<()> {
    gt.expect_shape(op, pred.shape())?;
    if pred.shape().c != 1 {
        return shape_err(op, format!("mattes must have one channel, got {}", pred.shape()));
    }
    Ok(())
}

/// Mean over pixels of `‖∇pred − ∇gt‖₂`, with forward differences and a
/// zero difference past the last row and column.
pub fn gradient_error<T: Real>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<f64> {
    check_pair("gradient_error", pred, gt)?;
    let s = pred.shape();
    let mut total = 0.0f64;
    for n in 0..s.n {
        let d: Vec<f64> = pred
            .plane(n, 0)
            .iter()
            .zip(gt.plane(n, 0))
            .map(|(&p, &g)| p.to_f64().unwrap() - g.to_f64().unwrap())
            .collect();
        for y in 0..s.h {
            for x in 0..s.w {
                let i = y * s.w + x;
                let gx = if x + 1 < s.w { d[i + 1] - d[i] } else { 0.0 };
                let gy = if y + 1 < s.h { d[i + s.w] - d[i] } else { 0.0 };
                total += (gx * gx + gy * gy).sqrt();
            }
        }
    }
    Ok(total / (s.n * s.plane()) as f64)
}

/// Mean squared difference.
pub fn mse<T: Real>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<f64> {
    check_pair("mse", pred, gt)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (p.to_f64().unwrap() - g.to_f64().unwrap()).powi(2))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Fraction of pixels where two binary masks agree.
pub fn pixel_accuracy<T: Real>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<f64> {
    check_pair("pixel_accuracy", pred, gt)?;
    let hits = pred.data().iter().zip(gt.data()).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `α⊙I + (1 − α)⊙B`: pastes the extracted foreground of `image` onto
/// `background`.
pub fn composite<T: Real>(image: &Tensor<T>, alpha: &Tensor<T>, background: &Tensor<T>) -> Result<Tensor<T>> {
    background.expect_shape("composite", image.shape())?;
    let s = image.shape();
    alpha.expect_shape("composite", s.with_c(1))?;
    let mut out = image.clone();
    for n in 0..s.n {
        let a = alpha.plane(n, 0);
        for c in 0..s.c {
            let b = background.plane(n, c);
            for (i, v) in out.plane_mut(n, c).iter_mut().enumerate() {
                *v = a[i] * *v + (T::one() - a[i]) * b[i];
            }
        }
    }
    Ok(out)
}

/// Averages of per-image scores over a set of samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalScores {
    pub grad_error: f64,
    pub mse: f64,
    /// Agreement of the binarised prediction with the ground-truth mask.
    pub accuracy: f64,
}

/// Scores each refiner on every sample; the network runs once per sample.
pub fn evaluate(params: &ModelParams, samples: &[Sample], refiners: &[Refiner]) -> Result<Vec<EvalScores>> {
    let per_sample = map_indexed(samples.len(), |i| -> Result<Vec<EvalScores>> {
        let s = &samples[i];
        let scores = ldn_forward(&s.image, &params.ldn)?;
        refiners
            .iter()
            .map(|&r| {
                let m = refine(&s.image, &scores, params, r)?;
                Ok(EvalScores {
                    grad_error: gradient_error(&m, &s.alpha)?,
                    mse: mse(&m, &s.alpha)?,
                    accuracy: pixel_accuracy(&crate::data::binarize(&m), &s.mask)?,
                })
            })
            .collect()
    });
    let mut out = vec![EvalScores::default(); refiners.len()];
    for row in per_sample {
        for (acc, s) in out.iter_mut().zip(row?) {
            acc.grad_error += s.grad_error;
            acc.mse += s.mse;
            acc.accuracy += s.accuracy;
        }
    }
    let k = samples.len().max(1) as f64;
    for acc in &mut out {
        acc.grad_error /= k;
        acc.mse /= k;
        acc.accuracy /= k;
    }
    Ok(out)
}
