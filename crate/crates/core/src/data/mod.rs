//! Training samples, synthetic corpus generation, file loading and
//! train/test splitting.

mod io;
mod synth;

pub use io::{
    load_alpha_png, load_dataset, load_rgb_png, load_sample, read_manifest, save_alpha_png, save_rgb_png, to_u8,
    write_manifest, DatasetManifest,
};
pub use synth::{synth_dataset, synth_sample, SynthConfig, SynthMode, SynthSample};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::ops::bilinear_resize;
use crate::tensor::{Real, Tensor};

/// Ground-truth alpha at or above this value counts as foreground.
pub const MASK_THRESHOLD: f32 = 0.5;

/// One training example at a fixed resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `(1, 3, h, w)` in `[0, 1]`.
    pub image: Tensor,
    /// `(1, 1, h, w)` in `[0, 1]`.
    pub alpha: Tensor,
    /// `(1, 1, h, w)` in `{0, 1}`.
    pub mask: Tensor,
}

impl Sample {
    /// Pairs an image with its matte and derives the binary mask.
    pub fn new(image: Tensor, alpha: Tensor) -> Result<Self> {
        let s = image.shape();
        if s.n != 1 || s.c != 3 {
            return shape_err("sample", format!("image must be 1x3xHxW, got {s}"));
        }
        alpha.expect_shape("sample", s.with_c(1))?;
        let mask = binarize(&alpha);
        Ok(Sample { image, alpha, mask })
    }

    pub fn size(&self) -> (usize, usize) {
        let s = self.image.shape();
        (s.h, s.w)
    }

    /// Bilinear (align-corners) resize of image and alpha; the mask is
    /// re-derived from the resized alpha.
    pub fn resized(&self, h: usize, w: usize) -> Result<Self> {
        if self.size() == (h, w) {
            return Ok(self.clone());
        }
        Sample::new(bilinear_resize(&self.image, h, w)?, bilinear_resize(&self.alpha, h, w)?)
    }
}

/// `1` where `alpha ≥ MASK_THRESHOLD`, else `0`.
pub fn binarize<T: Real>(alpha: &Tensor<T>) -> Tensor<T> {
    let t = T::lit(MASK_THRESHOLD as f64);
    alpha.map(|v| if v >= t { T::one() } else { T::zero() })
}

/// Seeded random partition of `0..n` into `round(ratio·n)` training and
/// the remaining test indices.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * n as f64).round() as usize;
    let test = idx.split_off(n_train.min(n));
    Ok((idx, test))
}

/// Splits `dataset` into `(train, test)` with [`split_indices`].
pub fn split<S: Clone>(dataset: &[S], ratio: f64, seed: u64) -> Result<(Vec<S>, Vec<S>)> {
    let (tr, te) = split_indices(dataset.len(), ratio, seed)?;
    let pick = |ix: Vec<usize>| ix.into_iter().map(|i| dataset[i].clone()).collect();
    Ok((pick(tr), pick(te)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn split_sizes_match_ratio() {
        let (tr, te) = split_indices(2000, 0.9, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (1800, 200));
        let (tr, te) = split_indices(200, 0.9, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (180, 20));
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let (tr, te) = split_indices(57, 0.7, 11).unwrap();
        let mut all: Vec<_> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
        assert_eq!(split_indices(57, 0.7, 11).unwrap(), (tr.clone(), te));
        assert_ne!(split_indices(57, 0.7, 12).unwrap().0, tr);
    }

    #[test]
    fn split_rejects_degenerate_ratio() {
        for r in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(split_indices(10, r, 0).is_err());
        }
    }

    #[test]
    fn mask_threshold_is_inclusive() {
        let a = Tensor::from_vec(Shape::new(1, 1, 1, 4), vec![0.0f32, 0.49, 0.5, 1.0]).unwrap();
        assert_eq!(binarize(&a).data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn sample_checks_shapes() {
        let img = Tensor::zeros(Shape::new(1, 3, 4, 4));
        assert!(Sample::new(img.clone(), Tensor::zeros(Shape::new(1, 1, 4, 5))).is_err());
        assert!(Sample::new(Tensor::zeros(Shape::new(1, 1, 4, 4)), Tensor::zeros(Shape::new(1, 1, 4, 4))).is_err());
        let s = Sample::new(img, Tensor::full(Shape::new(1, 1, 4, 4), 0.7)).unwrap();
        assert_eq!(s.mask.sum(), 16.0);
        assert_eq!(s.resized(8, 8).unwrap().size(), (8, 8));
    }
}
