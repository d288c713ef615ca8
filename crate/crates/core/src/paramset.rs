//! Uniform access to the trainable arrays of a model component.
//!
//! Gradients are stored in the same structures as the parameters they
//! belong to, so optimizers and gradient checks can walk both in lockstep.

use crate::ops::ConvParams;
use crate::tensor::Real;

pub trait ParamSet<T: Real> {
    /// Every trainable array, in a fixed order.
    fn arrays(&self) -> Vec<&[T]>;
    fn arrays_mut(&mut self) -> Vec<&mut [T]>;

    fn param_count(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    fn to_flat(&self) -> Vec<T> {
        self.arrays().concat()
    }

    /// Overwrites every parameter from a flat vector in [`arrays`] order.
    ///
    /// [`arrays`]: ParamSet::arrays
    fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length mismatch");
        let mut at = 0;
        for a in self.arrays_mut() {
            a.copy_from_slice(&flat[at..at + a.len()]);
            at += a.len();
        }
    }

    fn fill(&mut self, v: T) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|x| *x = v);
        }
    }

    /// `self += k · other`.
    fn add_scaled(&mut self, other: &Self, k: T) {
        for (dst, src) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + k * s;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}

impl<T: Real> ParamSet<T> for ConvParams<T> {
    fn arrays(&self) -> Vec<&[T]> {
        vec![self.weight.data(), &self.bias]
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.weight.data_mut(), &mut self.bias]
    }
}

impl<T: Real, P: ParamSet<T>> ParamSet<T> for Vec<P> {
    fn arrays(&self) -> Vec<&[T]> {
        self.iter().flat_map(|p| p.arrays()).collect()
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        self.iter_mut().flat_map(|p| p.arrays_mut()).collect()
    }
}
