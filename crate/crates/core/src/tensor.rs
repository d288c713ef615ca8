//! Rank-4 dense tensors in `(batch, channel, height, width)` order.

use std::fmt::{self, Debug};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::error::{shape_err, Error, Result};

/// Scalar type a [`Tensor`] can hold. Production code runs in `f32`; the
/// test harness re-runs critical paths in `f64`.
pub trait Real: Float + FromPrimitive + Sum + Default + Debug + Send + Sync + 'static {
    /// Converts an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Extent of a tensor along each of its four axes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of elements in one `(h, w)` plane.
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_c(self, c: usize) -> Self {
        Shape { c, ..self }
    }

    pub fn with_n(self, n: usize) -> Self {
        Shape { n, ..self }
    }

    pub fn with_hw(self, h: usize, w: usize) -> Self {
        Shape { h, w, ..self }
    }

    /// Same batch and spatial extent (channels may differ).
    pub fn same_nhw(&self, other: &Shape) -> bool {
        self.n == other.n && self.h == other.h && self.w == other.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Dense tensor with contiguous, width-fastest storage.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        assert!(
            shape.n > 0 && shape.c > 0 && shape.h > 0 && shape.w > 0,
            "tensor dimensions must be positive, got {shape}"
        );
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0 {
            return shape_err("from_vec", format!("zero dimension in {shape}"));
        }
        if data.len() != shape.len() {
            return shape_err(
                "from_vec",
                format!("{} elements for shape {shape} ({} expected)", data.len(), shape.len()),
            );
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let s = &self.shape;
        ((n * s.c + c) * s.h + y) * s.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// The `(h, w)` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_shape(op, other.shape)?;
        Ok(Tensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_shape("add_assign", other.shape)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = *a + b);
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::lit(self.len() as f64)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan))
                .collect(),
        }
    }

    /// Sample `n` as a batch of one.
    pub fn sample(&self, n: usize) -> Self {
        let len = self.shape.c * self.shape.plane();
        Tensor {
            shape: self.shape.with_n(1),
            data: self.data[n * len..(n + 1) * len].to_vec(),
        }
    }

    /// Channel `c` of every sample as a single-channel tensor.
    pub fn channel(&self, c: usize) -> Self {
        let mut out = Tensor::zeros(self.shape.with_c(1));
        for n in 0..self.shape.n {
            out.plane_mut(n, 0).copy_from_slice(self.plane(n, c));
        }
        out
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = match parts.first() {
            Some(p) => p.shape,
            None => return shape_err("stack", "no tensors to stack"),
        };
        let mut data = Vec::with_capacity(first.len() * parts.len());
        let mut n = 0;
        for p in parts {
            if p.shape.c != first.c || p.shape.h != first.h || p.shape.w != first.w {
                return shape_err("stack", format!("{} vs {}", p.shape, first));
            }
            n += p.shape.n;
            data.extend_from_slice(&p.data);
        }
        Self::from_vec(first.with_n(n), data)
    }

    pub fn expect_shape(&self, op: &'static str, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return shape_err(op, format!("got {}, expected {}", self.shape, expected));
        }
        Ok(())
    }
}

impl<T: Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<_> = self.data.iter().take(8).collect();
        write!(f, "Tensor({}, {:?}{})", self.shape, preview, if self.data.len() > 8 { "..." } else { "" })
    }
}

impl<T: Real> TryFrom<(Shape, Vec<T>)> for Tensor<T> {
    type Error = Error;

    fn try_from((shape, data): (Shape, Vec<T>)) -> Result<Self> {
        Tensor::from_vec(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::from_vec(Shape::new(1, 0, 2, 2), vec![]).is_err());
        let t = Tensor::from_vec(Shape::new(1, 2, 1, 2), vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.at(0, 1, 0, 0), 3.0);
        assert_eq!(t.plane(0, 1), &[3.0, 4.0]);
    }

    #[test]
    fn stack_and_sample_are_inverse() {
        let a = Tensor::<f32>::from_fn(Shape::new(1, 2, 3, 3), |_, c, y, x| (c * 9 + y * 3 + x) as f32);
        let b = a.scale(-1.0);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), Shape::new(2, 2, 3, 3));
        assert_eq!(s.sample(0), a);
        assert_eq!(s.sample(1), b);
    }

    #[test]
    fn cast_round_trips_f32_through_f64() {
        let a = Tensor::<f32>::from_fn(Shape::new(1, 1, 2, 3), |_, _, y, x| 0.1 * (y * 3 + x) as f32);
        assert_eq!(a.cast::<f64>().cast::<f32>(), a);
    }
}
