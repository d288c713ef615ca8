//! 2-D cross-correlation with stride, zero padding and dilation.

use crate::error::{shape_err, Error, Result};
use crate::parallel;
use crate::tensor::{Real, Shape, Tensor};

/// Geometry of one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Self> {
        let spec = ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            dilation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Stride-1 `k`×`k` convolution that preserves spatial size.
    pub fn same(in_channels: usize, out_channels: usize, k: usize, dilation: usize) -> Result<Self> {
        Self::new(in_channels, out_channels, (k, k), 1, dilation * (k / 2), dilation)
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel;
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument(format!("conv channels must be positive: {self:?}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidArgument(format!("conv kernel must be odd: {self:?}")));
        }
        if self.stride == 0 || self.dilation == 0 {
            return Err(Error::InvalidArgument(format!("stride and dilation must be >= 1: {self:?}")));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel.0, self.kernel.1)
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().len() + self.out_channels
    }

    /// Spatial footprint of the dilated kernel, `(dilation·(k−1) + 1)` per axis.
    pub fn extent(&self) -> (usize, usize) {
        (
            self.dilation * (self.kernel.0 - 1) + 1,
            self.dilation * (self.kernel.1 - 1) + 1,
        )
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (eh, ew) = self.extent();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < eh || pw < ew {
            return shape_err("conv2d", format!("input {h}x{w} smaller than kernel extent {eh}x{ew}"));
        }
        Ok(((ph - eh) / self.stride + 1, (pw - ew) / self.stride + 1))
    }
}

/// Weights and bias of one convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(spec: ConvSpec) -> Self {
        ConvParams {
            spec,
            weight: Tensor::zeros(spec.weight_shape()),
            bias: vec![T::zero(); spec.out_channels],
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(input, &self.weight, &self.bias, &self.spec)
    }

    pub fn cast<U: Real>(&self) -> ConvParams<U> {
        ConvParams {
            spec: self.spec,
            weight: self.weight.cast(),
            bias: self.bias.iter().map(|b| U::lit(b.to_f64().unwrap_or(f64::NAN))).collect(),
        }
    }
}

/// Gradients of a convolution with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

/// Offsets of one kernel tap and the output columns it touches.
#[derive(Clone, Copy)]
struct Tap {
    dy: isize,
    dx: isize,
    x_lo: usize,
    x_hi: usize,
}

impl Tap {
    fn new(spec: &ConvSpec, ky: usize, kx: usize, w: usize, ow: usize) -> Self {
        let dy = (ky * spec.dilation) as isize - spec.padding as isize;
        let dx = (kx * spec.dilation) as isize - spec.padding as isize;
        let s = spec.stride as isize;
        // 0 <= ox·s + dx < w
        let lo = if dx < 0 { ((-dx) + s - 1) / s } else { 0 };
        let last = w as isize - 1 - dx;
        let hi = if last < 0 { 0 } else { (last / s + 1).min(ow as isize) };
        Tap {
            dy,
            dx,
            x_lo: lo as usize,
            x_hi: hi.max(lo) as usize,
        }
    }

    #[inline]
    fn input_row(&self, oy: usize, stride: usize, h: usize) -> Option<usize> {
        let iy = (oy * stride) as isize + self.dy;
        (iy >= 0 && (iy as usize) < h).then_some(iy as usize)
    }
}

fn check_conv<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T], spec: &ConvSpec) -> Result<(usize, usize)> {
    spec.validate()?;
    let s = input.shape();
    if s.c != spec.in_channels {
        return shape_err(
            "conv2d",
            format!("input has {} channels, spec expects {}", s.c, spec.in_channels),
        );
    }
    if weights.shape() != spec.weight_shape() {
        return shape_err(
            "conv2d",
            format!("weights {} do not match spec {}", weights.shape(), spec.weight_shape()),
        );
    }
    if bias.len() != spec.out_channels {
        return shape_err("conv2d", format!("bias has {} entries, expected {}", bias.len(), spec.out_channels));
    }
    spec.output_hw(s.h, s.w)
}

/// Zero-padded, strided, dilated cross-correlation.
///
/// Output extent per axis is `(h + 2·pad − dilation·(k−1) − 1) / stride + 1`.
pub fn conv2d<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T], spec: &ConvSpec) -> Result<Tensor<T>> {
    let (oh, ow) = check_conv(input, weights, bias, spec)?;
    let s = input.shape();
    let (kh, kw) = spec.kernel;
    let taps: Vec<Tap> = (0..kh * kw).map(|t| Tap::new(spec, t / kw, t % kw, s.w, ow)).collect();
    let out_shape = Shape::new(s.n, spec.out_channels, oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let stride = spec.stride;
    let wdata = weights.data();

    parallel::for_each_chunk(out.data_mut(), oh * ow, |plane_idx, plane| {
        let n = plane_idx / spec.out_channels;
        let oc = plane_idx % spec.out_channels;
        plane.iter_mut().for_each(|v| *v = bias[oc]);
        for ic in 0..spec.in_channels {
            let src = input.plane(n, ic);
            let wbase = (oc * spec.in_channels + ic) * kh * kw;
            for (t, tap) in taps.iter().enumerate() {
                let wv = wdata[wbase + t];
                if wv == T::zero() || tap.x_lo >= tap.x_hi {
                    continue;
                }
                for oy in 0..oh {
                    let Some(iy) = tap.input_row(oy, stride, s.h) else { continue };
                    let orow = &mut plane[oy * ow + tap.x_lo..oy * ow + tap.x_hi];
                    let start = (iy * s.w) as isize + (tap.x_lo * stride) as isize + tap.dx;
                    let irow = &src[start as usize..];
                    if stride == 1 {
                        for (o, &i) in orow.iter_mut().zip(irow) {
                            *o = *o + wv * i;
                        }
                    } else {
                        for (k, o) in orow.iter_mut().enumerate() {
                            *o = *o + wv * irow[k * stride];
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Reverse-mode gradients of [`conv2d`] given the upstream gradient.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let zero_bias = vec![T::zero(); spec.out_channels];
    let (oh, ow) = check_conv(input, weights, &zero_bias, spec)?;
    let s = input.shape();
    grad_out.expect_shape("conv2d_backward", Shape::new(s.n, spec.out_channels, oh, ow))?;
    let (kh, kw) = spec.kernel;
    let taps: Vec<Tap> = (0..kh * kw).map(|t| Tap::new(spec, t / kw, t % kw, s.w, ow)).collect();
    let stride = spec.stride;
    let wdata = weights.data();

    let bias: Vec<T> = (0..spec.out_channels)
        .map(|oc| (0..s.n).map(|n| grad_out.plane(n, oc).iter().copied().sum::<T>()).sum())
        .collect();

    // dL/dW[oc, ic, ky, kx] = Σ_n Σ_(oy,ox) g[n, oc, oy, ox] · x[n, ic, iy, ix]
    let mut grad_w = Tensor::zeros(spec.weight_shape());
    parallel::for_each_chunk(grad_w.data_mut(), spec.in_channels * kh * kw, |oc, wchunk| {
        for n in 0..s.n {
            let g = grad_out.plane(n, oc);
            for ic in 0..spec.in_channels {
                let src = input.plane(n, ic);
                for (t, tap) in taps.iter().enumerate() {
                    if tap.x_lo >= tap.x_hi {
                        continue;
                    }
                    let mut acc = T::zero();
                    for oy in 0..oh {
                        let Some(iy) = tap.input_row(oy, stride, s.h) else { continue };
                        let grow = &g[oy * ow + tap.x_lo..oy * ow + tap.x_hi];
                        let start = ((iy * s.w) as isize + (tap.x_lo * stride) as isize + tap.dx) as usize;
                        let irow = &src[start..];
                        if stride == 1 {
                            for (&gv, &iv) in grow.iter().zip(irow) {
                                acc = acc + gv * iv;
                            }
                        } else {
                            for (k, &gv) in grow.iter().enumerate() {
                                acc = acc + gv * irow[k * stride];
                            }
                        }
                    }
                    let slot = &mut wchunk[ic * kh * kw + t];
                    *slot = *slot + acc;
                }
            }
        }
    });

    // dL/dx[n, ic, iy, ix] = Σ_oc Σ_taps W · g, scattered back through each tap.
    let mut grad_in = Tensor::zeros(s);
    parallel::for_each_chunk(grad_in.data_mut(), s.plane(), |plane_idx, gplane| {
        let n = plane_idx / s.c;
        let ic = plane_idx % s.c;
        for oc in 0..spec.out_channels {
            let g = grad_out.plane(n, oc);
            let wbase = (oc * spec.in_channels + ic) * kh * kw;
            for (t, tap) in taps.iter().enumerate() {
                let wv = wdata[wbase + t];
                if wv == T::zero() || tap.x_lo >= tap.x_hi {
                    continue;
                }
                for oy in 0..oh {
                    let Some(iy) = tap.input_row(oy, stride, s.h) else { continue };
                    let grow = &g[oy * ow + tap.x_lo..oy * ow + tap.x_hi];
                    let start = ((iy * s.w) as isize + (tap.x_lo * stride) as isize + tap.dx) as usize;
                    let irow = &mut gplane[start..];
                    if stride == 1 {
                        for (i, &gv) in irow.iter_mut().zip(grow) {
                            *i = *i + wv * gv;
                        }
                    } else {
                        for (k, &gv) in grow.iter().enumerate() {
                            irow[k * stride] = irow[k * stride] + wv * gv;
                        }
                    }
                }
            }
        }
    });

    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    /// Direct six-loop reference.
    fn reference(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], spec: &ConvSpec) -> Tensor<f64> {
        let s = x.shape();
        let (oh, ow) = spec.output_hw(s.h, s.w).unwrap();
        Tensor::from_fn(Shape::new(s.n, spec.out_channels, oh, ow), |n, oc, oy, ox| {
            let mut acc = b[oc];
            for ic in 0..spec.in_channels {
                for ky in 0..spec.kernel.0 {
                    for kx in 0..spec.kernel.1 {
                        let iy = (oy * spec.stride + ky * spec.dilation) as isize - spec.padding as isize;
                        let ix = (ox * spec.stride + kx * spec.dilation) as isize - spec.padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                            acc += w.at(oc, ic, ky, kx) * x.at(n, ic, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn zero_input_passes_bias() {
        let spec = ConvSpec::new(1, 1, (3, 3), 1, 0, 1).unwrap();
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 3, 3));
        let w = Tensor::full(spec.weight_shape(), 0.7f32);
        let y = conv2d(&x, &w, &[0.5], &spec).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(y.data(), &[0.5]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let spec = ConvSpec::new(1, 1, (1, 1), 1, 0, 1).unwrap();
        let x = Tensor::<f32>::from_fn(Shape::new(1, 1, 3, 3), |_, _, y, x| (y * 3 + x) as f32 - 4.0);
        let w = Tensor::full(spec.weight_shape(), 1.0f32);
        assert_eq!(conv2d(&x, &w, &[0.0], &spec).unwrap(), x);
    }

    #[test]
    fn dilated_matches_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = ConvSpec::new(2, 3, (3, 3), 1, 2, 2).unwrap();
        let x = random(Shape::new(1, 2, 5, 5), &mut rng);
        let w = random(spec.weight_shape(), &mut rng);
        let b = [0.1, -0.2, 0.3];
        let got = conv2d(&x, &w, &b, &spec).unwrap();
        let want = reference(&x, &w, &b, &spec);
        assert_eq!(got.shape(), Shape::new(1, 3, 5, 5));
        assert!(got.max_abs_diff(&want) < 1e-6);
    }

    #[test]
    fn strided_padded_shapes_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(h, w, stride, pad, dil) in &[(7, 6, 2, 1, 1), (9, 9, 3, 0, 2), (8, 5, 2, 2, 1), (4, 4, 1, 0, 1)] {
            let spec = ConvSpec::new(2, 2, (3, 3), stride, pad, dil).unwrap();
            let x = random(Shape::new(2, 2, h, w), &mut rng);
            let wt = random(spec.weight_shape(), &mut rng);
            let got = conv2d(&x, &wt, &[0.0, 1.0], &spec).unwrap();
            let want = reference(&x, &wt, &[0.0, 1.0], &spec);
            assert_eq!(got.shape(), want.shape());
            assert!(got.max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let spec = ConvSpec::same(2, 1, 3, 1).unwrap();
        let x = Tensor::<f32>::zeros(Shape::new(1, 3, 4, 4));
        let w = Tensor::zeros(spec.weight_shape());
        assert!(matches!(conv2d(&x, &w, &[0.0], &spec), Err(Error::Shape { .. })));
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let bad_w = Tensor::zeros(Shape::new(1, 2, 1, 1));
        assert!(conv2d(&x, &bad_w, &[0.0], &spec).is_err());
        assert!(ConvSpec::new(1, 1, (2, 3), 1, 0, 1).is_err());
        assert!(ConvSpec::new(1, 1, (3, 3), 0, 0, 1).is_err());
    }

    #[test]
    fn backward_scalar_case() {
        let spec = ConvSpec::new(1, 1, (1, 1), 1, 0, 1).unwrap();
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![3.0f64]).unwrap();
        let w = Tensor::from_vec(spec.weight_shape(), vec![-2.0f64]).unwrap();
        let g = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![0.5f64]).unwrap();
        let grads = conv2d_backward(&x, &w, &spec, &g).unwrap();
        assert_eq!(grads.input.data(), &[-1.0]);
        assert_eq!(grads.weight.data(), &[1.5]);
        assert_eq!(grads.bias, vec![0.5]);
    }

    #[test]
    fn backward_of_zero_grad_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ConvSpec::new(2, 3, (3, 3), 2, 1, 1).unwrap();
        let x = random(Shape::new(1, 2, 6, 6), &mut rng);
        let w = random(spec.weight_shape(), &mut rng);
        let g = Tensor::zeros(Shape::new(1, 3, 3, 3));
        let grads = conv2d_backward(&x, &w, &spec, &g).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.weight.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.iter().all(|&v| v == 0.0));
        assert!(conv2d_backward(&x, &w, &spec, &Tensor::zeros(Shape::new(1, 3, 6, 6))).is_err());
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <conv(x), g> = <x, dx> when bias is zero
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = ConvSpec::new(3, 2, (3, 3), 2, 2, 2).unwrap();
        let x = random(Shape::new(2, 3, 9, 8), &mut rng);
        let w = random(spec.weight_shape(), &mut rng);
        let y = conv2d(&x, &w, &[0.0, 0.0], &spec).unwrap();
        let g = random(y.shape(), &mut rng);
        let grads = conv2d_backward(&x, &w, &spec, &g).unwrap();
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(grads.input.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        let rhs_w: f64 = w.data().iter().zip(grads.weight.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_w).abs() < 1e-10);
    }
}
