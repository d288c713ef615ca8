//! Feathering block: a learnable guided filter that turns coarse score maps
//! into an alpha matte.
//!
//! A guided-filter style feature stack goes through two 3×3 convolutions
//! that predict per-pixel coefficients `(a, b, c)`; the matte is the linear
//! transform `α = a·S_F + b·S_B + c`, clamped to `[0, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::ops::{box_filter, box_filter_backward, channel_concat, channel_split, conv2d_backward, relu, relu_backward, ConvParams, ConvSpec};
use crate::paramset::ParamSet;
use crate::segnet::{init_conv, ScoreMaps};
use crate::tensor::{Real, Tensor};

/// Channels of the feature stack: `I (3) | S_F, S_B (2) | I⊙I (3) | I⊙S_F (3)`.
pub const STACK_CHANNELS: usize = 11;

pub const DEFAULT_HIDDEN: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatherParams<T = f32> {
    pub conv1: ConvParams<T>,
    pub conv2: ConvParams<T>,
    /// Window radius the predicted coefficients are averaged over before
    /// they are applied (0 = used as predicted). Not a trainable value.
    pub smooth: usize,
}

impl<T: Real> FeatherParams<T> {
    pub fn zeros(hidden: usize) -> Result<Self> {
        Ok(FeatherParams {
            conv1: ConvParams::zeros(ConvSpec::same(STACK_CHANNELS, hidden, 3, 1)?),
            conv2: ConvParams::zeros(ConvSpec::same(hidden, 3, 3, 1)?),
            smooth: 0,
        })
    }

    pub fn hidden(&self) -> usize {
        self.conv1.spec.out_channels
    }

    pub fn zeros_like(&self) -> Self {
        FeatherParams {
            conv1: ConvParams::zeros(self.conv1.spec),
            conv2: ConvParams::zeros(self.conv2.spec),
            smooth: self.smooth,
        }
    }

    pub fn cast<U: Real>(&self) -> FeatherParams<U> {
        FeatherParams {
            conv1: self.conv1.cast(),
            conv2: self.conv2.cast(),
            smooth: self.smooth,
        }
    }
}

impl<T: Real> ParamSet<T> for FeatherParams<T> {
    fn arrays(&self) -> Vec<&[T]> {
        let mut v = self.conv1.arrays();
        v.extend(self.conv2.arrays());
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.conv1.arrays_mut();
        v.extend(self.conv2.arrays_mut());
        v
    }
}

/// Scale of the output layer's random weights at initialisation.
const OUTPUT_INIT_SCALE: f32 = 0.01;

/// Fan-in-scaled uniform first layer; the output layer starts near
/// `(a, b, c) = (1, 0, 0)`, i.e. `α ≈ S_F`, so the clamp is not saturated
/// at the start of training.
pub fn feather_init(hidden: usize, seed: u64) -> Result<FeatherParams<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = FeatherParams::<f32>::zeros(hidden)?;
    let conv1 = init_conv(z.conv1.spec, &mut rng);
    let mut conv2 = init_conv(z.conv2.spec, &mut rng);
    conv2.weight.data_mut().iter_mut().for_each(|w| *w *= OUTPUT_INIT_SCALE);
    conv2.bias = vec![1.0, 0.0, 0.0];
    Ok(FeatherParams { conv1, conv2, smooth: 0 })
}

/// Per-pixel linear coefficients, each `(n, 1, h, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMaps<T = f32> {
    pub a: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Tensor<T>,
}

/// The output matte and its value before clamping.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMatte<T = f32> {
    pub alpha: Tensor<T>,
    pub raw: Tensor<T>,
}

fn check_scores<T: Real>(op: &'static str, image: &Tensor<T>, scores: &ScoreMaps<T>) -> Result<()> {
    let s = image.shape();
    if !scores.s_f.shape().same_nhw(&s) || scores.s_f.shape() != scores.s_b.shape() || scores.s_f.shape().c != 1 {
        return shape_err(op, format!("scores {} / {} vs input {s}", scores.s_f.shape(), scores.s_b.shape()));
    }
    Ok(())
}

/// Builds the 11-channel feature stack from an RGB image and score maps.
pub fn feather_inputs<T: Real>(image: &Tensor<T>, scores: &ScoreMaps<T>) -> Result<Tensor<T>> {
    if image.shape().c != 3 {
        return shape_err("feather_inputs", format!("expected a 3-channel image, got {}", image.shape()));
    }
    check_scores("feather_inputs", image, scores)?;
    let sq = image.map(|v| v * v);
    let mut prod = image.clone();
    for n in 0..image.shape().n {
        let sf = scores.s_f.plane(n, 0).to_vec();
        for c in 0..3 {
            prod.plane_mut(n, c).iter_mut().zip(&sf).for_each(|(v, &f)| *v = *v * f);
        }
    }
    channel_concat(&[image, &scores.s_f, &scores.s_b, &sq, &prod])
}

/// Activations of the two-convolution subnet.
#[derive(Clone, Debug)]
pub struct FeatherCache<T = f32> {
    hidden: Tensor<T>,
}

pub fn feather_forward_cached<T: Real>(
    stack: &Tensor<T>,
    params: &FeatherParams<T>,
) -> Result<(CoefficientMaps<T>, FeatherCache<T>)> {
    if stack.shape().c != STACK_CHANNELS {
        return shape_err("feather_forward", format!("stack must have {STACK_CHANNELS} channels, got {}", stack.shape()));
    }
    let hidden = relu(&params.conv1.forward(stack)?);
    let out = params.conv2.forward(&hidden)?;
    let mut parts = channel_split(&out, &[1, 1, 1])?.into_iter();
    let (a, b, c) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
    let coeffs = smooth_coefficients(&CoefficientMaps { a, b, c }, params.smooth);
    Ok((coeffs, FeatherCache { hidden }))
}

/// conv 3×3 → ReLU → conv 3×3 → `(a, b, c)`, spatial size preserved, then
/// window-averaged when `params.smooth > 0`.
pub fn feather_forward<T: Real>(stack: &Tensor<T>, params: &FeatherParams<T>) -> Result<CoefficientMaps<T>> {
    feather_forward_cached(stack, params).map(|(c, _)| c)
}

/// `α = clamp(a·S_F + b·S_B + c, 0, 1)`.
pub fn apply_linear_matte<T: Real>(coeffs: &CoefficientMaps<T>, scores: &ScoreMaps<T>) -> Result<AlphaMatte<T>> {
    let shape = coeffs.a.shape();
    for t in [&coeffs.b, &coeffs.c, &scores.s_f, &scores.s_b] {
        t.expect_shape("apply_linear_matte", shape)?;
    }
    let raw = Tensor::from_vec(
        shape,
        (0..shape.len())
            .map(|i| {
                coeffs.a.data()[i] * scores.s_f.data()[i] + coeffs.b.data()[i] * scores.s_b.data()[i] + coeffs.c.data()[i]
            })
            .collect(),
    )?;
    let alpha = raw.map(|v| v.max(T::zero()).min(T::one()));
    Ok(AlphaMatte { alpha, raw })
}

/// Window-averages each coefficient map with radius `r`.
pub fn smooth_coefficients<T: Real>(coeffs: &CoefficientMaps<T>, radius: usize) -> CoefficientMaps<T> {
    CoefficientMaps {
        a: box_filter(&coeffs.a, radius),
        b: box_filter(&coeffs.b, radius),
        c: box_filter(&coeffs.c, radius),
    }
}

/// Gradients produced by [`feather_backward`].
#[derive(Clone, Debug)]
pub struct FeatherGrads<T = f32> {
    pub params: FeatherParams<T>,
    /// Gradient on the score maps through the linear matte only.
    pub s_f: Tensor<T>,
    pub s_b: Tensor<T>,
    /// Gradient on the 11-channel feature stack.
    pub stack: Tensor<T>,
}

impl<T: Real> FeatherGrads<T> {
    /// Total gradient on `(S_F, S_B)`, adding the paths through the feature
    /// stack (the score channels and the `I⊙S_F` product).
    pub fn score_grads(&self, image: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut gf = self.s_f.clone();
        let mut gb = self.s_b.clone();
        let n = image.shape().n;
        for k in 0..n {
            let gs = &self.stack;
            gf.plane_mut(k, 0).iter_mut().zip(gs.plane(k, 3)).for_each(|(g, &v)| *g = *g + v);
            gb.plane_mut(k, 0).iter_mut().zip(gs.plane(k, 4)).for_each(|(g, &v)| *g = *g + v);
            for c in 0..3 {
                let img = image.plane(k, c);
                let gprod = gs.plane(k, 8 + c);
                for (i, g) in gf.plane_mut(k, 0).iter_mut().enumerate() {
                    *g = *g + gprod[i] * img[i];
                }
            }
        }
        Ok((gf, gb))
    }
}

/// Reverse pass through [`feather_forward`] and [`apply_linear_matte`].
/// The clamp passes gradient only where the raw matte lies strictly inside
/// `(0, 1)`.
pub fn feather_backward<T: Real>(
    stack: &Tensor<T>,
    params: &FeatherParams<T>,
    scores: &ScoreMaps<T>,
    grad_alpha: &Tensor<T>,
) -> Result<FeatherGrads<T>> {
    let (coeffs, cache) = feather_forward_cached(stack, params)?;
    let matte = apply_linear_matte(&coeffs, scores)?;
    grad_alpha.expect_shape("feather_backward", matte.raw.shape())?;
    let g_raw = matte.raw.zip_map(grad_alpha, "feather_backward", |r, g| {
        if r > T::zero() && r < T::one() {
            g
        } else {
            T::zero()
        }
    })?;
    let ga = g_raw.mul(&scores.s_f)?;
    let gb = g_raw.mul(&scores.s_b)?;
    let s_f = g_raw.mul(&coeffs.a)?;
    let s_b = g_raw.mul(&coeffs.b)?;
    let unsmooth = |g: &Tensor<T>| box_filter_backward(g, params.smooth);
    let g_out = channel_concat(&[&unsmooth(&ga), &unsmooth(&gb), &unsmooth(&g_raw)])?;

    let g2 = conv2d_backward(&cache.hidden, &params.conv2.weight, &params.conv2.spec, &g_out)?;
    let g_hidden = relu_backward(&cache.hidden, &g2.input)?;
    let g1 = conv2d_backward(stack, &params.conv1.weight, &params.conv1.spec, &g_hidden)?;
    let mut grads = params.zeros_like();
    grads.conv1.weight = g1.weight;
    grads.conv1.bias = g1.bias;
    grads.conv2.weight = g2.weight;
    grads.conv2.bias = g2.bias;
    Ok(FeatherGrads {
        params: grads,
        s_f,
        s_b,
        stack: g1.input,
    })
}
