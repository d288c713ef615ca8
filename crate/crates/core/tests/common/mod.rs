//! Helpers shared by the integration tests: random tensors and the
//! per-operator finite-difference checks.

#![allow(dead_code)]

use mattekit::feathering::{apply_linear_matte, feather_backward, feather_forward, feather_inputs, FeatherParams};
use mattekit::gradcheck::{grad_check, project, projection, GradCheck};
use mattekit::ops::{
    bilinear_resize, bilinear_resize_backward, conv2d, conv2d_backward, maxpool2d, maxpool2d_backward,
    softmax_channels, softmax_channels_backward, ConvParams, ConvSpec,
};
use mattekit::paramset::ParamSet;
use mattekit::segnet::{ldn_backward, ldn_forward, ldn_init, LdnConfig, LdnParams, ScoreMaps};
use mattekit::training::{cross_entropy_mask, loss_alpha, loss_color};
use mattekit::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Below this magnitude a gradient is judged on absolute error.
pub const FD_FLOOR: f64 = 1e-4;
pub const SEEDS: u64 = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: Shape, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(lo..hi))
}

fn with_data(shape: Shape, x: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, x.to_vec()).unwrap()
}

fn check(f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> GradCheck {
    grad_check(f, x, analytic, FD_STEP, FD_FLOOR)
}

/// Worst check over a list of named sub-checks.
fn worst(checks: impl IntoIterator<Item = GradCheck>) -> GradCheck {
    checks
        .into_iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap()
}

fn random_conv(rng: &mut ChaCha8Rng) -> (Tensor<f64>, ConvParams<f64>) {
    let mut odd = || [1, 3][rng.random_range(0..2)];
    let kernel = (odd(), odd());
    let spec = ConvSpec::new(
        rng.random_range(1..=3),
        rng.random_range(1..=3),
        kernel,
        rng.random_range(1..=2),
        rng.random_range(0..=2),
        rng.random_range(1..=2),
    )
    .unwrap();
    let x = uniform(Shape::new(rng.random_range(1..=2), spec.in_channels, rng.random_range(6..=9), rng.random_range(6..=9)), -1.0, 1.0, rng);
    let mut p = ConvParams::zeros(spec);
    p.weight = uniform(spec.weight_shape(), -1.0, 1.0, rng);
    p.bias = (0..spec.out_channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    (x, p)
}

/// `(input, weight, bias)` gradients of a random convolution.
pub fn conv_check(seed: u64, weight_grad_scale: f64) -> GradCheck {
    let mut r = rng(seed);
    let (x, p) = random_conv(&mut r);
    let y = conv2d(&x, &p.weight, &p.bias, &p.spec).unwrap();
    let proj = projection(y.len(), seed);
    let g = conv2d_backward(&x, &p.weight, &p.spec, &Tensor::from_vec(y.shape(), proj.clone()).unwrap()).unwrap();
    let (xs, ws) = (x.shape(), p.weight.shape());
    let gw: Vec<f64> = g.weight.data().iter().map(|v| v * weight_grad_scale).collect();
    worst([
        check(|v| project(&conv2d(&with_data(xs, v), &p.weight, &p.bias, &p.spec).unwrap(), &proj), x.data(), g.input.data()),
        check(|v| project(&conv2d(&x, &with_data(ws, v), &p.bias, &p.spec).unwrap(), &proj), p.weight.data(), &gw),
        check(|v| project(&conv2d(&x, &p.weight, v, &p.spec).unwrap(), &proj), &p.bias, &g.bias),
    ])
}

pub fn maxpool_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let sh = Shape::new(r.random_range(1..=2), r.random_range(1..=3), r.random_range(3..=9), r.random_range(3..=9));
    let x = uniform(sh, -1.0, 1.0, &mut r);
    let (y, idx) = maxpool2d(&x);
    let proj = projection(y.len(), seed);
    let g = maxpool2d_backward(&idx, &Tensor::from_vec(y.shape(), proj.clone()).unwrap()).unwrap();
    check(|v| project(&maxpool2d(&with_data(sh, v)).0, &proj), x.data(), g.data())
}

pub fn bilinear_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let sh = Shape::new(r.random_range(1..=2), r.random_range(1..=2), r.random_range(2..=7), r.random_range(2..=7));
    let (oh, ow) = (r.random_range(1..=14), r.random_range(1..=14));
    let x = uniform(sh, -1.0, 1.0, &mut r);
    let y = bilinear_resize(&x, oh, ow).unwrap();
    let proj = projection(y.len(), seed);
    let g = bilinear_resize_backward(&Tensor::from_vec(y.shape(), proj.clone()).unwrap(), sh.h, sh.w).unwrap();
    check(|v| project(&bilinear_resize(&with_data(sh, v), oh, ow).unwrap(), &proj), x.data(), g.data())
}

pub fn softmax_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let sh = Shape::new(r.random_range(1..=2), r.random_range(2..=4), r.random_range(2..=5), r.random_range(2..=5));
    let x = uniform(sh, -3.0, 3.0, &mut r);
    let y = softmax_channels(&x);
    let proj = projection(y.len(), seed);
    let g = softmax_channels_backward(&y, &Tensor::from_vec(y.shape(), proj.clone()).unwrap()).unwrap();
    check(|v| project(&softmax_channels(&with_data(sh, v)), &proj), x.data(), g.data())
}

/// Feathering parameters scaled so most raw matte values fall inside the
/// clamp's linear range.
fn feather_setup(seed: u64) -> (Tensor<f64>, ScoreMaps<f64>, FeatherParams<f64>) {
    let mut r = rng(seed);
    let (h, w) = (r.random_range(4..=7), r.random_range(4..=7));
    let image = uniform(Shape::new(1, 3, h, w), 0.0, 1.0, &mut r);
    let s_f = uniform(Shape::new(1, 1, h, w), 0.05, 0.95, &mut r);
    let s_b = s_f.map(|v| 1.0 - v);
    let scores = ScoreMaps {
        logits: Tensor::zeros(Shape::new(1, 2, h, w)),
        s_f,
        s_b,
    };
    let mut params = FeatherParams::<f64>::zeros(r.random_range(2..=5)).unwrap();
    let flat: Vec<f64> = (0..params.param_count()).map(|_| r.random_range(-0.15..0.15)).collect();
    params.set_flat(&flat);
    params.conv2.bias = vec![0.5, 0.3, 0.2];
    params.smooth = r.random_range(0..=2);
    (image, scores, params)
}

fn feather_alpha(image: &Tensor<f64>, scores: &ScoreMaps<f64>, params: &FeatherParams<f64>) -> Tensor<f64> {
    let stack = feather_inputs(image, scores).unwrap();
    apply_linear_matte(&feather_forward(&stack, params).unwrap(), scores).unwrap().alpha
}

/// Gradients of the feathering chain (stack, two convolutions, linear
/// matte, clamp) w.r.t. its parameters and both score maps.
pub fn feathering_check(seed: u64) -> GradCheck {
    let (image, scores, params) = feather_setup(seed);
    let a = feather_alpha(&image, &scores, &params);
    let proj = projection(a.len(), seed);
    let stack = feather_inputs(&image, &scores).unwrap();
    let g = feather_backward(&stack, &params, &scores, &Tensor::from_vec(a.shape(), proj.clone()).unwrap()).unwrap();
    let (gf, gb) = g.score_grads(&image).unwrap();
    let sh = scores.s_f.shape();
    worst([
        check(
            |v| {
                let mut p = params.clone();
                p.set_flat(v);
                project(&feather_alpha(&image, &scores, &p), &proj)
            },
            &params.to_flat(),
            &g.params.to_flat(),
        ),
        check(
            |v| {
                let s = ScoreMaps {
                    s_f: with_data(sh, v),
                    ..scores.clone()
                };
                project(&feather_alpha(&image, &s, &params), &proj)
            },
            scores.s_f.data(),
            gf.data(),
        ),
        check(
            |v| {
                let s = ScoreMaps {
                    s_b: with_data(sh, v),
                    ..scores.clone()
                };
                project(&feather_alpha(&image, &s, &params), &proj)
            },
            scores.s_b.data(),
            gb.data(),
        ),
    ])
}

pub fn loss_alpha_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let sh = Shape::new(1, 1, 8, 8);
    let (p, t) = (uniform(sh, 0.0, 1.0, &mut r), uniform(sh, 0.0, 1.0, &mut r));
    let (_, g) = loss_alpha(&p, &t, 1e-3).unwrap();
    check(|v| loss_alpha(&with_data(sh, v), &t, 1e-3).unwrap().0, p.data(), g.data())
}

pub fn loss_color_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let sh = Shape::new(1, 1, 8, 8);
    let (p, t) = (uniform(sh, 0.0, 1.0, &mut r), uniform(sh, 0.0, 1.0, &mut r));
    let img = uniform(sh.with_c(3), 0.0, 1.0, &mut r);
    let (_, g) = loss_color(&p, &t, &img, 1e-3).unwrap();
    check(|v| loss_color(&with_data(sh, v), &t, &img, 1e-3).unwrap().0, p.data(), g.data())
}

pub fn cross_entropy_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let sh = Shape::new(2, 2, 5, 6);
    let logits = uniform(sh, -4.0, 4.0, &mut r);
    let mask = Tensor::from_fn(sh.with_c(1), |_, _, _, _| if r.random_bool(0.5) { 1.0 } else { 0.0 });
    let (_, g) = cross_entropy_mask(&logits, &mask).unwrap();
    check(|v| cross_entropy_mask(&with_data(sh, v), &mask).unwrap().0, logits.data(), g.data())
}

pub fn toy_ldn_config() -> LdnConfig {
    LdnConfig {
        initial_channels: 3,
        growth: 2,
        dilations: [1, 2, 1, 2],
        input_size: (16, 16),
    }
}

/// Parameter gradients of the whole segmentation network (reduced width).
pub fn ldn_check(seed: u64) -> GradCheck {
    let cfg = toy_ldn_config();
    let mut params: LdnParams<f64> = ldn_init(&cfg, seed).unwrap().cast();
    let mut r = rng(seed);
    // zero biases put pre-activations exactly on the ReLU kink over flat patches
    for conv in std::iter::once(&mut params.initial).chain(params.dense.iter_mut()).chain([&mut params.classifier]) {
        conv.bias.iter_mut().for_each(|b| *b = r.random_range(-0.1..0.1));
    }
    let image = uniform(Shape::new(1, 3, 16, 16), 0.0, 1.0, &mut r);
    let logits = ldn_forward(&image, &params).unwrap().logits;
    let proj = projection(logits.len(), seed);
    let g = ldn_backward(&image, &params, &Tensor::from_vec(logits.shape(), proj.clone()).unwrap()).unwrap();
    check(
        |v| {
            let mut p = params.clone();
            p.set_flat(v);
            project(&ldn_forward(&image, &p).unwrap().logits, &proj)
        },
        &params.to_flat(),
        &g.to_flat(),
    )
}

/// One named operator check, run over seeds `0..SEEDS`.
pub struct OpCheck {
    pub name: &'static str,
    pub run: fn(u64) -> GradCheck,
}

pub fn op_checks() -> Vec<OpCheck> {
    vec![
        OpCheck {
            name: "conv2d",
            run: |s| conv_check(s, 1.0),
        },
        OpCheck {
            name: "maxpool2d",
            run: maxpool_check,
        },
        OpCheck {
            name: "bilinear_resize",
            run: bilinear_check,
        },
        OpCheck {
            name: "softmax",
            run: softmax_check,
        },
        OpCheck {
            name: "feathering",
            run: feathering_check,
        },
        OpCheck {
            name: "loss_alpha",
            run: loss_alpha_check,
        },
        OpCheck {
            name: "loss_color",
            run: loss_color_check,
        },
        OpCheck {
            name: "cross_entropy",
            run: cross_entropy_check,
        },
        OpCheck {
            name: "segnet",
            run: ldn_check,
        },
    ]
}
