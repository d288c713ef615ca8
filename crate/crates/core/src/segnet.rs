//! Light dense segmentation network.
//!
//! ```text
//! image (3, h, w)
//!   ├─ conv 3×3 /2 ─ relu ─┐
//!   └─ maxpool 2×2 /2 ─────┴─ concat → (initial + 3, h/2, w/2)
//!        dense₁: conv 3×3 /2, dilation d₁ ─ relu            → (g, h/4, w/4)
//!        dense₂: conv 3×3, d₂ over [dense₁]            ─ relu
//!        dense₃: conv 3×3, d₃ over [dense₁, dense₂]    ─ relu
//!        dense₄: conv 3×3, d₄ over [dense₁..dense₃]    ─ relu
//!   concat [dense₁..dense₄] → conv 1×1 → 2 logits → upsample ×4 → softmax
//! ```
//!
//! Six convolutions and a single max-pool in total. Logit channel 0 is the
//! foreground score, channel 1 the background score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::ops::{
    bilinear_resize, bilinear_resize_backward, channel_concat, channel_split, conv2d_backward, maxpool2d, relu,
    relu_backward, softmax_channels, ConvParams, ConvSpec,
};
use crate::paramset::ParamSet;
use crate::tensor::{Real, Shape, Tensor};

/// Number of dilated layers in the dense block.
pub const DENSE_LAYERS: usize = 4;

/// Total spatial down-sampling between input and logit grid.
pub const DOWNSAMPLE: usize = 4;

/// Subtracted from every input value before the first layer; images are in [0, 1].
pub const INPUT_CENTER: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LdnConfig {
    /// Output channels of the initial strided convolution (the pooled RGB
    /// branch adds three more).
    pub initial_channels: usize,
    /// Output channels of every dense layer.
    pub growth: usize,
    pub dilations: [usize; DENSE_LAYERS],
    pub input_size: (usize, usize),
}

impl Default for LdnConfig {
    fn default() -> Self {
        LdnConfig {
            initial_channels: 13,
            growth: 12,
            dilations: [1, 2, 4, 8],
            input_size: (128, 128),
        }
    }
}

/// One node of the layer graph. `inputs` index earlier nodes; node 0 is
/// the input image.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNode {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Input,
    Conv { spec: ConvSpec, relu: bool },
    MaxPool,
    Concat,
    Upsample { factor: usize },
    Softmax,
}

/// Counts of layer types in a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Census {
    pub convolutions: usize,
    pub max_pools: usize,
}

impl LdnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_channels == 0 || self.growth == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config(format!("dilation rates must be positive: {:?}", self.dilations)));
        }
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % DOWNSAMPLE != 0 || w % DOWNSAMPLE != 0 {
            return Err(Error::Config(format!("input size {h}x{w} must be a positive multiple of {DOWNSAMPLE}")));
        }
        Ok(())
    }

    /// The network as a DAG, in execution order.
    pub fn layer_graph(&self) -> Vec<LayerNode> {
        let node = |name: &str, kind, inputs: Vec<usize>| LayerNode {
            name: name.to_string(),
            kind,
            inputs,
        };
        let block_in = self.initial_channels + 3;
        let mut g = vec![
            node("image", LayerKind::Input, vec![]),
            node(
                "initial_conv",
                LayerKind::Conv {
                    spec: ConvSpec {
                        in_channels: 3,
                        out_channels: self.initial_channels,
                        kernel: (3, 3),
                        stride: 2,
                        padding: 1,
                        dilation: 1,
                    },
                    relu: true,
                },
                vec![0],
            ),
            node("initial_pool", LayerKind::MaxPool, vec![0]),
            node("initial_concat", LayerKind::Concat, vec![1, 2]),
        ];
        let mut dense_nodes = Vec::new();
        for (k, &d) in self.dilations.iter().enumerate() {
            let (in_channels, stride, inputs) = if k == 0 {
                (block_in, 2, vec![3])
            } else {
                let idx = g.len();
                g.push(node(&format!("dense{}_input", k + 1), LayerKind::Concat, dense_nodes.clone()));
                (k * self.growth, 1, vec![idx])
            };
            let spec = ConvSpec {
                in_channels,
                out_channels: self.growth,
                kernel: (3, 3),
                stride,
                padding: d,
                dilation: d,
            };
            dense_nodes.push(g.len());
            g.push(node(&format!("dense{}", k + 1), LayerKind::Conv { spec, relu: true }, inputs));
        }
        let feat = g.len();
        g.push(node("dense_concat", LayerKind::Concat, dense_nodes));
        let cls = g.len();
        g.push(node(
            "classifier",
            LayerKind::Conv {
                spec: ConvSpec {
                    in_channels: DENSE_LAYERS * self.growth,
                    out_channels: 2,
                    kernel: (1, 1),
                    stride: 1,
                    padding: 0,
                    dilation: 1,
                },
                relu: false,
            },
            vec![feat],
        ));
        g.push(node("upsample", LayerKind::Upsample { factor: DOWNSAMPLE }, vec![cls]));
        let up = g.len() - 1;
        g.push(node("softmax", LayerKind::Softmax, vec![up]));
        g
    }

    /// Convolution specs in layer-table order: initial, dense₁..₄, classifier.
    pub fn conv_specs(&self) -> Vec<ConvSpec> {
        self.layer_graph()
            .into_iter()
            .filter_map(|n| match n.kind {
                LayerKind::Conv { spec, .. } => Some(spec),
                _ => None,
            })
            .collect()
    }

    pub fn census(&self) -> Census {
        census(&self.layer_graph())
    }

    /// Receptive field, in input pixels, of each dense layer's output.
    pub fn dense_receptive_fields(&self) -> [usize; DENSE_LAYERS] {
        let graph = self.layer_graph();
        // (receptive field, jump) per node
        let mut rf: Vec<(usize, usize)> = Vec::with_capacity(graph.len());
        for n in &graph {
            let v = match &n.kind {
                LayerKind::Input => (1, 1),
                LayerKind::Conv { spec, .. } => {
                    let (r, j) = rf[n.inputs[0]];
                    (r + (spec.extent().0 - 1) * j, j * spec.stride)
                }
                LayerKind::MaxPool => {
                    let (r, j) = rf[n.inputs[0]];
                    (r + j, j * 2)
                }
                LayerKind::Concat => n.inputs.iter().map(|&i| rf[i]).max().unwrap_or((1, 1)),
                LayerKind::Upsample { .. } | LayerKind::Softmax => rf[n.inputs[0]],
            };
            rf.push(v);
        }
        let mut out = [0; DENSE_LAYERS];
        for (k, slot) in out.iter_mut().enumerate() {
            let idx = graph.iter().position(|n| n.name == format!("dense{}", k + 1)).unwrap();
            *slot = rf[idx].0;
        }
        out
    }
}

pub fn census(graph: &[LayerNode]) -> Census {
    Census {
        convolutions: graph.iter().filter(|n| matches!(n.kind, LayerKind::Conv { .. })).count(),
        max_pools: graph.iter().filter(|n| matches!(n.kind, LayerKind::MaxPool)).count(),
    }
}

/// Weights of the segmentation network, in layer-table order.
#[derive(Clone, Debug, PartialEq)]
pub struct LdnParams<T = f32> {
    pub config: LdnConfig,
    pub initial: ConvParams<T>,
    pub dense: Vec<ConvParams<T>>,
    pub classifier: ConvParams<T>,
}

impl<T: Real> LdnParams<T> {
    pub fn zeros(config: &LdnConfig) -> Self {
        let specs = config.conv_specs();
        LdnParams {
            config: config.clone(),
            initial: ConvParams::zeros(specs[0]),
            dense: specs[1..=DENSE_LAYERS].iter().map(|&s| ConvParams::zeros(s)).collect(),
            classifier: ConvParams::zeros(specs[DENSE_LAYERS + 1]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    pub fn convs(&self) -> Vec<&ConvParams<T>> {
        std::iter::once(&self.initial)
            .chain(self.dense.iter())
            .chain(std::iter::once(&self.classifier))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> LdnParams<U> {
        LdnParams {
            config: self.config.clone(),
            initial: self.initial.cast(),
            dense: self.dense.iter().map(|c| c.cast()).collect(),
            classifier: self.classifier.cast(),
        }
    }
}

impl<T: Real> ParamSet<T> for LdnParams<T> {
    fn arrays(&self) -> Vec<&[T]> {
        self.convs().into_iter().flat_map(|c| c.arrays()).collect()
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.initial.arrays_mut();
        for d in &mut self.dense {
            v.extend(d.arrays_mut());
        }
        v.extend(self.classifier.arrays_mut());
        v
    }
}

/// Uniform `±sqrt(6 / fan_in)` weights and zero biases for one layer.
pub(crate) fn init_conv(spec: ConvSpec, rng: &mut ChaCha8Rng) -> ConvParams<f32> {
    let fan_in = (spec.in_channels * spec.kernel.0 * spec.kernel.1) as f64;
    let bound = (6.0 / fan_in).sqrt();
    let mut p = ConvParams::zeros(spec);
    for w in p.weight.data_mut() {
        *w = rng.random_range(-bound..bound) as f32;
    }
    p
}

/// Deterministic initialisation of all layers from `seed`.
pub fn ldn_init(config: &LdnConfig, seed: u64) -> Result<LdnParams<f32>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LdnParams::zeros(config);
    p.initial = init_conv(p.initial.spec, &mut rng);
    for d in &mut p.dense {
        *d = init_conv(d.spec, &mut rng);
    }
    p.classifier = init_conv(p.classifier.spec, &mut rng);
    Ok(p)
}

/// Foreground/background probabilities and the logits they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMaps<T = f32> {
    pub s_f: Tensor<T>,
    pub s_b: Tensor<T>,
    /// Full-resolution logits, channel 0 foreground.
    pub logits: Tensor<T>,
}

impl<T: Real> ScoreMaps<T> {
    /// Builds score maps from full-resolution two-channel logits.
    pub fn from_logits(logits: Tensor<T>) -> Result<Self> {
        if logits.shape().c != 2 {
            return shape_err("score_maps", format!("logits must have 2 channels, got {}", logits.shape()));
        }
        let probs = softmax_channels(&logits);
        Ok(ScoreMaps {
            s_f: probs.channel(0),
            s_b: probs.channel(1),
            logits,
        })
    }

    /// `[S_F, S_B]` stacked as channels.
    pub fn probs(&self) -> Tensor<T> {
        channel_concat(&[&self.s_f, &self.s_b]).expect("score maps share a shape")
    }

    /// Hard mask: 1 where the foreground score wins (ties go to foreground).
    pub fn argmax_mask(&self) -> Tensor<T> {
        self.s_f.zip_map(&self.s_b, "argmax", |f, b| if f >= b { T::one() } else { T::zero() }).unwrap()
    }

    pub fn sample(&self, n: usize) -> Self {
        ScoreMaps {
            s_f: self.s_f.sample(n),
            s_b: self.s_b.sample(n),
            logits: self.logits.sample(n),
        }
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LdnCache<T = f32> {
    /// Centered network input.
    pub image: Tensor<T>,
    initial_out: Tensor<T>,
    dense_in: Vec<Tensor<T>>,
    dense_out: Vec<Tensor<T>>,
    features: Tensor<T>,
    /// Logits on the down-sampled grid, before upsampling.
    pub coarse_logits: Tensor<T>,
}

fn check_image<T: Real>(image: &Tensor<T>) -> Result<()> {
    let s = image.shape();
    if s.c != 3 {
        return shape_err("ldn_forward", format!("expected a 3-channel image, got {s}"));
    }
    if s.h % DOWNSAMPLE != 0 || s.w % DOWNSAMPLE != 0 {
        return shape_err("ldn_forward", format!("image {}x{} not divisible by {DOWNSAMPLE}", s.h, s.w));
    }
    Ok(())
}

/// Runs the network, keeping the activations needed by [`ldn_backward_cached`].
pub fn ldn_forward_cached<T: Real>(image: &Tensor<T>, params: &LdnParams<T>) -> Result<(ScoreMaps<T>, LdnCache<T>)> {
    check_image(image)?;
    let s = image.shape();
    let center = T::lit(INPUT_CENTER);
    let image = &image.map(|v| v - center);
    let initial_out = relu(&params.initial.forward(image)?);
    let (pooled, _) = maxpool2d(image);
    let block_in = channel_concat(&[&initial_out, &pooled])?;

    let mut dense_in = Vec::with_capacity(DENSE_LAYERS);
    let mut dense_out: Vec<Tensor<T>> = Vec::with_capacity(DENSE_LAYERS);
    for (k, layer) in params.dense.iter().enumerate() {
        let input = if k == 0 {
            block_in.clone()
        } else {
            channel_concat(&dense_out.iter().collect::<Vec<_>>())?
        };
        let out = relu(&layer.forward(&input)?);
        dense_in.push(input);
        dense_out.push(out);
    }
    let features = channel_concat(&dense_out.iter().collect::<Vec<_>>())?;
    let coarse_logits = params.classifier.forward(&features)?;
    let logits = bilinear_resize(&coarse_logits, s.h, s.w)?;
    let scores = ScoreMaps::from_logits(logits)?;
    Ok((
        scores,
        LdnCache {
            image: image.clone(),
            initial_out,
            dense_in,
            dense_out,
            features,
            coarse_logits,
        },
    ))
}

/// Image `(n, 3, h, w)` with `h`, `w` divisible by 4 → score maps at `(h, w)`.
pub fn ldn_forward<T: Real>(image: &Tensor<T>, params: &LdnParams<T>) -> Result<ScoreMaps<T>> {
    ldn_forward_cached(image, params).map(|(s, _)| s)
}

/// Parameter gradients given the gradient on the full-resolution logits.
pub fn ldn_backward_cached<T: Real>(
    cache: &LdnCache<T>,
    params: &LdnParams<T>,
    grad_logits: &Tensor<T>,
) -> Result<LdnParams<T>> {
    let s = cache.image.shape();
    grad_logits.expect_shape("ldn_backward", s.with_c(2))?;
    let mut grads = params.zeros_like();
    let cs = cache.coarse_logits.shape();

    let grad_coarse = bilinear_resize_backward(grad_logits, cs.h, cs.w)?;
    let g = conv2d_backward(&cache.features, &params.classifier.weight, &params.classifier.spec, &grad_coarse)?;
    grads.classifier.weight = g.weight;
    grads.classifier.bias = g.bias;

    let growth = params.config.growth;
    let mut grad_dense: Vec<Tensor<T>> = channel_split(&g.input, &[growth; DENSE_LAYERS])?;
    let mut grad_block_in = None;
    for k in (0..DENSE_LAYERS).rev() {
        let layer = &params.dense[k];
        let pre = relu_backward(&cache.dense_out[k], &grad_dense[k])?;
        let g = conv2d_backward(&cache.dense_in[k], &layer.weight, &layer.spec, &pre)?;
        grads.dense[k].weight = g.weight;
        grads.dense[k].bias = g.bias;
        if k == 0 {
            grad_block_in = Some(g.input);
        } else {
            for (j, part) in channel_split(&g.input, &vec![growth; k])?.into_iter().enumerate() {
                grad_dense[j].add_assign(&part)?;
            }
        }
    }

    let grad_block_in = grad_block_in.expect("dense block has at least one layer");
    let initial_c = params.config.initial_channels;
    // the pooled-RGB branch carries no parameters
    let parts = channel_split(&grad_block_in, &[initial_c, 3])?;
    let pre = relu_backward(&cache.initial_out, &parts[0])?;
    let g = conv2d_backward(&cache.image, &params.initial.weight, &params.initial.spec, &pre)?;
    grads.initial.weight = g.weight;
    grads.initial.bias = g.bias;
    Ok(grads)
}

/// Recomputes the forward pass and returns parameter gradients.
pub fn ldn_backward<T: Real>(image: &Tensor<T>, params: &LdnParams<T>, grad_logits: &Tensor<T>) -> Result<LdnParams<T>> {
    let (_, cache) = ldn_forward_cached(image, params)?;
    ldn_backward_cached(&cache, params, grad_logits)
}

/// Expected shape of the full-resolution logits for `image`.
pub fn logits_shape(image: Shape) -> Shape {
    image.with_c(2)
}
