use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::{relu_backward, relu_forward, ReluCache};
use super::conv::{conv2d_backward_impl, conv_macs, ConvCache, ConvGeometry};
use super::init::kaiming_init;
use super::linear::{linear_backward_impl, linear_forward, LinearCache};
use super::param::Parameter;
use super::pool::{
    global_avg_pool_backward, global_avg_pool_forward, maxpool_backward, maxpool_forward, pool_extent, PoolCache,
};
use super::residual::{residual_backward_impl, residual_forward_impl, ConvLayer, ResidualBlock, ResidualCache};
use crate::error::{Error, Result};
use crate::tensor::{round_slice_to_half, Precision, Shape2D, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    BaselineConvNet,
    MiniResNet,
    /// Built directly from a layer list.
    Custom,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convnet" | "baseline" => Ok(Architecture::BaselineConvNet),
            "mini-resnet" | "resnet" => Ok(Architecture::MiniResNet),
            other => Err(Error::config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Declarative description of one layer. The network's final layer yields
/// logits; softmax is applied by the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv2D {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    ReLU,
    Linear {
        out_features: usize,
    },
    /// Two 3×3, padding-1 convolutions with an interior ReLU and a skip connection.
    Residual {
        channels: usize,
    },
    Flatten,
    GlobalAvgPool,
}

impl LayerSpec {
    pub fn conv3x3(out_channels: usize) -> Self {
        LayerSpec::Conv2D {
            out_channels,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: 1,
        }
    }

    fn is_flattening(&self) -> bool {
        matches!(self, LayerSpec::Flatten | LayerSpec::GlobalAvgPool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Parameter,
    pub bias: Parameter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Conv(ConvLayer),
    MaxPool { window: usize, stride: usize },
    Relu,
    Linear(LinearLayer),
    Residual(ResidualBlock),
    Flatten,
    GlobalAvgPool,
}

impl Layer {
    pub fn params(&self) -> Vec<&Parameter> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            Layer::Residual(r) => vec![&r.conv1.weight, &r.conv1.bias, &r.conv2.weight, &r.conv2.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Residual(r) => vec![
                &mut r.conv1.weight,
                &mut r.conv1.bias,
                &mut r.conv2.weight,
                &mut r.conv2.bias,
            ],
            _ => Vec::new(),
        }
    }

    fn param_suffixes(&self) -> &'static [&'static str] {
        match self {
            Layer::Conv(_) | Layer::Linear(_) => &["weight", "bias"],
            Layer::Residual(_) => &["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"],
            _ => &[],
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Conv(_) | Layer::Linear(_) | Layer::Residual(_))
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Conv(ConvCache),
    Pool(PoolCache),
    Relu(ReluCache),
    Linear(LinearCache),
    Residual(ResidualCache),
    Flatten(Vec<usize>),
    GlobalAvgPool(Vec<usize>),
}

/// Activations saved by one forward pass, consumed by exactly one backward pass.
#[derive(Debug)]
pub struct ForwardContext {
    caches: Vec<LayerCache>,
    logits_shape: Vec<usize>,
}

/// Which parameters receive updates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainableSelector {
    All,
    /// Freeze every layer before the flatten point; train the head.
    HeadOnly,
    /// One flag per parameterized layer, in layer order.
    Mask(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub architecture: Architecture,
    pub specs: Vec<LayerSpec>,
    pub layers: Vec<Layer>,
    pub in_channels: usize,
    pub input_size: Shape2D,
    pub num_classes: usize,
    precision: Precision,
}

#[derive(Debug, Clone, Copy)]
enum Activation {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Activation {
    fn describe(&self) -> String {
        match self {
            Activation::Spatial { c, h, w } => format!("[{c}, {h}, {w}]"),
            Activation::Flat(n) => format!("[{n}]"),
        }
    }
}

/// Walk the layer list, returning the activation after each layer.
fn infer_shapes(specs: &[LayerSpec], in_channels: usize, size: Shape2D) -> Result<Vec<Activation>> {
    let mut act = Activation::Spatial {
        c: in_channels,
        h: size.height,
        w: size.width,
    };
    let mut shapes = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let spatial = |act: Activation| match act {
            Activation::Spatial { c, h, w } => Ok((c, h, w)),
            Activation::Flat(_) => Err(Error::shape(format!(
                "layer {i} ({spec:?}) needs a spatial input, got {}",
                act.describe()
            ))),
        };
        act = match *spec {
            LayerSpec::Conv2D {
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                let (c, h, w) = spatial(act)?;
                let g = ConvGeometry {
                    in_channels: c,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                };
                let (h, w) = g.output_extent(h, w)?;
                Activation::Spatial { c: out_channels, h, w }
            }
            LayerSpec::MaxPool { window, stride } => {
                let (c, h, w) = spatial(act)?;
                let (h, w) = pool_extent(h, w, Shape2D::square(window)?, stride)?;
                Activation::Spatial { c, h, w }
            }
            LayerSpec::ReLU => act,
            LayerSpec::Linear { out_features } => match act {
                Activation::Flat(_) => Activation::Flat(out_features),
                _ => {
                    return Err(Error::shape(format!(
                        "layer {i} (Linear) needs a flattened input, got {}",
                        act.describe()
                    )))
                }
            },
            LayerSpec::Residual { channels } => {
                let (c, _, _) = spatial(act)?;
                if c != channels {
                    return Err(Error::shape(format!(
                        "residual block over {channels} channels receives {c}"
                    )));
                }
                act
            }
            LayerSpec::Flatten => {
                let (c, h, w) = spatial(act)?;
                Activation::Flat(c * h * w)
            }
            LayerSpec::GlobalAvgPool => {
                let (c, _, _) = spatial(act)?;
                Activation::Flat(c)
            }
        };
        shapes.push(act);
    }
    Ok(shapes)
}

fn conv_layer(g: ConvGeometry, rng: &mut ChaCha8Rng) -> Result<ConvLayer> {
    Ok(ConvLayer {
        weight: Parameter::new(kaiming_init(&g.kernel_shape(), g.fan_in(), rng)?, Precision::Full32),
        bias: Parameter::new(Tensor::zeros(&[g.out_channels]), Precision::Full32),
        geometry: g,
    })
}

impl Network {
    /// Build a network from a layer list, He-initializing every weight from
    /// one seeded stream in layer order. Biases start at zero.
    pub fn from_specs(
        architecture: Architecture,
        specs: Vec<LayerSpec>,
        in_channels: usize,
        input_size: Shape2D,
        num_classes: usize,
        seed: u64,
    ) -> Result<Network> {
        if in_channels == 0 {
            return Err(Error::shape("network needs at least one input channel"));
        }
        let shapes = infer_shapes(&specs, in_channels, input_size)?;
        match shapes.last() {
            Some(Activation::Flat(k)) if *k == num_classes => {}
            Some(last) => {
                return Err(Error::shape(format!(
                    "network output {} does not match {num_classes} classes",
                    last.describe()
                )))
            }
            None => return Err(Error::shape("network has no layers")),
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut prev = Activation::Spatial {
            c: in_channels,
            h: input_size.height,
            w: input_size.width,
        };
        for (spec, &out) in specs.iter().zip(&shapes) {
            let layer = match *spec {
                LayerSpec::Conv2D {
                    out_channels,
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                } => {
                    let Activation::Spatial { c, .. } = prev else { unreachable!() };
                    Layer::Conv(conv_layer(
                        ConvGeometry {
                            in_channels: c,
                            out_channels,
                            kernel_h,
                            kernel_w,
                            stride,
                            padding,
                        },
                        &mut rng,
                    )?)
                }
                LayerSpec::MaxPool { window, stride } => Layer::MaxPool { window, stride },
                LayerSpec::ReLU => Layer::Relu,
                LayerSpec::Linear { out_features } => {
                    let Activation::Flat(in_features) = prev else { unreachable!() };
                    Layer::Linear(LinearLayer {
                        in_features,
                        out_features,
                        weight: Parameter::new(
                            kaiming_init(&[out_features, in_features], in_features, &mut rng)?,
                            Precision::Full32,
                        ),
                        bias: Parameter::new(Tensor::zeros(&[out_features]), Precision::Full32),
                    })
                }
                LayerSpec::Residual { channels } => {
                    let g = ConvGeometry {
                        in_channels: channels,
                        out_channels: channels,
                        kernel_h: 3,
                        kernel_w: 3,
                        stride: 1,
                        padding: 1,
                    };
                    Layer::Residual(ResidualBlock {
                        conv1: conv_layer(g, &mut rng)?,
                        conv2: conv_layer(g, &mut rng)?,
                    })
                }
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool,
            };
            layers.push(layer);
            prev = out;
        }
        Ok(Network {
            architecture,
            specs,
            layers,
            in_channels,
            input_size,
            num_classes,
            precision: Precision::Full32,
        })
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Switch the compute precision and resync every working copy.
    pub fn set_precision(&mut self, precision: Precision) {
        self.precision = precision;
        for p in self.params_mut() {
            p.sync(precision);
        }
    }

    /// True when a global pooling layer makes the classifier independent
    /// of the input resolution.
    pub fn is_size_agnostic(&self) -> bool {
        !self.specs.contains(&LayerSpec::Flatten)
    }

    /// Change the expected input resolution.
    pub fn set_input_size(&mut self, size: Shape2D) -> Result<()> {
        if size == self.input_size {
            return Ok(());
        }
        if !self.is_size_agnostic() {
            return Err(Error::config(format!(
                "{:?} flattens a size-dependent feature map; it cannot change input size",
                self.architecture
            )));
        }
        infer_shapes(&self.specs, self.in_channels, size)?;
        self.input_size = size;
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// Names like `layer3.weight`, in the same order as [`Network::params`].
    pub fn param_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.param_suffixes().iter().map(move |s| format!("layer{i}.{s}")))
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Index of the first layer after the flatten point.
    pub fn head_start(&self) -> usize {
        self.specs
            .iter()
            .position(LayerSpec::is_flattening)
            .map_or(0, |i| i + 1)
    }

    /// Whether each layer index belongs to the body (before the flatten point).
    pub fn is_body_layer(&self, index: usize) -> bool {
        index < self.head_start()
    }

    pub fn set_trainable(&mut self, selector: &TrainableSelector) -> Result<()> {
        let parameterized: Vec<usize> = (0..self.layers.len()).filter(|&i| self.layers[i].has_params()).collect();
        let flags: Vec<bool> = match selector {
            TrainableSelector::All => vec![true; parameterized.len()],
            TrainableSelector::HeadOnly => {
                let head = self.head_start();
                parameterized.iter().map(|&i| i >= head).collect()
            }
            TrainableSelector::Mask(mask) => {
                if mask.len() != parameterized.len() {
                    return Err(Error::config(format!(
                        "trainable mask has {} entries for {} parameterized layers",
                        mask.len(),
                        parameterized.len()
                    )));
                }
                mask.clone()
            }
        };
        if !flags.iter().any(|&f| f) {
            return Err(Error::config("selection leaves no trainable parameters"));
        }
        for (&i, &flag) in parameterized.iter().zip(&flags) {
            for p in self.layers[i].params_mut() {
                p.trainable = flag;
            }
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let s = batch.shape();
        if s.len() != 4 || s[1] != self.in_channels || s[2] != self.input_size.height || s[3] != self.input_size.width {
            return Err(Error::shape(format!(
                "batch {:?} does not match network input [N, {}, {}, {}]",
                s, self.in_channels, self.input_size.height, self.input_size.width
            )));
        }
        Ok(())
    }

    /// Forward pass returning pre-softmax logits `[batch, K]` and the
    /// context needed for [`Network::backward`].
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardContext)> {
        self.check_batch(batch)?;
        let half = self.precision == Precision::Half16;
        let mut x = batch.clone();
        if half {
            round_slice_to_half(x.data_mut());
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (mut y, cache) = match layer {
                Layer::Conv(c) => {
                    let (y, cache) = c.forward(&x)?;
                    (y, LayerCache::Conv(cache))
                }
                Layer::MaxPool { window, stride } => {
                    let (y, cache) = maxpool_forward(&x, Shape2D::square(*window)?, *stride)?;
                    (y, LayerCache::Pool(cache))
                }
                Layer::Relu => {
                    let (y, cache) = relu_forward(&x);
                    (y, LayerCache::Relu(cache))
                }
                Layer::Linear(l) => {
                    let (y, cache) = linear_forward(&x, &l.weight.working, &l.bias.working)?;
                    (y, LayerCache::Linear(cache))
                }
                Layer::Residual(r) => {
                    let (y, cache) = residual_forward_impl(&x, r, half)?;
                    (y, LayerCache::Residual(cache))
                }
                Layer::Flatten => {
                    let shape = x.shape().to_vec();
                    let n = shape[0];
                    let y = x.reshape(&[n, shape[1..].iter().product()])?;
                    (y, LayerCache::Flatten(shape))
                }
                Layer::GlobalAvgPool => (global_avg_pool_forward(&x)?, LayerCache::GlobalAvgPool(x.shape().to_vec())),
            };
            if half {
                round_slice_to_half(y.data_mut());
            }
            caches.push(cache);
            x = y;
        }
        let logits_shape = x.shape().to_vec();
        Ok((x, ForwardContext { caches, logits_shape }))
    }

    /// Logits only.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        self.forward(batch).map(|(logits, _)| logits)
    }

    /// Backward pass in reverse layer order. Adds each trainable
    /// parameter's gradient into its accumulator; frozen parameters are
    /// left untouched.
    pub fn backward(&mut self, ctx: ForwardContext, grad_logits: &Tensor) -> Result<()> {
        if grad_logits.shape() != ctx.logits_shape.as_slice() || ctx.caches.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "grad_logits {:?} does not match forward output {:?}",
                grad_logits.shape(),
                ctx.logits_shape
            )));
        }
        let first_trainable = self
            .layers
            .iter()
            .position(|l| l.params().iter().any(|p| p.trainable));
        let Some(stop) = first_trainable else {
            return Ok(());
        };
        let half = self.precision == Precision::Half16;
        let round = |t: &mut Tensor| {
            if half {
                round_slice_to_half(t.data_mut());
            }
        };
        let mut grad = grad_logits.clone();
        round(&mut grad);
        for (i, cache) in ctx.caches.into_iter().enumerate().rev() {
            if i < stop {
                break;
            }
            let need_input = i > stop;
            let layer = &mut self.layers[i];
            grad = match (layer, cache) {
                (Layer::Conv(c), LayerCache::Conv(cache)) => {
                    let mut g = conv2d_backward_impl(&cache, &grad, need_input)?;
                    accumulate(&mut c.weight, &mut g.kernel, half);
                    accumulate(&mut c.bias, &mut g.bias, half);
                    g.input
                }
                (Layer::MaxPool { .. }, LayerCache::Pool(cache)) => maxpool_backward(&cache, &grad)?,
                (Layer::Relu, LayerCache::Relu(cache)) => relu_backward(&cache, &grad)?,
                (Layer::Linear(l), LayerCache::Linear(cache)) => {
                    let mut g = linear_backward_impl(&cache, &grad, need_input)?;
                    accumulate(&mut l.weight, &mut g.weight, half);
                    accumulate(&mut l.bias, &mut g.bias, half);
                    g.input
                }
                (Layer::Residual(r), LayerCache::Residual(cache)) => {
                    let mut g = residual_backward_impl(&cache, &grad, half)?;
                    accumulate(&mut r.conv1.weight, &mut g.conv1.kernel, half);
                    accumulate(&mut r.conv1.bias, &mut g.conv1.bias, half);
                    accumulate(&mut r.conv2.weight, &mut g.conv2.kernel, half);
                    accumulate(&mut r.conv2.bias, &mut g.conv2.bias, half);
                    g.input
                }
                (Layer::Flatten, LayerCache::Flatten(shape)) => grad.reshape(&shape)?,
                (Layer::GlobalAvgPool, LayerCache::GlobalAvgPool(shape)) => global_avg_pool_backward(&shape, &grad)?,
                _ => return Err(Error::shape(format!("forward context does not match layer {i}"))),
            };
            round(&mut grad);
        }
        Ok(())
    }

    /// Multiply-accumulates of all convolutions for one example at `size`.
    pub fn conv_macs(&self, size: Shape2D) -> Result<u64> {
        let shapes = infer_shapes(&self.specs, self.in_channels, size)?;
        let mut total = 0;
        for (layer, act) in self.layers.iter().zip(&shapes) {
            if let Activation::Spatial { h, w, .. } = *act {
                match layer {
                    Layer::Conv(conv) => total += conv_macs(&conv.geometry, h, w),
                    Layer::Residual(r) => {
                        total += conv_macs(&r.conv1.geometry, h, w) + conv_macs(&r.conv2.geometry, h, w)
                    }
                    _ => {}
                }
            }
        }
        Ok(total)
    }
}

fn accumulate(param: &mut Parameter, contribution: &mut Tensor, half: bool) {
    if !param.trainable {
        return;
    }
    if half {
        round_slice_to_half(contribution.data_mut());
    }
    param.accumulate(contribution.data());
}

/// Builder for the two reference architectures.
pub fn build_network(architecture: Architecture, input_size: Shape2D, num_classes: usize, seed: u64) -> Result<Network> {
    if num_classes < 2 {
        return Err(Error::config("a classifier needs at least two classes"));
    }
    let specs = match architecture {
        Architecture::BaselineConvNet => baseline_convnet_specs(num_classes),
        Architecture::MiniResNet => mini_resnet_specs(num_classes),
        Architecture::Custom => {
            return Err(Error::config("custom networks are built with Network::from_specs"));
        }
    };
    Network::from_specs(architecture, specs, 3, input_size, num_classes, seed)
}

/// Three conv/ReLU/max-pool stages, then three fully connected layers.
pub fn baseline_convnet_specs(num_classes: usize) -> Vec<LayerSpec> {
    let pool = LayerSpec::MaxPool { window: 2, stride: 2 };
    vec![
        LayerSpec::conv3x3(16),
        LayerSpec::ReLU,
        pool,
        LayerSpec::conv3x3(32),
        LayerSpec::ReLU,
        pool,
        LayerSpec::conv3x3(64),
        LayerSpec::ReLU,
        pool,
        LayerSpec::Flatten,
        LayerSpec::Linear { out_features: 256 },
        LayerSpec::ReLU,
        LayerSpec::Linear { out_features: 64 },
        LayerSpec::ReLU,
        LayerSpec::Linear { out_features: num_classes },
    ]
}

/// Stem convolution, two residual stages split by a max-pool, global
/// average pooling and a linear classifier. No normalization layers.
pub fn mini_resnet_specs(num_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv3x3(16),
        LayerSpec::ReLU,
        LayerSpec::Residual { channels: 16 },
        LayerSpec::Residual { channels: 16 },
        LayerSpec::MaxPool { window: 2, stride: 2 },
        LayerSpec::Residual { channels: 16 },
        LayerSpec::Residual { channels: 16 },
        LayerSpec::GlobalAvgPool,
        LayerSpec::Linear { out_features: num_classes },
    ]
}
