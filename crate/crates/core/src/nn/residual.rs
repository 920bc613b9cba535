use serde::{Deserialize, Serialize};

use super::activation::{relu_backward, relu_forward, ReluCache};
use super::conv::{conv2d_backward_impl, conv2d_forward, ConvCache, ConvGeometry, ConvGrads};
use super::param::Parameter;
use crate::error::{Error, Result};
use crate::tensor::{round_slice_to_half, Tensor};

/// A convolution with its learnable kernel and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub geometry: ConvGeometry,
    pub weight: Parameter,
    pub bias: Parameter,
}

impl ConvLayer {
    pub(crate) fn forward(&self, input: &Tensor) -> Result<(Tensor, ConvCache)> {
        conv2d_forward(
            input,
            &self.weight.working,
            &self.bias.working,
            self.geometry.stride,
            self.geometry.padding,
        )
    }
}

/// `output = conv2(relu(conv1(input))) + input`. Both convolutions keep the
/// channel count and spatial extent so the identity path lines up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
}

#[derive(Debug, Clone)]
pub struct ResidualCache {
    conv1: ConvCache,
    relu: ReluCache,
    conv2: ConvCache,
}

#[derive(Debug, Clone)]
pub struct ResidualGrads {
    pub input: Tensor,
    pub conv1: ConvGrads,
    pub conv2: ConvGrads,
}

pub fn residual_forward(input: &Tensor, block: &ResidualBlock) -> Result<(Tensor, ResidualCache)> {
    residual_forward_impl(input, block, false)
}

pub(crate) fn residual_forward_impl(
    input: &Tensor,
    block: &ResidualBlock,
    half: bool,
) -> Result<(Tensor, ResidualCache)> {
    let (mut hidden, conv1) = block.conv1.forward(input)?;
    if half {
        round_slice_to_half(hidden.data_mut());
    }
    let (activated, relu) = relu_forward(&hidden);
    let (mut branch, conv2) = block.conv2.forward(&activated)?;
    if branch.shape() != input.shape() {
        return Err(Error::shape(format!(
            "residual branch maps {:?} to {:?}; the skip connection needs equal shapes",
            input.shape(),
            branch.shape()
        )));
    }
    for (b, x) in branch.data_mut().iter_mut().zip(input.data()) {
        *b += x;
    }
    Ok((branch, ResidualCache { conv1, relu, conv2 }))
}

/// Gradient through both the convolution branch and the identity path.
pub fn residual_backward(cache: &ResidualCache, grad_out: &Tensor) -> Result<ResidualGrads> {
    residual_backward_impl(cache, grad_out, false)
}

pub(crate) fn residual_backward_impl(
    cache: &ResidualCache,
    grad_out: &Tensor,
    half: bool,
) -> Result<ResidualGrads> {
    let conv2 = conv2d_backward_impl(&cache.conv2, grad_out, true)?;
    let mut grad_hidden = relu_backward(&cache.relu, &conv2.input)?;
    if half {
        round_slice_to_half(grad_hidden.data_mut());
    }
    let conv1 = conv2d_backward_impl(&cache.conv1, &grad_hidden, true)?;
    let mut input = conv1.input.clone();
    for (g, skip) in input.data_mut().iter_mut().zip(grad_out.data()) {
        *g += skip;
    }
    Ok(ResidualGrads { input, conv1, conv2 })
}
