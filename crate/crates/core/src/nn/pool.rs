use crate::error::{Error, Result};
use crate::tensor::{Shape2D, Tensor};

#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    /// Flat input index of each output element's maximum.
    argmax: Vec<usize>,
}

pub(crate) fn pool_extent(h: usize, w: usize, window: Shape2D, stride: usize) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::shape("pooling stride must be >= 1"));
    }
    if window.height > h || window.width > w {
        return Err(Error::shape(format!(
            "pooling window {window} larger than input {h}x{w}"
        )));
    }
    Ok(((h - window.height) / stride + 1, (w - window.width) / stride + 1))
}

/// Max pooling over NCHW input. Ties resolve to the first position in
/// row-major window order.
pub fn maxpool_forward(input: &Tensor, window: Shape2D, stride: usize) -> Result<(Tensor, PoolCache)> {
    if input.rank() != 4 {
        return Err(Error::shape(format!("maxpool expects NCHW, got {:?}", input.shape())));
    }
    let [n, c, h, w] = input.shape()[..] else { unreachable!() };
    let (oh, ow) = pool_extent(h, w, window, stride)?;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for i in 0..window.height {
                    for j in 0..window.width {
                        let idx = base + (oy * stride + i) * w + ox * stride + j;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    let shape = vec![n, c, oh, ow];
    Ok((
        Tensor::from_vec(&shape, out)?,
        PoolCache {
            input_shape: input.shape().to_vec(),
            output_shape: shape,
            argmax,
        },
    ))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool_backward(cache: &PoolCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != cache.output_shape.as_slice() {
        return Err(Error::shape(format!(
            "maxpool grad_out {:?} does not match {:?}",
            grad_out.shape(),
            cache.output_shape
        )));
    }
    let mut grad = Tensor::zeros(&cache.input_shape);
    let gi = grad.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        gi[idx] += g;
    }
    Ok(grad)
}

/// Mean over each channel plane: `[N,C,H,W] → [N,C]`.
pub fn global_avg_pool_forward(input: &Tensor) -> Result<Tensor> {
    if input.rank() != 4 {
        return Err(Error::shape(format!("global pool expects NCHW, got {:?}", input.shape())));
    }
    let [n, c, h, w] = input.shape()[..] else { unreachable!() };
    let inv = 1.0 / (h * w) as f32;
    let out = input
        .data()
        .chunks_exact(h * w)
        .map(|p| p.iter().sum::<f32>() * inv)
        .collect();
    Tensor::from_vec(&[n, c], out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input_shape[..] else {
        return Err(Error::shape("global pool input must be NCHW"));
    };
    if grad_out.shape() != [n, c] {
        return Err(Error::shape(format!("global pool grad_out {:?} vs [{n}, {c}]", grad_out.shape())));
    }
    let inv = 1.0 / (h * w) as f32;
    let mut data = Vec::with_capacity(n * c * h * w);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * inv, h * w));
    }
    Tensor::from_vec(input_shape, data)
}
