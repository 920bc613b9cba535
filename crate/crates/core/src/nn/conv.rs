use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};

/// Geometry of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn output_extent(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(Error::shape("convolution stride must be >= 1"));
        }
        let ph = height + 2 * self.padding;
        let pw = width + 2 * self.padding;
        if self.kernel_h == 0 || self.kernel_w == 0 || self.kernel_h > ph || self.kernel_w > pw {
            return Err(Error::shape(format!(
                "kernel {}x{} does not fit padded input {ph}x{pw}",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn fan_in(&self) -> usize {
        self.patch_len()
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }
}

/// Saved state for [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct ConvCache {
    geometry: ConvGeometry,
    input: Tensor,
    kernel: Tensor,
    out_h: usize,
    out_w: usize,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Unfold one CHW image into a `[C·kh·kw, out_h·out_w]` patch matrix.
fn im2col(
    image: &[f32],
    g: &ConvGeometry,
    (h, w): (usize, usize),
    (out_h, out_w): (usize, usize),
    cols: &mut [f32],
) {
    let p = g.padding as isize;
    let plane = out_h * out_w;
    for c in 0..g.in_channels {
        let src = &image[c * h * w..(c + 1) * h * w];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..out_h {
                    let iy = (oy * g.stride + ki) as isize - p;
                    let dst_row = &mut dst[oy * out_w..(oy + 1) * out_w];
                    if iy < 0 || iy >= h as isize {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - p;
                        *d = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Fold a patch-matrix gradient back onto one CHW image (adjoint of [`im2col`]).
fn col2im(
    cols: &[f32],
    g: &ConvGeometry,
    (h, w): (usize, usize),
    (out_h, out_w): (usize, usize),
    image: &mut [f32],
) {
    let p = g.padding as isize;
    let plane = out_h * out_w;
    for c in 0..g.in_channels {
        let dst = &mut image[c * h * w..(c + 1) * h * w];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..out_h {
                    let iy = (oy * g.stride + ki) as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..out_w {
                        let ix = (ox * g.stride + kj) as isize - p;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += src[oy * out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

fn geometry_of(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<ConvGeometry> {
    if input.rank() != 4 || kernel.rank() != 4 {
        return Err(Error::shape(format!(
            "conv2d expects NCHW input and OIHW kernel, got {:?} and {:?}",
            input.shape(),
            kernel.shape()
        )));
    }
    let ks = kernel.shape();
    if ks[1] != input.shape()[1] {
        return Err(Error::shape(format!(
            "kernel expects {} input channels, input has {}",
            ks[1],
            input.shape()[1]
        )));
    }
    Ok(ConvGeometry {
        in_channels: ks[1],
        out_channels: ks[0],
        kernel_h: ks[2],
        kernel_w: ks[3],
        stride,
        padding,
    })
}

/// Direct 2-D cross-correlation with zero padding:
/// `out[n,o,y,x] = bias[o] + Σ input[n,c,y·s+i−p,x·s+j−p]·kernel[o,c,i,j]`.
pub fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, ConvCache)> {
    let g = geometry_of(input, kernel, stride, padding)?;
    if bias.len() != g.out_channels {
        return Err(Error::shape(format!(
            "bias has {} entries for {} output channels",
            bias.len(),
            g.out_channels
        )));
    }
    let [n, _, h, w] = input.shape()[..] else { unreachable!() };
    let (out_h, out_w) = g.output_extent(h, w)?;
    let plane = out_h * out_w;
    let patch = g.patch_len();
    let mut cols = vec![0.0; patch * plane];
    let mut out = vec![0.0; n * g.out_channels * plane];
    let in_stride = g.in_channels * h * w;
    for (b, out_n) in out.chunks_exact_mut(g.out_channels * plane).enumerate() {
        for (o, row) in out_n.chunks_exact_mut(plane).enumerate() {
            row.fill(bias.data()[o]);
        }
        im2col(&input.data()[b * in_stride..(b + 1) * in_stride], &g, (h, w), (out_h, out_w), &mut cols);
        gemm_nn(g.out_channels, patch, plane, kernel.data(), &cols, out_n);
    }
    let output = Tensor::from_vec(&[n, g.out_channels, out_h, out_w], out)?;
    Ok((
        output,
        ConvCache {
            geometry: g,
            input: input.clone(),
            kernel: kernel.clone(),
            out_h,
            out_w,
        },
    ))
}

/// Exact gradients of [`conv2d_forward`] with respect to input, kernel and bias.
pub fn conv2d_backward(cache: &ConvCache, grad_out: &Tensor) -> Result<ConvGrads> {
    conv2d_backward_impl(cache, grad_out, true)
}

pub(crate) fn conv2d_backward_impl(cache: &ConvCache, grad_out: &Tensor, need_input: bool) -> Result<ConvGrads> {
    let g = &cache.geometry;
    let [n, _, h, w] = cache.input.shape()[..] else { unreachable!() };
    let expect = [n, g.out_channels, cache.out_h, cache.out_w];
    if grad_out.shape() != expect {
        return Err(Error::shape(format!(
            "conv grad_out {:?} does not match forward output {expect:?}",
            grad_out.shape()
        )));
    }
    let plane = cache.out_h * cache.out_w;
    let patch = g.patch_len();
    let in_stride = g.in_channels * h * w;
    let mut grad_kernel = vec![0.0; g.out_channels * patch];
    let mut grad_bias = vec![0.0; g.out_channels];
    let mut grad_input = vec![0.0; if need_input { cache.input.len() } else { 0 }];
    let mut cols = vec![0.0; patch * plane];
    let mut grad_cols = vec![0.0; patch * plane];
    for b in 0..n {
        let go = &grad_out.data()[b * g.out_channels * plane..(b + 1) * g.out_channels * plane];
        for (o, row) in go.chunks_exact(plane).enumerate() {
            grad_bias[o] += row.iter().sum::<f32>();
        }
        im2col(
            &cache.input.data()[b * in_stride..(b + 1) * in_stride],
            g,
            (h, w),
            (cache.out_h, cache.out_w),
            &mut cols,
        );
        gemm_nt(g.out_channels, plane, patch, go, &cols, &mut grad_kernel);
        if need_input {
            grad_cols.fill(0.0);
            gemm_tn(patch, g.out_channels, plane, cache.kernel.data(), go, &mut grad_cols);
            col2im(
                &grad_cols,
                g,
                (h, w),
                (cache.out_h, cache.out_w),
                &mut grad_input[b * in_stride..(b + 1) * in_stride],
            );
        }
    }
    let input = if need_input {
        Tensor::from_vec(cache.input.shape(), grad_input)?
    } else {
        Tensor::zeros(cache.input.shape())
    };
    Ok(ConvGrads {
        input,
        kernel: Tensor::from_vec(cache.kernel.shape(), grad_kernel)?,
        bias: Tensor::from_vec(&[g.out_channels], grad_bias)?,
    })
}

/// Multiply-accumulate count of one forward pass for a single example.
pub(crate) fn conv_macs(g: &ConvGeometry, out_h: usize, out_w: usize) -> u64 {
    (g.out_channels * g.patch_len() * out_h * out_w) as u64
}
