#![allow(dead_code)]

pub mod gradcheck;

use paddyforge::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f32 = 1e-3;
pub const FD_TOL: f64 = 1e-2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values in [-1, 1] whose magnitudes are at least `gap` from zero.
pub fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng, gap: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(gap..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// A random permutation of evenly spaced values in [-1, 1]: no ties, and
/// neighbours in value differ by far more than the FD step.
pub fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut data: Vec<f32> = (0..n).map(|i| -1.0 + 2.0 * i as f32 / (n - 1).max(1) as f32).collect();
    data.shuffle(rng);
    Tensor::from_vec(shape, data).unwrap()
}

/// `Σ r·y` in f64.
pub fn project(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Central differences of `loss` with respect to `x[i]` for each `i` in
/// `coords`, compared with `analytic` by normwise relative error
/// `‖a − n‖ / max(‖a‖, ‖n‖)` over those coordinates.
pub fn fd_worst(
    x: &mut Tensor,
    analytic: &[f32],
    coords: &[usize],
    mut loss: impl FnMut(&Tensor) -> f64,
) -> f64 {
    let mut a = Vec::with_capacity(coords.len());
    let mut n = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + FD_EPS;
        let up = loss(x);
        x.data_mut()[i] = orig - FD_EPS;
        let down = loss(x);
        x.data_mut()[i] = orig;
        a.push(analytic[i] as f64);
        n.push((up - down) / (2.0 * FD_EPS as f64));
    }
    normwise_rel_err(&a, &n)
}

pub fn normwise_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 { 0.0 } else { norm(&diff) / scale }
}

/// Up to `max` distinct coordinates out of `n`.
pub fn sample_coords(n: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    rand::seq::index::sample(rng, n, max).into_vec()
}

/// Direct six-loop convolution in f64.
pub fn conv_oracle(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Vec<f32> {
    let [n, c, h, w] = input.shape().try_into().unwrap();
    let [o, kc, kh, kw] = kernel.shape().try_into().unwrap();
    assert_eq!(c, kc);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let (x, k) = (input.data(), kernel.data());
    let mut out = Vec::with_capacity(n * o * oh * ow);
    for b in 0..n {
        for oc in 0..o {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias.data()[oc] as f64;
                    for ic in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let (iy, ix) = ((y * stride + i) as isize - pad as isize, (xo * stride + j) as isize - pad as isize);
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((b * c + ic) * h + iy as usize) * w + ix as usize] as f64
                                    * k[((oc * c + ic) * kh + i) * kw + j] as f64;
                            }
                        }
                    }
                    out.push(acc as f32);
                }
            }
        }
    }
    out
}
