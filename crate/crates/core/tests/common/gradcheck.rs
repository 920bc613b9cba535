//! Finite-difference checks for every layer, one random instance per seed.
//! Each function returns the worst relative error it saw.

use paddyforge::loss::{one_hot, softmax_cross_entropy_batch};
use paddyforge::nn::*;
use paddyforge::{Precision, Shape2D, Tensor};
use rand::Rng;

use super::*;

pub fn conv(seed: u64) -> f64 {
    let mut r = rng(seed);
    let stride = r.random_range(1..=2);
    let padding = r.random_range(0..=1);
    let mut x = uniform(&[1, 2, 6, 6], &mut r, -1.0, 1.0);
    let mut k = uniform(&[3, 2, 3, 3], &mut r, -1.0, 1.0);
    let mut b = uniform(&[3], &mut r, -1.0, 1.0);
    let (y, cache) = conv2d_forward(&x, &k, &b, stride, padding).unwrap();
    let proj = uniform(y.shape(), &mut r, -1.0, 1.0);
    let g = conv2d_backward(&cache, &proj).unwrap();
    let (k0, b0, x0) = (k.clone(), b.clone(), x.clone());
    let all = |t: &Tensor| (0..t.len()).collect::<Vec<_>>();
    let mut worst = fd_worst(&mut x, g.input.data(), &all(&x0), |x| {
        project(&conv2d_forward(x, &k0, &b0, stride, padding).unwrap().0, &proj)
    });
    worst = worst.max(fd_worst(&mut k, g.kernel.data(), &all(&k0), |k| {
        project(&conv2d_forward(&x0, k, &b0, stride, padding).unwrap().0, &proj)
    }));
    worst.max(fd_worst(&mut b, g.bias.data(), &all(&b0), |b| {
        project(&conv2d_forward(&x0, &k0, b, stride, padding).unwrap().0, &proj)
    }))
}

pub fn maxpool(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut x = distinct(&[1, 2, 8, 8], &mut r);
    let window = Shape2D::square(2).unwrap();
    let (y, cache) = maxpool_forward(&x, window, 2).unwrap();
    let proj = uniform(y.shape(), &mut r, -1.0, 1.0);
    let g = maxpool_backward(&cache, &proj).unwrap();
    let coords: Vec<usize> = (0..x.len()).collect();
    fd_worst(&mut x, g.data(), &coords, |x| project(&maxpool_forward(x, window, 2).unwrap().0, &proj))
}

pub fn relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut x = away_from_zero(&[2, 3, 4, 4], &mut r, 0.1);
    let (y, cache) = relu_forward(&x);
    let proj = uniform(y.shape(), &mut r, -1.0, 1.0);
    let g = relu_backward(&cache, &proj).unwrap();
    let coords: Vec<usize> = (0..x.len()).collect();
    fd_worst(&mut x, g.data(), &coords, |x| project(&relu_forward(x).0, &proj))
}

pub fn linear(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut x = uniform(&[4, 6], &mut r, -1.0, 1.0);
    let mut w = uniform(&[3, 6], &mut r, -1.0, 1.0);
    let mut b = uniform(&[3], &mut r, -1.0, 1.0);
    let (y, cache) = linear_forward(&x, &w, &b).unwrap();
    let proj = uniform(y.shape(), &mut r, -1.0, 1.0);
    let g = linear_backward(&cache, &proj).unwrap();
    let (x0, w0, b0) = (x.clone(), w.clone(), b.clone());
    let all = |t: &Tensor| (0..t.len()).collect::<Vec<_>>();
    let mut worst = fd_worst(&mut x, g.input.data(), &all(&x0), |x| project(&linear_forward(x, &w0, &b0).unwrap().0, &proj));
    worst = worst.max(fd_worst(&mut w, g.weight.data(), &all(&w0), |w| {
        project(&linear_forward(&x0, w, &b0).unwrap().0, &proj)
    }));
    worst.max(fd_worst(&mut b, g.bias.data(), &all(&b0), |b| project(&linear_forward(&x0, &w0, b).unwrap().0, &proj)))
}

pub fn global_pool(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut x = uniform(&[2, 3, 4, 5], &mut r, -1.0, 1.0);
    let y = global_avg_pool_forward(&x).unwrap();
    let proj = uniform(y.shape(), &mut r, -1.0, 1.0);
    let g = global_avg_pool_backward(x.shape(), &proj).unwrap();
    let coords: Vec<usize> = (0..x.len()).collect();
    fd_worst(&mut x, g.data(), &coords, |x| project(&global_avg_pool_forward(x).unwrap(), &proj))
}

fn conv_layer(channels: usize, r: &mut rand_chacha::ChaCha8Rng) -> ConvLayer {
    let geometry = ConvGeometry {
        in_channels: channels,
        out_channels: channels,
        kernel_h: 3,
        kernel_w: 3,
        stride: 1,
        padding: 1,
    };
    ConvLayer {
        weight: Parameter::new(uniform(&geometry.kernel_shape(), r, -0.5, 0.5), Precision::Full32),
        bias: Parameter::new(uniform(&[channels], r, -0.5, 0.5), Precision::Full32),
        geometry,
    }
}

/// Instances whose interior ReLU inputs come within `2·FD_EPS` of zero are
/// redrawn: a perturbation of one weight, bias or pixel moves them by at
/// most `FD_EPS`, so no central difference straddles the kink.
pub fn residual(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (block, mut x) = loop {
        let block = ResidualBlock {
            conv1: conv_layer(2, &mut r),
            conv2: conv_layer(2, &mut r),
        };
        let x = uniform(&[1, 2, 5, 5], &mut r, -1.0, 1.0);
        let hidden = conv2d_forward(&x, &block.conv1.weight.master, &block.conv1.bias.master, 1, 1).unwrap().0;
        if hidden.data().iter().all(|v| v.abs() >= 2.0 * FD_EPS) {
            break (block, x);
        }
    };
    let (y, cache) = residual_forward(&x, &block).unwrap();
    let proj = uniform(y.shape(), &mut r, -1.0, 1.0);
    let g = residual_backward(&cache, &proj).unwrap();
    let coords: Vec<usize> = (0..x.len()).collect();
    let mut worst = fd_worst(&mut x, g.input.data(), &coords, |x| project(&residual_forward(x, &block).unwrap().0, &proj));
    let x0 = x.clone();
    let grads = [
        g.conv1.kernel.clone(),
        g.conv1.bias.clone(),
        g.conv2.kernel.clone(),
        g.conv2.bias.clone(),
    ];
    for (which, analytic) in grads.iter().enumerate() {
        let mut b = block.clone();
        let param = |b: &mut ResidualBlock| -> Tensor {
            match which {
                0 => b.conv1.weight.master.clone(),
                1 => b.conv1.bias.master.clone(),
                2 => b.conv2.weight.master.clone(),
                _ => b.conv2.bias.master.clone(),
            }
        };
        let mut t = param(&mut b);
        let coords: Vec<usize> = (0..t.len()).collect();
        worst = worst.max(fd_worst(&mut t, analytic.data(), &coords, |t| {
            let p = match which {
                0 => &mut b.conv1.weight,
                1 => &mut b.conv1.bias,
                2 => &mut b.conv2.weight,
                _ => &mut b.conv2.bias,
            };
            p.master = t.clone();
            p.sync(Precision::Full32);
            project(&residual_forward(&x0, &b).unwrap().0, &proj)
        }));
    }
    worst
}

/// Conv → ReLU → MaxPool → Flatten → Linear under softmax cross-entropy;
/// ten randomly chosen parameter coordinates.
pub fn toy_network(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut net = Network::from_specs(
        Architecture::Custom,
        vec![
            LayerSpec::conv3x3(4),
            LayerSpec::ReLU,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::Flatten,
            LayerSpec::Linear { out_features: 3 },
        ],
        2,
        Shape2D::square(6).unwrap(),
        3,
        seed,
    )
    .unwrap();
    for p in net.params_mut() {
        if p.master.rank() == 1 {
            p.master = uniform(p.master.shape(), &mut r, -0.5, 0.5);
            p.sync(Precision::Full32);
        }
    }
    let x = uniform(&[2, 2, 6, 6], &mut r, -1.0, 1.0);
    let targets: Vec<f32> = (0..2).flat_map(|_| one_hot(r.random_range(0..3), 3)).collect();
    let targets = Tensor::from_vec(&[2, 3], targets).unwrap();
    let loss_of = |net: &Network| -> f64 {
        let logits = net.predict(&x).unwrap();
        softmax_cross_entropy_batch(&logits, &targets, 2).unwrap().mean
    };
    let (logits, ctx) = net.forward(&x).unwrap();
    let loss = softmax_cross_entropy_batch(&logits, &targets, 2).unwrap();
    net.backward(ctx, &loss.grad).unwrap();
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let (mut a, mut n) = (Vec::new(), Vec::new());
    for flat in sample_coords(total, 10, &mut r) {
        let (mut pi, mut i) = (0, flat);
        while i >= sizes[pi] {
            i -= sizes[pi];
            pi += 1;
        }
        let analytic = net.params()[pi].grad.data()[i] as f64;
        let eval_at = |delta: f32| {
            let mut probe = net.clone();
            let p = &mut probe.params_mut()[pi];
            p.master.data_mut()[i] += delta;
            p.sync(Precision::Full32);
            loss_of(&probe)
        };
        n.push((eval_at(FD_EPS) - eval_at(-FD_EPS)) / (2.0 * FD_EPS as f64));
        a.push(analytic);
    }
    normwise_rel_err(&a, &n)
}
