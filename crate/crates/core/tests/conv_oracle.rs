mod common;

use common::{conv_oracle, rng, uniform};
use paddyforge::nn::conv2d_forward;

#[test]
fn conv_matches_six_loop_oracle_on_grid() {
    let mut r = rng(11);
    for stride in [1, 2] {
        for padding in [0, 1] {
            for k in [1, 3] {
                for _ in 0..5 {
                    let x = uniform(&[2, 3, 7, 6], &mut r, -1.0, 1.0);
                    let kernel = uniform(&[4, 3, k, k], &mut r, -1.0, 1.0);
                    let bias = uniform(&[4], &mut r, -1.0, 1.0);
                    let (y, _) = conv2d_forward(&x, &kernel, &bias, stride, padding).unwrap();
                    let oracle = conv_oracle(&x, &kernel, &bias, stride, padding);
                    assert_eq!(y.len(), oracle.len());
                    let worst = y.data().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
                    assert!(worst <= 1e-5, "stride {stride} pad {padding} kernel {k}: {worst:e}");
                }
            }
        }
    }
}

#[test]
fn zero_kernel_and_bias_give_zero() {
    let mut r = rng(1);
    let x = uniform(&[1, 2, 5, 5], &mut r, -1.0, 1.0);
    let zeros = paddyforge::Tensor::zeros(&[3, 2, 3, 3]);
    let (y, _) = conv2d_forward(&x, &zeros, &paddyforge::Tensor::zeros(&[3]), 1, 1).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}
