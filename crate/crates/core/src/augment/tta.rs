use rand::Rng;

use super::ops::center_crop;
use super::policy::AugPolicy;
use crate::error::{Error, Result};
use crate::loss::softmax_rows;
use crate::nn::Network;
use crate::tensor::Tensor;

pub const DEFAULT_TTA_COPIES: usize = 4;

/// Arithmetic mean of probability vectors, accumulated in `f64`.
pub fn average_predictions(predictions: &[Vec<f32>]) -> Result<Vec<f32>> {
    let first = predictions.first().ok_or_else(|| Error::config("nothing to average"))?;
    let k = first.len();
    let mut acc = vec![0.0f64; k];
    for p in predictions {
        if p.len() != k {
            return Err(Error::shape(format!("prediction lengths differ: {k} vs {}", p.len())));
        }
        for (a, &v) in acc.iter_mut().zip(p) {
            *a += v as f64;
        }
    }
    let n = predictions.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Softmax prediction for one CHW image after a center crop to the
/// network's input size.
pub fn predict_center(net: &Network, img: &Tensor) -> Result<Vec<f32>> {
    let cropped = center_crop(img, net.input_size)?;
    let batch = cropped.reshape(&[1, net.in_channels, net.input_size.height, net.input_size.width])?;
    Ok(softmax_rows(&net.predict(&batch)?)?.remove(0))
}

/// Mean softmax over the center-cropped image and `copies` augmented
/// versions of it. With no augmentation (`AugPolicy::None` or zero
/// copies) this is exactly the plain center-crop prediction.
pub fn tta_predict<R: Rng + ?Sized>(
    net: &Network,
    img: &Tensor,
    policy: AugPolicy,
    copies: usize,
    rng: &mut R,
) -> Result<Vec<f32>> {
    if policy == AugPolicy::None || copies == 0 {
        return predict_center(net, img);
    }
    let base = center_crop(img, net.input_size)?;
    let mut pixels = base.data().to_vec();
    for _ in 0..copies {
        pixels.extend_from_slice(policy.apply(&base, rng)?.data());
    }
    let batch = Tensor::from_vec(
        &[copies + 1, net.in_channels, net.input_size.height, net.input_size.width],
        pixels,
    )?;
    average_predictions(&softmax_rows(&net.predict(&batch)?)?)
}
