use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_MIXUP_ALPHA: f64 = 0.4;

/// A mixed batch: `x̃ = λ·x_i + (1−λ)·x_j`, `ỹ = λ·y_i + (1−λ)·y_j` per row `i`.
#[derive(Debug, Clone)]
pub struct MixupBatch {
    pub images: Tensor,
    pub targets: Tensor,
    pub lambdas: Vec<f32>,
    /// Row `i` was mixed with row `partners[i]`.
    pub partners: Vec<usize>,
}

/// Mix with explicit partners and weights.
pub fn mixup_with(images: &Tensor, targets: &Tensor, partners: &[usize], lambdas: &[f32]) -> Result<MixupBatch> {
    let n = images.shape().first().copied().unwrap_or(0);
    if targets.rank() != 2 || targets.shape()[0] != n || partners.len() != n || lambdas.len() != n {
        return Err(Error::shape(format!(
            "mixup needs matching rows: images {:?}, targets {:?}, {} partners, {} weights",
            images.shape(),
            targets.shape(),
            partners.len(),
            lambdas.len()
        )));
    }
    if let Some(&bad) = partners.iter().find(|&&j| j >= n) {
        return Err(Error::shape(format!("partner index {bad} outside batch of {n}")));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::config(format!("mixup weight {bad} outside [0, 1]")));
    }
    let mix = |t: &Tensor| -> Result<Tensor> {
        let row = t.len() / n;
        let src = t.data();
        let mut out = Vec::with_capacity(t.len());
        for (i, (&j, &lam)) in partners.iter().zip(lambdas).enumerate() {
            let (a, b) = (&src[i * row..(i + 1) * row], &src[j * row..(j + 1) * row]);
            out.extend(a.iter().zip(b).map(|(&xa, &xb)| lam * xa + (1.0 - lam) * xb));
        }
        Tensor::from_vec(t.shape(), out)
    };
    Ok(MixupBatch {
        images: mix(images)?,
        targets: mix(targets)?,
        lambdas: lambdas.to_vec(),
        partners: partners.to_vec(),
    })
}

/// Pair each row with a seeded permutation of the batch and draw
/// `λ ~ Beta(alpha, alpha)` per row.
pub fn mixup_batch<R: Rng + ?Sized>(images: &Tensor, targets: &Tensor, rng: &mut R, alpha: f64) -> Result<MixupBatch> {
    let n = images.shape().first().copied().unwrap_or(0);
    if n < 2 {
        return Err(Error::config("mixup needs a batch of at least two examples"));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::config(format!("mixup alpha {alpha}: {e}")))?;
    let mut partners: Vec<usize> = (0..n).collect();
    partners.shuffle(rng);
    let lambdas: Vec<f32> = (0..n).map(|_| beta.sample(rng) as f32).collect();
    mixup_with(images, targets, &partners, &lambdas)
}
