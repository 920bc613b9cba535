use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// He initialization: i.i.d. samples from `Normal(0, 2 / fan_in)`.
pub fn kaiming_init<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::config("kaiming_init needs fan_in >= 1"));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::Numeric(e.to_string()))?;
    let len: usize = shape.iter().product();
    let values = (0..len).map(|_| normal.sample(rng) as f32).collect();
    Tensor::from_vec(shape, values)
}
