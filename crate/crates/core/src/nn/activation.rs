use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct ReluCache {
    active: Vec<bool>,
    shape: Vec<usize>,
}

pub fn relu_forward(input: &Tensor) -> (Tensor, ReluCache) {
    let active: Vec<bool> = input.data().iter().map(|&v| v > 0.0).collect();
    let mut out = input.clone();
    for (v, &a) in out.data_mut().iter_mut().zip(&active) {
        if !a {
            *v = 0.0;
        }
    }
    (
        out,
        ReluCache {
            active,
            shape: input.shape().to_vec(),
        },
    )
}

/// Passes `grad_out` where the forward input was strictly positive.
pub fn relu_backward(cache: &ReluCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(Error::shape(format!(
            "relu grad_out {:?} does not match {:?}",
            grad_out.shape(),
            cache.shape
        )));
    }
    let mut grad = grad_out.clone();
    for (g, &a) in grad.data_mut().iter_mut().zip(&cache.active) {
        if !a {
            *g = 0.0;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_backward() {
        let (y, cache) = relu_forward(&Tensor::from_vec(&[3], vec![-1., 0., 2.]).unwrap());
        assert_eq!(y.data(), &[0., 0., 2.]);
        let g = relu_backward(&cache, &Tensor::from_vec(&[3], vec![1., 1., 1.]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0., 0., 1.]);

        let (_, cache) = relu_forward(&Tensor::from_vec(&[2], vec![-1., 2.]).unwrap());
        let g = relu_backward(&cache, &Tensor::from_vec(&[2], vec![5., 7.]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0., 7.]);
        assert!(relu_backward(&cache, &Tensor::zeros(&[3])).is_err());
    }
}
