use crate::error::{Error, Result};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};

#[derive(Debug, Clone)]
pub struct LinearCache {
    input: Tensor,
    weight: Tensor,
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// `out = input · weightᵀ + bias` with `input: [batch, in]`, `weight: [out, in]`.
pub fn linear_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(Tensor, LinearCache)> {
    if input.rank() != 2 || weight.rank() != 2 {
        return Err(Error::shape(format!(
            "linear expects [batch, in] input and [out, in] weight, got {:?} and {:?}",
            input.shape(),
            weight.shape()
        )));
    }
    let (batch, fan_in) = (input.shape()[0], input.shape()[1]);
    let fan_out = weight.shape()[0];
    if weight.shape()[1] != fan_in || bias.len() != fan_out {
        return Err(Error::shape(format!(
            "linear input width {fan_in} vs weight {:?} and bias {:?}",
            weight.shape(),
            bias.shape()
        )));
    }
    let mut out = Vec::with_capacity(batch * fan_out);
    for _ in 0..batch {
        out.extend_from_slice(bias.data());
    }
    gemm_nt(batch, fan_in, fan_out, input.data(), weight.data(), &mut out);
    Ok((
        Tensor::from_vec(&[batch, fan_out], out)?,
        LinearCache {
            input: input.clone(),
            weight: weight.clone(),
        },
    ))
}

pub fn linear_backward(cache: &LinearCache, grad_out: &Tensor) -> Result<LinearGrads> {
    linear_backward_impl(cache, grad_out, true)
}

pub(crate) fn linear_backward_impl(cache: &LinearCache, grad_out: &Tensor, need_input: bool) -> Result<LinearGrads> {
    let (batch, fan_in) = (cache.input.shape()[0], cache.input.shape()[1]);
    let fan_out = cache.weight.shape()[0];
    if grad_out.shape() != [batch, fan_out] {
        return Err(Error::shape(format!(
            "linear grad_out {:?} vs expected [{batch}, {fan_out}]",
            grad_out.shape()
        )));
    }
    let mut grad_weight = vec![0.0; fan_out * fan_in];
    gemm_tn(fan_out, batch, fan_in, grad_out.data(), cache.input.data(), &mut grad_weight);
    let mut grad_bias = vec![0.0; fan_out];
    for row in grad_out.data().chunks_exact(fan_out) {
        for (b, g) in grad_bias.iter_mut().zip(row) {
            *b += g;
        }
    }
    let input = if need_input {
        let mut gi = vec![0.0; batch * fan_in];
        gemm_nn(batch, fan_out, fan_in, grad_out.data(), cache.weight.data(), &mut gi);
        Tensor::from_vec(&[batch, fan_in], gi)?
    } else {
        Tensor::zeros(&[batch, fan_in])
    };
    Ok(LinearGrads {
        input,
        weight: Tensor::from_vec(&[fan_out, fan_in], grad_weight)?,
        bias: Tensor::from_vec(&[fan_out], grad_bias)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_passes_input() {
        let x = Tensor::from_vec(&[2, 3], vec![1., -2., 3., 0.5, 0., 9.]).unwrap();
        let mut id = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            id.data_mut()[i * 4] = 1.0;
        }
        let (y, cache) = linear_forward(&x, &id, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
        let g = linear_backward(&cache, &Tensor::zeros(&[2, 3])).unwrap();
        assert!(g.input.data().iter().chain(g.weight.data()).chain(g.bias.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_gradients() {
        let x = Tensor::from_vec(&[1, 2], vec![1., 2.]).unwrap();
        let w = Tensor::from_vec(&[1, 2], vec![3., 4.]).unwrap();
        let (y, cache) = linear_forward(&x, &w, &Tensor::from_vec(&[1], vec![0.5]).unwrap()).unwrap();
        assert_eq!(y.data(), &[11.5]);
        let g = linear_backward(&cache, &Tensor::from_vec(&[1, 1], vec![2.0]).unwrap()).unwrap();
        assert_eq!(g.input.data(), &[6., 8.]);
        assert_eq!(g.weight.data(), &[2., 4.]);
        assert_eq!(g.bias.data(), &[2.]);
    }

    #[test]
    fn width_mismatch() {
        let x = Tensor::zeros(&[2, 3]);
        assert!(linear_forward(&x, &Tensor::zeros(&[4, 5]), &Tensor::zeros(&[4])).is_err());
    }
}
