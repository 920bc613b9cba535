use crate::error::{Error, Result};
use crate::nn::Network;

/// Vanilla SGD on every trainable parameter:
/// `master ← master − lr · grad`, working copy refreshed, gradients zeroed.
///
/// Fails without touching any weight if a trainable gradient is not finite.
pub fn sgd_step(net: &mut Network, lr: f64) -> Result<()> {
    check_finite(net)?;
    apply(net, lr, 1.0);
    Ok(())
}

fn check_finite(net: &Network) -> Result<()> {
    for (name, p) in net.param_names().iter().zip(net.params()) {
        if p.trainable && !p.grad.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in {name}")));
        }
    }
    Ok(())
}

fn apply(net: &mut Network, lr: f64, grad_divisor: f32) {
    let precision = net.precision();
    for p in net.params_mut() {
        if p.trainable {
            p.apply_update(lr as f32, grad_divisor, precision);
        }
        p.zero_grad();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Gradients overflowed; weights untouched.
    Skipped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MixedPrecisionStats {
    pub applied: usize,
    pub skipped: usize,
}

/// Update from gradients of a loss pre-multiplied by `loss_scale`: the
/// gradient is unscaled in f32, the f32 master updated, and the working
/// copy re-derived from it. An inf/NaN gradient skips the step.
pub fn mixed_precision_step(
    net: &mut Network,
    lr: f64,
    loss_scale: f32,
    stats: &mut MixedPrecisionStats,
) -> Result<StepOutcome> {
    if !(loss_scale.is_finite() && loss_scale > 0.0) {
        return Err(Error::config(format!("loss scale must be positive, got {loss_scale}")));
    }
    if check_finite(net).is_err() {
        net.zero_grad();
        stats.skipped += 1;
        return Ok(StepOutcome::Skipped);
    }
    apply(net, lr, loss_scale);
    stats.applied += 1;
    Ok(StepOutcome::Applied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Network, TrainableSelector, Architecture};
    use crate::tensor::{round_to_half, Precision, Shape2D, Tensor};

    /// Flatten → Linear(2) over a 1×1×1 input: weight [2,1], bias [2].
    fn tiny() -> Network {
        let mut net = Network::from_specs(
            Architecture::Custom,
            vec![LayerSpec::Flatten, LayerSpec::Linear { out_features: 2 }],
            1,
            Shape2D::square(1).unwrap(),
            2,
            0,
        )
        .unwrap();
        for p in net.params_mut() {
            p.master.fill(1.0);
            p.sync(Precision::Full32);
        }
        net
    }

    fn set_grads(net: &mut Network, g: f32) {
        for p in net.params_mut() {
            p.grad.fill(g);
        }
    }

    #[test]
    fn plain_update() {
        let mut net = tiny();
        set_grads(&mut net, 0.5);
        sgd_step(&mut net, 0.1).unwrap();
        for p in net.params() {
            assert!(p.master.data().iter().all(|&w| (w - 0.95).abs() < 1e-7));
            assert!(p.grad.data().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn zero_grad_or_zero_lr_leaves_weights() {
        let mut net = tiny();
        let before = net.params()[0].master.clone();
        sgd_step(&mut net, 0.1).unwrap();
        assert_eq!(net.params()[0].master, before);
        set_grads(&mut net, 3.0);
        sgd_step(&mut net, 0.0).unwrap();
        assert_eq!(net.params()[0].master, before);
        assert!(net.params().iter().all(|p| p.grad.data().iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn non_finite_gradient_is_reported_by_name() {
        let mut net = tiny();
        net.params_mut()[1].grad.data_mut()[0] = f32::NAN;
        let err = sgd_step(&mut net, 0.1).unwrap_err().to_string();
        assert!(err.contains("layer1.bias"), "{err}");
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut net = tiny();
        net.set_trainable(&TrainableSelector::Mask(vec![true])).unwrap();
        net.params_mut()[1].trainable = false;
        set_grads(&mut net, 1.0);
        sgd_step(&mut net, 0.5).unwrap();
        assert_eq!(net.params()[1].master.data(), &[1.0, 1.0]);
        assert_eq!(net.params()[0].master.data(), &[0.5, 0.5]);
    }

    #[test]
    fn master_accumulates_below_half_spacing() {
        let mut net = tiny();
        net.set_precision(Precision::Half16);
        let mut stats = MixedPrecisionStats::default();
        set_grads(&mut net, 1e-3);
        mixed_precision_step(&mut net, 0.1, 1.0, &mut stats).unwrap();
        let p = &net.params()[0];
        assert!((p.master.data()[0] - 0.9999).abs() < 1e-7);
        assert_eq!(p.working.data()[0], 1.0);
        // The same update applied directly in half precision is lost.
        assert_eq!(round_to_half(round_to_half(1.0) - round_to_half(1e-4)), 1.0);
    }

    #[test]
    fn unit_scale_matches_sgd() {
        let mut a = tiny();
        let mut b = tiny();
        set_grads(&mut a, 0.37);
        set_grads(&mut b, 0.37);
        sgd_step(&mut a, 0.05).unwrap();
        mixed_precision_step(&mut b, 0.05, 1.0, &mut MixedPrecisionStats::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_scale_is_divided_out() {
        let mut a = tiny();
        set_grads(&mut a, 0.5 * 1024.0);
        mixed_precision_step(&mut a, 0.1, 1024.0, &mut MixedPrecisionStats::default()).unwrap();
        assert!((a.params()[0].master.data()[0] - 0.95).abs() < 1e-7);
    }

    #[test]
    fn overflow_skips_step() {
        let mut net = tiny();
        net.set_precision(Precision::Half16);
        let before: Vec<Tensor> = net.params().iter().map(|p| p.master.clone()).collect();
        set_grads(&mut net, 0.1);
        net.params_mut()[0].grad.data_mut()[1] = f32::INFINITY;
        let mut stats = MixedPrecisionStats::default();
        let outcome = mixed_precision_step(&mut net, 0.1, 1.0, &mut stats).unwrap();
        assert_eq!(outcome, StepOutcome::Skipped);
        assert_eq!(stats, MixedPrecisionStats { applied: 0, skipped: 1 });
        for (p, b) in net.params().iter().zip(&before) {
            assert_eq!(&p.master, b);
            assert!(p.grad.data().iter().all(|&g| g == 0.0));
        }
    }
}
