use std::time::Instant;

use super::config::{PrecisionMode, TrainConfig};
use super::schedule::progressive_schedule;
use super::step::{mixed_precision_step, sgd_step, MixedPrecisionStats};
use crate::augment::{mixup_batch, AugPolicy};
use crate::data::{batch_iterator, Batch, Dataset};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::loss::softmax_cross_entropy_batch;
use crate::nn::{Network, TrainableSelector};
use crate::rng::{stream, tag};
use crate::tensor::{Precision, Shape2D, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub wall_seconds: f64,
    /// Mixed-precision steps skipped because of overflow.
    pub skipped_steps: usize,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub epochs: Vec<EpochMetrics>,
    pub steps: MixedPrecisionStats,
}

fn check_data(net: &Network, ds: &Dataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::config(format!("{what} set is empty")));
    }
    if ds.num_classes() != net.num_classes {
        return Err(Error::config(format!(
            "{what} set has {} classes, network predicts {}",
            ds.num_classes(),
            net.num_classes
        )));
    }
    Ok(())
}

fn augment_batch(batch: &mut Batch, policy: AugPolicy, seed: u64, epoch: usize) -> Result<()> {
    if policy == AugPolicy::None {
        return Ok(());
    }
    let shape = batch.images.shape().to_vec();
    let per = shape[1..].iter().product::<usize>();
    let pixels = batch.images.data_mut();
    for (row, &idx) in batch.indices.iter().enumerate() {
        let slot = &mut pixels[row * per..(row + 1) * per];
        let img = Tensor::from_vec(&shape[1..], slot.to_vec())?;
        let mut rng = stream(seed, &[tag::AUGMENT, epoch as u64, idx as u64]);
        slot.copy_from_slice(policy.apply(&img, &mut rng)?.data());
    }
    Ok(())
}

fn rows(t: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let mut shape = t.shape().to_vec();
    let per = t.len() / shape[0];
    shape[0] = end - start;
    Tensor::from_vec(&shape, t.data()[start * per..end * per].to_vec())
}

/// One pass over `train` at image size `size`, followed by a validation
/// pass at the network's input size.
///
/// Each batch is cut into micro-batches of `batch_size / accum_factor`
/// examples; every micro-batch loss is divided by the full batch length so
/// the summed gradient equals the gradient of the batch-mean loss. One
/// optimizer step follows the last micro-batch of each batch.
pub fn train_epoch(
    net: &mut Network,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    epoch: usize,
    stats: &mut MixedPrecisionStats,
) -> Result<EpochMetrics> {
    config.validate()?;
    check_data(net, train, "training")?;
    check_data(net, val, "validation")?;
    let started = Instant::now();
    let mixed = config.precision == PrecisionMode::Mixed;
    let micro = config.micro_batch_size();
    let skipped_before = stats.skipped;
    let mut loss_sum = 0.0f64;
    let mut seen = 0usize;
    let batches = batch_iterator(train, config.batch_size, Some(config.seed), epoch, net.input_size)?;
    for (b, batch) in batches.enumerate() {
        let mut batch = batch?;
        augment_batch(&mut batch, config.aug_policy, config.seed, epoch)?;
        let (images, targets) = match config.mixup {
            Some(alpha) if batch.len() >= 2 => {
                let mut rng = stream(config.seed, &[tag::MIXUP, epoch as u64, b as u64]);
                let mixed = mixup_batch(&batch.images, &batch.targets, &mut rng, alpha)?;
                (mixed.images, mixed.targets)
            }
            _ => (batch.images, batch.targets),
        };
        let n = images.shape()[0];
        let mut overflow = false;
        let mut start = 0;
        while start < n {
            let end = (start + micro).min(n);
            let x = rows(&images, start, end)?;
            let y = rows(&targets, start, end)?;
            let (logits, ctx) = net.forward(&x)?;
            let loss = match softmax_cross_entropy_batch(&logits, &y, n) {
                Ok(loss) => loss,
                Err(Error::Numeric(_)) if mixed => {
                    overflow = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            loss_sum += loss.per_example.iter().sum::<f64>();
            seen += end - start;
            let grad = if mixed && config.loss_scale != 1.0 {
                loss.grad.scale(config.loss_scale)
            } else {
                loss.grad
            };
            net.backward(ctx, &grad)?;
            start = end;
        }
        if mixed {
            if overflow {
                net.zero_grad();
                stats.skipped += 1;
            } else {
                mixed_precision_step(net, config.lr, config.loss_scale, stats)?;
            }
        } else {
            sgd_step(net, config.lr)?;
        }
    }
    let report = evaluate(net, val, None)?;
    Ok(EpochMetrics {
        epoch,
        train_loss: if seen > 0 { loss_sum / seen as f64 } else { f64::NAN },
        val_loss: report.mean_loss,
        val_accuracy: report.accuracy,
        wall_seconds: started.elapsed().as_secs_f64(),
        skipped_steps: stats.skipped - skipped_before,
    })
}

/// Train for `config.epochs` epochs, applying the precision mode and the
/// progressive-resizing schedule. `on_epoch` sees each epoch's metrics as
/// soon as they are available.
pub fn fit_with(
    net: &mut Network,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<FitReport> {
    config.validate()?;
    check_data(net, train, "training")?;
    check_data(net, val, "validation")?;
    if config.resize_schedule.is_some() && !net.is_size_agnostic() {
        return Err(Error::config(
            "progressive resizing needs a network ending in global pooling; this one flattens a fixed-size map",
        ));
    }
    net.set_precision(match config.precision {
        PrecisionMode::Full => Precision::Full32,
        PrecisionMode::Mixed => Precision::Half16,
    });
    let base: Shape2D = net.input_size;
    let mut stats = MixedPrecisionStats::default();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let step = progressive_schedule(config.resize_schedule.as_ref(), base, epoch)?;
        if step.size != net.input_size {
            net.set_input_size(step.size)?;
        }
        if step.freeze_body {
            net.set_trainable(&TrainableSelector::HeadOnly)?;
        }
        let metrics = train_epoch(net, train, val, config, epoch, &mut stats)?;
        on_epoch(&metrics);
        epochs.push(metrics);
    }
    Ok(FitReport { epochs, steps: stats })
}

pub fn fit(net: &mut Network, train: &Dataset, val: &Dataset, config: &TrainConfig) -> Result<FitReport> {
    fit_with(net, train, val, config, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{stratified_split, synthetic_dataset};
    use crate::nn::{Architecture, LayerSpec};

    fn small_net(seed: u64) -> Network {
        Network::from_specs(
            Architecture::Custom,
            vec![
                LayerSpec::conv3x3(4),
                LayerSpec::ReLU,
                LayerSpec::MaxPool { window: 2, stride: 2 },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Linear { out_features: 2 },
            ],
            3,
            Shape2D::square(8).unwrap(),
            2,
            seed,
        )
        .unwrap()
    }

    fn data() -> (Dataset, Dataset) {
        let ds = synthetic_dataset(2, 20, Shape2D::square(8).unwrap(), 4).unwrap();
        let split = stratified_split(&ds, 0.25, 1).unwrap();
        (split.train, split.val)
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            lr: 0.05,
            batch_size: 8,
            epochs: 2,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let (train, val) = data();
        let mut a = small_net(1);
        let mut b = small_net(1);
        let ra = fit(&mut a, &train, &val, &cfg()).unwrap();
        let rb = fit(&mut b, &train, &val, &cfg()).unwrap();
        assert_eq!(a, b);
        for (x, y) in ra.epochs.iter().zip(&rb.epochs) {
            assert_eq!((x.train_loss, x.val_loss, x.val_accuracy), (y.train_loss, y.val_loss, y.val_accuracy));
        }
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let (train, val) = data();
        let mut net = small_net(2);
        let before = net.clone();
        let config = TrainConfig { lr: 0.0, epochs: 1, aug_policy: AugPolicy::None, ..cfg() };
        let r = fit(&mut net, &train, &val, &config).unwrap();
        assert_eq!(net, before);
        let initial = evaluate(&before, &train, None).unwrap();
        assert!((r.epochs[0].train_loss - initial.mean_loss).abs() < 1e-6);
    }

    #[test]
    fn resize_requires_global_pooling() {
        let (train, val) = data();
        let mut net = crate::nn::build_network(Architecture::BaselineConvNet, Shape2D::square(8).unwrap(), 2, 0).unwrap();
        let config = TrainConfig {
            resize_schedule: Some("8:2:16".parse().unwrap()),
            ..cfg()
        };
        assert!(matches!(fit(&mut net, &train, &val, &config), Err(Error::Config(_))));
    }

    #[test]
    fn progressive_resize_freezes_body() {
        let (train, val) = data();
        let mut net = small_net(3);
        let config = TrainConfig {
            epochs: 3,
            resize_schedule: Some("8:3:16".parse().unwrap()),
            ..cfg()
        };
        let mut seen = 0;
        fit_with(&mut net, &train, &val, &config, |_| seen += 1).unwrap();
        assert_eq!(seen, 3);
        assert_eq!(net.input_size, Shape2D::square(16).unwrap());
        assert!(!net.params()[0].trainable);
        assert!(net.params().last().unwrap().trainable);
        // The body after the switch epoch equals the body before it.
        let mut before_switch = small_net(3);
        fit(&mut before_switch, &train, &val, &TrainConfig { epochs: 2, ..config.clone() }).unwrap();
        assert_eq!(net.params()[0].master, before_switch.params()[0].master);
    }

    #[test]
    fn class_mismatch_rejected() {
        let ds = synthetic_dataset(3, 6, Shape2D::square(8).unwrap(), 4).unwrap();
        let split = stratified_split(&ds, 0.5, 1).unwrap();
        let mut net = small_net(0);
        assert!(matches!(fit(&mut net, &split.train, &split.val, &cfg()), Err(Error::Config(_))));
    }

    #[test]
    fn mixed_precision_with_mixup_trains() {
        let (train, val) = data();
        let mut net = small_net(4);
        let config = TrainConfig {
            precision: PrecisionMode::Mixed,
            mixup: Some(0.4),
            loss_scale: 128.0,
            aug_policy: AugPolicy::Full,
            ..cfg()
        };
        let r = fit(&mut net, &train, &val, &config).unwrap();
        assert_eq!(net.precision(), Precision::Half16);
        assert!(r.epochs.iter().all(|e| e.train_loss.is_finite()));
        for p in net.params() {
            let mut w = p.master.clone();
            w.cast_in_place(Precision::Half16);
            assert_eq!(w.data(), p.working.data());
        }
    }
}
