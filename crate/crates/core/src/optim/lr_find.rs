use super::step::sgd_step;
use crate::data::{epoch_order, make_batch, Dataset};
use crate::error::{Error, Result};
use crate::loss::softmax_cross_entropy_batch;
use crate::nn::Network;
use crate::rng::{derive_seed, tag};

pub const DEFAULT_LR_MIN: f64 = 1e-7;
pub const DEFAULT_LR_MAX: f64 = 10.0;
pub const DEFAULT_SWEEP_STEPS: usize = 100;
pub const DEFAULT_SMOOTHING: f64 = 0.98;
/// The sweep stops once the smoothed loss exceeds this multiple of the best one.
pub const DIVERGENCE_FACTOR: f64 = 4.0;
pub const MIN_SWEEP_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub lr: f64,
    pub loss: f64,
    pub smoothed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub points: Vec<SweepPoint>,
    pub lr_min: f64,
    pub lr_max: f64,
    /// True when the sweep stopped before `lr_max` because the loss diverged.
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub lr_min: f64,
    pub lr_max: f64,
    pub steps: usize,
    pub beta: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            lr_min: DEFAULT_LR_MIN,
            lr_max: DEFAULT_LR_MAX,
            steps: DEFAULT_SWEEP_STEPS,
            beta: DEFAULT_SMOOTHING,
            batch_size: 64,
            seed: 0,
        }
    }
}

fn check_range(lr_min: f64, lr_max: f64, steps: usize, beta: f64) -> Result<()> {
    if !(lr_min > 0.0 && lr_min < lr_max && lr_max.is_finite()) {
        return Err(Error::config(format!("need 0 < lr_min < lr_max, got {lr_min} and {lr_max}")));
    }
    if steps < MIN_SWEEP_STEPS {
        return Err(Error::config(format!("a sweep needs at least {MIN_SWEEP_STEPS} steps, got {steps}")));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::config(format!("smoothing factor {beta} outside [0, 1)")));
    }
    Ok(())
}

/// `lr_k = lr_min · (lr_max / lr_min)^(k / (steps − 1))`.
pub fn sweep_lrs(lr_min: f64, lr_max: f64, steps: usize) -> Vec<f64> {
    let ratio = lr_max / lr_min;
    (0..steps)
        .map(|k| {
            if k + 1 == steps {
                lr_max
            } else {
                lr_min * ratio.powf(k as f64 / (steps - 1) as f64)
            }
        })
        .collect()
}

/// Sweep driver over any objective. `objective(lr)` performs one training
/// step at `lr` and returns the loss measured for it. A non-finite loss or a
/// numeric error counts as divergence.
pub fn lr_sweep_with(
    mut objective: impl FnMut(f64) -> Result<f64>,
    lr_min: f64,
    lr_max: f64,
    steps: usize,
    beta: f64,
) -> Result<SweepRecord> {
    check_range(lr_min, lr_max, steps, beta)?;
    let mut points = Vec::with_capacity(steps);
    let mut avg = 0.0;
    let mut best = f64::INFINITY;
    let mut aborted = false;
    for (k, lr) in sweep_lrs(lr_min, lr_max, steps).into_iter().enumerate() {
        let loss = match objective(lr) {
            Ok(loss) if loss.is_finite() => loss,
            Ok(_) | Err(Error::Numeric(_)) => {
                aborted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        avg = beta * avg + (1.0 - beta) * loss;
        let smoothed = avg / (1.0 - beta.powi(k as i32 + 1));
        points.push(SweepPoint { lr, loss, smoothed });
        if smoothed > DIVERGENCE_FACTOR * best {
            aborted = true;
            break;
        }
        best = best.min(smoothed);
    }
    Ok(SweepRecord {
        points,
        lr_min,
        lr_max,
        aborted,
    })
}

/// Learning-rate range test on a throwaway copy of `net`: one mini-batch
/// SGD step per learning rate, recording the loss of that mini-batch.
pub fn lr_sweep(net: &Network, data: &Dataset, settings: &SweepSettings) -> Result<SweepRecord> {
    if data.is_empty() {
        return Err(Error::config("cannot sweep on an empty dataset"));
    }
    if settings.batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    let mut model = net.clone();
    let n = data.len();
    let per_pass = n.div_ceil(settings.batch_size);
    let order_seed = derive_seed(settings.seed, &[tag::SWEEP]);
    let mut step = 0usize;
    let objective = |lr: f64| -> Result<f64> {
        let pass = step / per_pass;
        let start = (step % per_pass) * settings.batch_size;
        step += 1;
        let order = epoch_order(n, Some(order_seed), pass);
        let indices = &order[start..(start + settings.batch_size).min(n)];
        let batch = make_batch(data, indices, model.input_size)?;
        let (logits, ctx) = model.forward(&batch.images)?;
        let loss = softmax_cross_entropy_batch(&logits, &batch.targets, batch.len())?;
        model.backward(ctx, &loss.grad)?;
        sgd_step(&mut model, lr)?;
        Ok(loss.mean)
    };
    lr_sweep_with(objective, settings.lr_min, settings.lr_max, settings.steps, settings.beta)
}

/// One decade before the smoothed-loss minimum, clamped into the swept range.
pub fn suggest_lr_valley(record: &SweepRecord) -> Result<f64> {
    if record.points.len() < MIN_SWEEP_STEPS {
        return Err(Error::NoValley(format!(
            "sweep recorded only {} point(s) before stopping",
            record.points.len()
        )));
    }
    let (argmin, _) = record
        .points
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, p)| if p.smoothed < bv { (i, p.smoothed) } else { (bi, bv) });
    if argmin == 0 {
        return Err(Error::NoValley("loss rises from the first learning rate".into()));
    }
    Ok((record.points[argmin].lr / 10.0).clamp(record.lr_min, record.lr_max))
}
