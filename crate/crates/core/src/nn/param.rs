use serde::{Deserialize, Serialize};

use crate::tensor::{Precision, Tensor};

/// A learnable tensor: full-precision master, a working copy in the
/// network's compute precision, and a full-precision gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub master: Tensor,
    pub working: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
    /// Running low-order error of the master update (compensated summation).
    #[serde(skip)]
    pub(crate) compensation: Vec<f32>,
}

impl Parameter {
    pub fn new(master: Tensor, precision: Precision) -> Self {
        let master = master.cast(crate::tensor::Precision::Full32);
        let working = master.cast(precision);
        let grad = Tensor::zeros(master.shape());
        let compensation = vec![0.0; master.len()];
        Parameter {
            master,
            working,
            grad,
            trainable: true,
            compensation,
        }
    }

    /// Refresh the working copy from the master.
    pub fn sync(&mut self, precision: Precision) {
        if self.working.precision() != precision {
            self.working = self.master.cast(precision);
        } else {
            self.working.assign_from(&self.master);
        }
    }

    /// `master ← master − lr · grad / grad_divisor` in f32 with Kahan
    /// compensation, then refresh the working copy.
    pub(crate) fn apply_update(&mut self, lr: f32, grad_divisor: f32, precision: Precision) {
        if self.compensation.len() != self.master.len() {
            self.compensation = vec![0.0; self.master.len()];
        }
        let grads = self.grad.data();
        for ((m, c), &g) in self.master.data_mut().iter_mut().zip(&mut self.compensation).zip(grads) {
            let y = -(lr * (g / grad_divisor)) - *c;
            let t = *m + y;
            *c = (t - *m) - y;
            *m = t;
        }
        self.sync(precision);
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub(crate) fn accumulate(&mut self, contribution: &[f32]) {
        for (g, c) in self.grad.data_mut().iter_mut().zip(contribution) {
            *g += c;
        }
    }

    pub fn len(&self) -> usize {
        self.master.len()
    }

    pub fn is_empty(&self) -> bool {
        self.master.is_empty()
    }
}
