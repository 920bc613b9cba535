use serde::{Deserialize, Serialize};

use crate::augment::AugPolicy;
use crate::error::{Error, Result};
use crate::tensor::Shape2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PrecisionMode {
    #[default]
    Full,
    /// Half-precision forward/backward with full-precision master weights.
    Mixed,
}

impl std::str::FromStr for PrecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp32" | "full" => Ok(PrecisionMode::Full),
            "mixed" | "fp16" => Ok(PrecisionMode::Mixed),
            other => Err(Error::config(format!("unknown precision `{other}`"))),
        }
    }
}

/// Train on `small` images until `switch_epoch`, then on `large` with the body frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResizeSchedule {
    pub small: Shape2D,
    /// 1-based epoch at which the large size takes over.
    pub switch_epoch: usize,
    pub large: Shape2D,
}

impl std::str::FromStr for ResizeSchedule {
    type Err = Error;

    /// `SMALL:EPOCH:LARGE`, sizes as `HxW` or a single side.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [small, epoch, large] = parts[..] else {
            return Err(Error::config(format!("resize schedule `{s}` is not SMALL:EPOCH:LARGE")));
        };
        let switch_epoch = epoch
            .parse()
            .map_err(|_| Error::config(format!("invalid switch epoch `{epoch}`")))?;
        Ok(ResizeSchedule {
            small: small.parse()?,
            switch_epoch,
            large: large.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Number of micro-batches whose gradients are summed before one step.
    pub accum_factor: usize,
    pub precision: PrecisionMode,
    pub epochs: usize,
    pub seed: u64,
    /// Mixup Beta(α, α) parameter, or `None` for no mixup.
    pub mixup: Option<f64>,
    pub aug_policy: AugPolicy,
    pub resize_schedule: Option<ResizeSchedule>,
    pub loss_scale: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            batch_size: 64,
            accum_factor: 1,
            precision: PrecisionMode::Full,
            epochs: 1,
            seed: 0,
            mixup: None,
            aug_policy: AugPolicy::Minimal,
            resize_schedule: None,
            loss_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it is the "no-op training" control.
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.accum_factor == 0 {
            return Err(Error::config("batch size and accumulation factor must be >= 1"));
        }
        if self.batch_size % self.accum_factor != 0 {
            return Err(Error::config(format!(
                "batch size {} is not divisible by accumulation factor {}",
                self.batch_size, self.accum_factor
            )));
        }
        if !(self.loss_scale.is_finite() && self.loss_scale > 0.0) {
            return Err(Error::config(format!("loss scale must be positive, got {}", self.loss_scale)));
        }
        if let Some(alpha) = self.mixup {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::config(format!("mixup alpha must be positive, got {alpha}")));
            }
        }
        if let Some(s) = &self.resize_schedule {
            super::schedule::validate_schedule(s)?;
        }
        Ok(())
    }

    pub fn micro_batch_size(&self) -> usize {
        self.batch_size / self.accum_factor
    }

    /// Stable FNV-1a digest of the configuration, for checkpoint metadata.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { batch_size: 30, accum_factor: 4, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let ok = TrainConfig { batch_size: 32, accum_factor: 4, ..Default::default() };
        assert_eq!(ok.micro_batch_size(), 8);
        assert!(TrainConfig { lr: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { loss_scale: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { mixup: Some(0.0), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn parse_schedule() {
        let s: ResizeSchedule = "128:4:224".parse().unwrap();
        assert_eq!(s.small, Shape2D::square(128).unwrap());
        assert_eq!(s.switch_epoch, 4);
        assert_eq!(s.large, Shape2D::square(224).unwrap());
        assert!("128:224".parse::<ResizeSchedule>().is_err());
        assert!("16x12:x:32".parse::<ResizeSchedule>().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = TrainConfig::default();
        assert_eq!(a.digest(), TrainConfig::default().digest());
        assert_ne!(a.digest(), TrainConfig { seed: 1, ..a.clone() }.digest());
    }
}
