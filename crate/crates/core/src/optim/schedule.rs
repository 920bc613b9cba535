use super::config::ResizeSchedule;
use crate::error::{Error, Result};
use crate::tensor::Shape2D;

/// What the progressive-resizing controller asks for at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleStep {
    pub size: Shape2D,
    /// Freeze the body and train only the head from this epoch on.
    pub freeze_body: bool,
}

pub(crate) fn validate_schedule(s: &ResizeSchedule) -> Result<()> {
    if s.large.height < s.small.height || s.large.width < s.small.width {
        return Err(Error::config(format!(
            "resize schedule shrinks images from {} to {}",
            s.small, s.large
        )));
    }
    if s.switch_epoch == 0 {
        return Err(Error::config("resize switch epoch is 1-based"));
    }
    Ok(())
}

/// Image size for the 1-based `epoch`. The freeze instruction is emitted
/// only at the switch epoch itself. Without a schedule the size is `base`
/// throughout.
pub fn progressive_schedule(schedule: Option<&ResizeSchedule>, base: Shape2D, epoch: usize) -> Result<ScheduleStep> {
    let Some(s) = schedule else {
        return Ok(ScheduleStep {
            size: base,
            freeze_body: false,
        });
    };
    validate_schedule(s)?;
    Ok(if epoch < s.switch_epoch {
        ScheduleStep {
            size: s.small,
            freeze_body: false,
        }
    } else {
        ScheduleStep {
            size: s.large,
            freeze_body: epoch == s.switch_epoch,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(n: usize) -> Shape2D {
        Shape2D::square(n).unwrap()
    }

    #[test]
    fn switch_semantics() {
        let s = ResizeSchedule {
            small: sq(128),
            switch_epoch: 4,
            large: sq(224),
        };
        let steps: Vec<ScheduleStep> = (1..=6).map(|e| progressive_schedule(Some(&s), sq(64), e).unwrap()).collect();
        assert_eq!(steps[1], ScheduleStep { size: sq(128), freeze_body: false });
        assert_eq!(steps[3], ScheduleStep { size: sq(224), freeze_body: true });
        assert_eq!(steps.iter().filter(|s| s.freeze_body).count(), 1);
        assert!(steps[4..].iter().all(|s| s.size == sq(224)));
    }

    #[test]
    fn no_schedule_is_constant() {
        for e in 1..5 {
            let step = progressive_schedule(None, sq(32), e).unwrap();
            assert_eq!(step, ScheduleStep { size: sq(32), freeze_body: false });
        }
    }

    #[test]
    fn shrinking_schedule_rejected() {
        let s = ResizeSchedule {
            small: sq(224),
            switch_epoch: 2,
            large: sq(128),
        };
        assert!(matches!(progressive_schedule(Some(&s), sq(32), 1), Err(Error::Config(_))));
    }
}
