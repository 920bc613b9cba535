use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{adjust_lighting, affine_transform, horizontal_flip, random_crop, AffineParams};
use crate::error::{Error, Result};
use crate::tensor::{Shape2D, Tensor};

/// Magnitude of the brightness offset and contrast deviation.
pub const LIGHTING_JITTER: f32 = 0.1;
pub const FLIP_PROBABILITY: f64 = 0.5;
pub const ZOOM_RANGE: (f32, f32) = (0.75, 1.33);
pub const MAX_TRANSLATE: f32 = 0.1;
pub const MAX_SHEAR_DEGREES: f32 = 10.0;
pub const CROP_PADDING: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AugPolicy {
    None,
    /// Horizontal flip plus small lighting/contrast jitter.
    #[default]
    Minimal,
    /// Minimal plus zoom/stretch/squish/shear/translation and a padded random crop.
    Full,
}

impl std::str::FromStr for AugPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AugPolicy::None),
            "minimal" => Ok(AugPolicy::Minimal),
            "full" => Ok(AugPolicy::Full),
            other => Err(Error::config(format!("unknown augmentation policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for AugPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AugPolicy::None => "none",
            AugPolicy::Minimal => "minimal",
            AugPolicy::Full => "full",
        })
    }
}

impl AugPolicy {
    /// Apply one random draw of the policy to a CHW image. Output keeps
    /// the input's shape and lies in `[0, 1]`.
    pub fn apply<R: Rng + ?Sized>(&self, img: &Tensor, rng: &mut R) -> Result<Tensor> {
        if *self == AugPolicy::None {
            return Ok(img.clone());
        }
        let mut out = img.clone();
        if *self == AugPolicy::Full {
            let zoom = rng.random_range(ZOOM_RANGE.0..ZOOM_RANGE.1);
            let aspect = rng.random_range(0.9f32..1.1);
            let params = AffineParams {
                scale_x: (zoom * aspect).clamp(ZOOM_RANGE.0, ZOOM_RANGE.1),
                scale_y: (zoom / aspect).clamp(ZOOM_RANGE.0, ZOOM_RANGE.1),
                shear_degrees: rng.random_range(-MAX_SHEAR_DEGREES..MAX_SHEAR_DEGREES),
                translate: (
                    rng.random_range(-MAX_TRANSLATE..MAX_TRANSLATE),
                    rng.random_range(-MAX_TRANSLATE..MAX_TRANSLATE),
                ),
            };
            out = affine_transform(&out, params)?;
            let size = Shape2D {
                height: out.shape()[1],
                width: out.shape()[2],
            };
            out = random_crop(&out, size, CROP_PADDING, rng)?;
        }
        if rng.random_bool(FLIP_PROBABILITY) {
            out = horizontal_flip(&out)?;
        }
        let brightness = rng.random_range(-LIGHTING_JITTER..LIGHTING_JITTER);
        let contrast = rng.random_range(1.0 - LIGHTING_JITTER..1.0 + LIGHTING_JITTER);
        adjust_lighting(&out, brightness, contrast)
    }
}
