//! Training-time augmentation policies, mixup and test-time augmentation.

mod mixup;
mod ops;
mod policy;
mod tta;

pub use mixup::{mixup_batch, mixup_with, MixupBatch, DEFAULT_MIXUP_ALPHA};
pub use ops::{
    adjust_lighting, affine_transform, center_crop, crop_at, horizontal_flip, random_crop, random_crop_offset,
    AffineParams,
};
pub use policy::{AugPolicy, CROP_PADDING, FLIP_PROBABILITY, LIGHTING_JITTER, MAX_SHEAR_DEGREES, MAX_TRANSLATE, ZOOM_RANGE};
pub use tta::{average_predictions, predict_center, tta_predict, DEFAULT_TTA_COPIES};
