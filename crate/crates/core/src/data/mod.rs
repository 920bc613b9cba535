//! Image ingestion: PPM codec, class-per-directory datasets, stratified
//! splits, batching and a synthetic dataset generator.

mod dataset;
mod ppm;
mod synth;

pub use dataset::{
    batch_iterator, epoch_order, load_image_dataset, make_batch, stratified_split, stratified_split_with_holdout,
    Batch, BatchIter, Dataset, ImageSource, Item, Part, Split,
};
pub use ppm::{decode_ppm, encode_ppm};
pub use synth::{class_name, gen_synthetic_dataset, synthetic_dataset, synthetic_image, NOISE_SIGMA};
