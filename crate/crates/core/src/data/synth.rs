//! Procedural stand-in for a folder-per-class leaf image dataset.
//!
//! Class `k` of `K` gets a background hue of `k/K`, a class-specific
//! foreground pattern (disk, horizontal bands, vertical bands or a
//! checkerboard, cycling with `k`), random placement and Gaussian pixel
//! noise with σ = 0.05. Pixels are quantized to 8 bits so the in-memory and
//! on-disk versions are identical.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::Dataset;
use super::ppm::encode_ppm;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::tensor::{Shape2D, Tensor};

pub const NOISE_SIGMA: f32 = 0.05;

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

pub fn class_name(class: usize) -> String {
    format!("class_{class}")
}

fn check_classes(num_classes: usize) -> Result<()> {
    if !(2..=10).contains(&num_classes) {
        return Err(Error::config(format!("synthetic data supports 2..=10 classes, got {num_classes}")));
    }
    Ok(())
}

/// Example `index` of class `class`; a pure function of its arguments.
pub fn synthetic_image(class: usize, num_classes: usize, index: usize, size: Shape2D, seed: u64) -> Tensor {
    let mut rng = stream(seed, &[tag::SYNTH, class as u64, index as u64]);
    let (h, w) = (size.height, size.width);
    let hue = class as f32 / num_classes as f32;
    let background = hsv_to_rgb(hue, 0.55, 0.6 + rng.random_range(-0.08..0.08));
    let foreground = hsv_to_rgb(hue + 0.5, 0.6, 0.9 + rng.random_range(-0.05..0.05));
    let side = h.min(w) as f32;
    let (cy, cx) = (rng.random_range(0.3..0.7) * h as f32, rng.random_range(0.3..0.7) * w as f32);
    let radius = rng.random_range(0.15..0.3) * side;
    let period = rng.random_range(0.2..0.35) * side;
    let phase = rng.random_range(0.0..period);
    let pattern = class % 4;
    let noise = Normal::new(0.0f32, NOISE_SIGMA).expect("valid sigma");
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (y as f32 + 0.5, x as f32 + 0.5);
            let band = |t: f32| ((t + phase) / period).floor() as i64 % 2 == 0;
            let on = match pattern {
                0 => (fy - cy).powi(2) + (fx - cx).powi(2) <= radius * radius,
                1 => band(fy),
                2 => band(fx),
                _ => band(fy) ^ band(fx),
            };
            let color = if on { foreground } else { background };
            for c in 0..3 {
                let v = (color[c] + noise.sample(&mut rng)).clamp(0.0, 1.0);
                data[(c * h + y) * w + x] = (v * 255.0).round() / 255.0;
            }
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("shape matches")
}

/// In-memory synthetic dataset, items ordered by class then index.
pub fn synthetic_dataset(num_classes: usize, per_class: usize, size: Shape2D, seed: u64) -> Result<Dataset> {
    check_classes(num_classes)?;
    let images = (0..num_classes)
        .flat_map(|k| (0..per_class).map(move |i| (k, i)))
        .map(|(k, i)| (synthetic_image(k, num_classes, i, size, seed), k))
        .collect();
    Dataset::from_memory((0..num_classes).map(class_name).collect(), images)
}

/// Write `out/class_<k>/img_<i>.ppm` for every class and example.
pub fn gen_synthetic_dataset(
    out: &Path,
    num_classes: usize,
    per_class: usize,
    size: Shape2D,
    seed: u64,
) -> Result<()> {
    check_classes(num_classes)?;
    for k in 0..num_classes {
        let dir = out.join(class_name(k));
        fs::create_dir_all(&dir)?;
        for i in 0..per_class {
            let img = synthetic_image(k, num_classes, i, size, seed);
            fs::write(dir.join(format!("img_{i:05}.ppm")), encode_ppm(&img, 255)?)?;
        }
    }
    Ok(())
}
