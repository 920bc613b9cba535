use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;

use super::ppm::decode_ppm;
use crate::error::{Error, Result};
use crate::loss::one_hot;
use crate::rng::{stream, tag};
use crate::tensor::{Shape2D, Tensor};

#[derive(Debug, Clone)]
pub enum ImageSource {
    /// Decoded on demand.
    File(PathBuf),
    Memory(Arc<Tensor>),
}

#[derive(Debug, Clone)]
pub struct Item {
    pub source: ImageSource,
    pub label: usize,
}

/// Labeled images with an ordered class vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<Item>,
    pub classes: Vec<String>,
    pub root: Option<PathBuf>,
}

impl Dataset {
    pub fn from_memory(classes: Vec<String>, images: Vec<(Tensor, usize)>) -> Result<Dataset> {
        if classes.len() < 2 {
            return Err(Error::config("a dataset needs at least two classes"));
        }
        let items = images
            .into_iter()
            .map(|(img, label)| {
                if label >= classes.len() {
                    return Err(Error::config(format!(
                        "label {label} outside {} classes",
                        classes.len()
                    )));
                }
                Ok(Item {
                    source: ImageSource::Memory(Arc::new(img)),
                    label,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            items,
            classes,
            root: None,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub fn image(&self, index: usize) -> Result<Tensor> {
        match &self.items[index].source {
            ImageSource::Memory(t) => Ok(t.as_ref().clone()),
            ImageSource::File(path) => read_ppm(path),
        }
    }

    /// The image at `index`, resized to `size`.
    pub fn image_at(&self, index: usize, size: Shape2D) -> Result<Tensor> {
        self.image(index)?.bilinear_resize(size)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            classes: self.classes.clone(),
            root: self.root.clone(),
        }
    }

    /// Decode every file-backed image into memory.
    pub fn preload(&self) -> Result<Dataset> {
        let items = self
            .items
            .iter()
            .map(|item| {
                let source = match &item.source {
                    ImageSource::File(path) => ImageSource::Memory(Arc::new(read_ppm(path)?)),
                    mem => mem.clone(),
                };
                Ok(Item {
                    source,
                    label: item.label,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            items,
            classes: self.classes.clone(),
            root: self.root.clone(),
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for item in &self.items {
            counts[item.label] += 1;
        }
        counts
    }
}

fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    decode_ppm(&bytes).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Load {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            !p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'))
        })
        .collect();
    entries.sort();
    Ok(entries)
}

/// Load a `root/<class_name>/*.ppm` tree. Class names are the sorted
/// subdirectory names; items are sorted by path. Every file is validated
/// up front but pixels are decoded only when requested.
pub fn load_image_dataset(root: &Path) -> Result<Dataset> {
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.len() < 2 {
        return Err(Error::Load {
            path: root.to_path_buf(),
            message: format!("need at least two class directories, found {}", class_dirs.len()),
        });
    }
    let mut classes = Vec::with_capacity(class_dirs.len());
    let mut items = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Load {
                path: dir.clone(),
                message: "class directory name is not UTF-8".into(),
            })?
            .to_string();
        let files: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| p.is_file()).collect();
        if files.is_empty() {
            return Err(Error::Load {
                path: dir.clone(),
                message: format!("class `{name}` has no images"),
            });
        }
        for file in files {
            read_ppm(&file)?;
            items.push(Item {
                source: ImageSource::File(file),
                label,
            });
        }
        classes.push(name);
    }
    Ok(Dataset {
        items,
        classes,
        root: Some(root.to_path_buf()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Holdout,
}

/// Disjoint train/validation(/holdout) views of one dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub holdout: Option<Dataset>,
    /// Which part each parent item went to.
    pub assignment: Vec<Part>,
}

fn round_half_even(x: f64) -> usize {
    x.round_ties_even().max(0.0) as usize
}

/// Per class: seeded shuffle, then the first `round(n_c · val_fraction)`
/// items (ties to even) go to validation.
pub fn stratified_split(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<Split> {
    stratified_split_with_holdout(ds, val_fraction, 0.0, seed)
}

pub fn stratified_split_with_holdout(
    ds: &Dataset,
    val_fraction: f64,
    holdout_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Split(format!("val fraction {val_fraction} outside (0, 1)")));
    }
    if !(0.0..1.0).contains(&holdout_fraction) || val_fraction + holdout_fraction >= 1.0 {
        return Err(Error::Split(format!(
            "holdout fraction {holdout_fraction} invalid with val fraction {val_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, item) in ds.items.iter().enumerate() {
        by_class[item.label].push(i);
    }
    let mut assignment = vec![Part::Train; ds.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < 2 {
            return Err(Error::Split(format!(
                "class `{}` has {} item(s); splitting needs at least 2",
                ds.classes[class],
                members.len()
            )));
        }
        members.shuffle(&mut stream(seed, &[tag::SPLIT, class as u64]));
        let n = members.len() as f64;
        let n_holdout = round_half_even(n * holdout_fraction);
        let n_val = round_half_even(n * val_fraction).min(members.len() - n_holdout);
        for &i in &members[..n_holdout] {
            assignment[i] = Part::Holdout;
        }
        for &i in &members[n_holdout..n_holdout + n_val] {
            assignment[i] = Part::Val;
        }
    }
    let pick = |part: Part| -> Vec<usize> { (0..ds.len()).filter(|&i| assignment[i] == part).collect() };
    Ok(Split {
        train: ds.subset(&pick(Part::Train)),
        val: ds.subset(&pick(Part::Val)),
        holdout: (holdout_fraction > 0.0).then(|| ds.subset(&pick(Part::Holdout))),
        assignment,
    })
}

/// One mini-batch: images `[N, C, H, W]`, one-hot targets `[N, K]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Tensor,
    pub targets: Tensor,
    pub labels: Vec<usize>,
    /// Dataset indices of the examples, in batch order.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Visit order for one epoch: a seeded permutation, or identity when `seed` is `None`.
pub fn epoch_order(n: usize, seed: Option<u64>, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = seed {
        order.shuffle(&mut stream(seed, &[tag::SHUFFLE, epoch as u64]));
    }
    order
}

pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    size: Shape2D,
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(make_batch(self.ds, &indices, self.size))
    }
}

/// Assemble a batch from dataset indices, resizing every image to `size`.
pub fn make_batch(ds: &Dataset, indices: &[usize], size: Shape2D) -> Result<Batch> {
    let k = ds.num_classes();
    let mut pixels = Vec::new();
    let mut targets = Vec::with_capacity(indices.len() * k);
    let mut labels = Vec::with_capacity(indices.len());
    let mut channels = None;
    for &i in indices {
        let img = ds.image_at(i, size)?;
        match channels {
            None => channels = Some(img.shape()[0]),
            Some(c) if c != img.shape()[0] => {
                return Err(Error::shape(format!("item {i} has {} channels, expected {c}", img.shape()[0])))
            }
            _ => {}
        }
        pixels.extend_from_slice(img.data());
        let label = ds.items[i].label;
        targets.extend(one_hot(label, k));
        labels.push(label);
    }
    let c = channels.ok_or_else(|| Error::config("empty batch"))?;
    Ok(Batch {
        images: Tensor::from_vec(&[indices.len(), c, size.height, size.width], pixels)?,
        targets: Tensor::from_vec(&[indices.len(), k], targets)?,
        labels,
        indices: indices.to_vec(),
    })
}

/// Batches over one epoch. The final batch may be short.
pub fn batch_iterator(
    ds: &Dataset,
    batch_size: usize,
    shuffle_seed: Option<u64>,
    epoch: usize,
    size: Shape2D,
) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    Ok(BatchIter {
        ds,
        order: epoch_order(ds.len(), shuffle_seed, epoch),
        pos: 0,
        batch_size,
        size,
    })
}
