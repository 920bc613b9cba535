//! Accuracy and confusion reports, test-time augmented evaluation and
//! weighted ensembles.

use crate::augment::{center_crop, tta_predict, AugPolicy};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{argmax, cross_entropy, one_hot, softmax_rows};
use crate::nn::Network;
use crate::rng::{stream, tag};
use crate::tensor::Tensor;

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub error_rate: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
    /// Mean cross-entropy of the (averaged) predictions.
    pub mean_loss: f64,
}

impl EvalReport {
    /// Build a report from one probability vector per example.
    pub fn from_predictions(probs: &[Vec<f32>], labels: &[usize], num_classes: usize) -> Result<EvalReport> {
        if probs.is_empty() {
            return Err(Error::config("cannot evaluate an empty dataset"));
        }
        if probs.len() != labels.len() {
            return Err(Error::shape(format!("{} predictions for {} labels", probs.len(), labels.len())));
        }
        let mut confusion = vec![vec![0usize; num_classes]; num_classes];
        let mut loss = 0.0;
        for (p, &label) in probs.iter().zip(labels) {
            if p.len() != num_classes || label >= num_classes {
                return Err(Error::shape(format!(
                    "prediction of length {} or label {label} does not fit {num_classes} classes",
                    p.len()
                )));
            }
            confusion[label][argmax(p)] += 1;
            loss += cross_entropy(p, &one_hot(label, num_classes))?;
        }
        let n = labels.len();
        let correct: usize = (0..num_classes).map(|k| confusion[k][k]).sum();
        let accuracy = correct as f64 / n as f64;
        Ok(EvalReport {
            accuracy,
            error_rate: 1.0 - accuracy,
            confusion,
            n,
            mean_loss: loss / n as f64,
        })
    }

    /// Confusion matrix as CSV: a `true\predicted` header row of class names,
    /// then one row per true class.
    pub fn confusion_csv(&self, classes: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for c in classes {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (c, row) in classes.iter().zip(&self.confusion) {
            out.push_str(c);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtaSettings {
    pub policy: AugPolicy,
    pub copies: usize,
    pub seed: u64,
}

impl TtaSettings {
    fn is_identity(&self) -> bool {
        self.policy == AugPolicy::None || self.copies == 0
    }
}

/// Softmax predictions for every example, center-cropped to the network's
/// input size.
pub fn predict_dataset(net: &Network, ds: &Dataset, tta: Option<&TtaSettings>) -> Result<Vec<Vec<f32>>> {
    if let Some(t) = tta.filter(|t| !t.is_identity()) {
        return (0..ds.len())
            .map(|i| {
                let mut rng = stream(t.seed, &[tag::TTA, i as u64]);
                tta_predict(net, &ds.image(i)?, t.policy, t.copies, &mut rng)
            })
            .collect();
    }
    let size = net.input_size;
    let mut probs = Vec::with_capacity(ds.len());
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let mut pixels = Vec::new();
        for &i in chunk {
            let img = center_crop(&ds.image(i)?, size)?;
            if img.shape()[0] != net.in_channels {
                return Err(Error::shape(format!(
                    "item {i} has {} channels, network expects {}",
                    img.shape()[0],
                    net.in_channels
                )));
            }
            pixels.extend_from_slice(img.data());
        }
        let batch = Tensor::from_vec(&[chunk.len(), net.in_channels, size.height, size.width], pixels)?;
        probs.extend(softmax_rows(&net.predict(&batch)?)?);
    }
    Ok(probs)
}

fn check_classes(net: &Network, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::config("cannot evaluate an empty dataset"));
    }
    if ds.num_classes() != net.num_classes {
        return Err(Error::config(format!(
            "dataset has {} classes, network predicts {}",
            ds.num_classes(),
            net.num_classes
        )));
    }
    Ok(())
}

/// Accuracy, confusion and loss of `net` on `ds`, optionally averaging
/// each prediction over test-time augmented copies.
pub fn evaluate(net: &Network, ds: &Dataset, tta: Option<&TtaSettings>) -> Result<EvalReport> {
    check_classes(net, ds)?;
    let probs = predict_dataset(net, ds, tta)?;
    EvalReport::from_predictions(&probs, &ds.labels(), net.num_classes)
}

#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub model: Network,
    pub classes: Vec<String>,
    pub weight: f64,
}

/// Two or more models sharing one class vocabulary, with positive weights.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    members: Vec<EnsembleMember>,
}

impl EnsembleSpec {
    pub fn new(members: Vec<EnsembleMember>) -> Result<EnsembleSpec> {
        if members.len() < 2 {
            return Err(Error::config(format!("an ensemble needs at least 2 members, got {}", members.len())));
        }
        let classes = &members[0].classes;
        for (i, m) in members.iter().enumerate() {
            if !(m.weight.is_finite() && m.weight > 0.0) {
                return Err(Error::config(format!("member {i} has invalid weight {}", m.weight)));
            }
            if &m.classes != classes || m.model.num_classes != classes.len() {
                return Err(Error::config(format!(
                    "member {i} classes {:?} differ from {:?}",
                    m.classes, classes
                )));
            }
        }
        Ok(EnsembleSpec { members })
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn classes(&self) -> &[String] {
        &self.members[0].classes
    }
}

/// `Σ w_m·p_m / Σ w_m`, accumulated in member order in `f64`.
pub fn weighted_average(predictions: &[Vec<f32>], weights: &[f64]) -> Result<Vec<f32>> {
    let k = predictions.first().map(Vec::len).ok_or_else(|| Error::config("nothing to average"))?;
    if predictions.len() != weights.len() || predictions.iter().any(|p| p.len() != k) {
        return Err(Error::shape("predictions and weights do not line up"));
    }
    let mut acc = vec![0.0f64; k];
    let mut total = 0.0f64;
    for (p, &w) in predictions.iter().zip(weights) {
        total += w;
        for (a, &v) in acc.iter_mut().zip(p) {
            *a += w * v as f64;
        }
    }
    Ok(acc.into_iter().map(|a| (a / total) as f32).collect())
}

/// Weighted mean of the members' softmax outputs for one CHW image.
pub fn ensemble_predict(spec: &EnsembleSpec, img: &Tensor) -> Result<Vec<f32>> {
    let preds = spec
        .members
        .iter()
        .map(|m| crate::augment::predict_center(&m.model, img))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = spec.members.iter().map(|m| m.weight).collect();
    weighted_average(&preds, &weights)
}

/// How the ensemble's errors relate to its members' errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDecomposition {
    pub member_error_rates: Vec<f64>,
    pub mean_member_error: f64,
    pub best_member_error: f64,
    pub ensemble_error: f64,
    /// Ensemble right although at least one member was wrong.
    pub rescued: usize,
    /// Ensemble wrong although at least one member was right.
    pub lost: usize,
    /// Every member and the ensemble wrong.
    pub all_wrong: usize,
}

#[derive(Debug, Clone)]
pub struct EnsembleReport {
    pub ensemble: EvalReport,
    pub members: Vec<EvalReport>,
    pub decomposition: ErrorDecomposition,
}

pub fn evaluate_ensemble(spec: &EnsembleSpec, ds: &Dataset) -> Result<EnsembleReport> {
    for m in &spec.members {
        check_classes(&m.model, ds)?;
    }
    let member_probs = spec
        .members
        .iter()
        .map(|m| predict_dataset(&m.model, ds, None))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = spec.members.iter().map(|m| m.weight).collect();
    let k = ds.num_classes();
    let labels = ds.labels();
    let mut combined = Vec::with_capacity(ds.len());
    let (mut rescued, mut lost, mut all_wrong) = (0, 0, 0);
    for (i, &label) in labels.iter().enumerate() {
        let per: Vec<Vec<f32>> = member_probs.iter().map(|p| p[i].clone()).collect();
        let avg = weighted_average(&per, &weights)?;
        let ens_ok = argmax(&avg) == label;
        let right = per.iter().filter(|p| argmax(p) == label).count();
        match (ens_ok, right) {
            (true, r) if r < per.len() => rescued += 1,
            (false, 0) => all_wrong += 1,
            (false, _) => lost += 1,
            _ => {}
        }
        combined.push(avg);
    }
    let ensemble = EvalReport::from_predictions(&combined, &labels, k)?;
    let members = member_probs
        .iter()
        .map(|p| EvalReport::from_predictions(p, &labels, k))
        .collect::<Result<Vec<_>>>()?;
    let member_error_rates: Vec<f64> = members.iter().map(|r| r.error_rate).collect();
    let decomposition = ErrorDecomposition {
        mean_member_error: member_error_rates.iter().sum::<f64>() / member_error_rates.len() as f64,
        best_member_error: member_error_rates.iter().cloned().fold(f64::INFINITY, f64::min),
        member_error_rates,
        ensemble_error: ensemble.error_rate,
        rescued,
        lost,
        all_wrong,
    };
    Ok(EnsembleReport {
        ensemble,
        members,
        decomposition,
    })
}
