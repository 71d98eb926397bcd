//! Boundary detection: binary EP classifiers composed One-versus-Rest.

pub mod ep;
pub mod ovr;
pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{common_dim, InputPoint};
use crate::regression::sorted_sample;

pub use ep::{optimize_hyper_classifier, probit_prob, BinaryDataset, BinaryGpClassifier, EpSettings, EpState};
pub use ovr::{optimize_ovr_hyper, OvrClassifier, OvrHyperSettings};

/// Region labels: 1 no depolarisation, 2 valid action potential, 3 no repolarisation.
pub const CLASSES: [u8; 3] = [1, 2, 3];

/// Inputs with region labels in `{1, 2, 3}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationDataset {
    inputs: Vec<InputPoint>,
    labels: Vec<u8>,
}

impl ClassificationDataset {
    pub fn new(inputs: Vec<InputPoint>, labels: Vec<u8>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::input(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| !CLASSES.contains(l)) {
            return Err(Error::input(format!("class label must be 1, 2 or 3, got {l}")));
        }
        common_dim(&inputs)?;
        Ok(ClassificationDataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, InputPoint::dim)
    }

    pub fn inputs(&self) -> &[InputPoint] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn push(&mut self, x: InputPoint, label: u8) -> Result<()> {
        if !CLASSES.contains(&label) {
            return Err(Error::input(format!("class label must be 1, 2 or 3, got {label}")));
        }
        if !self.is_empty() && x.dim() != self.dim() {
            return Err(Error::input("dimension mismatch in pushed point"));
        }
        self.inputs.push(x);
        self.labels.push(label);
        Ok(())
    }

    /// Number of points per class, indexed by `label − 1`.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for l in &self.labels {
            c[(*l - 1) as usize] += 1;
        }
        c
    }

    /// One-versus-Rest relabeling: `+1` for class `k`, `−1` otherwise.
    pub fn binary(&self, k: u8) -> BinaryDataset {
        let labels = self.labels.iter().map(|l| if *l == k { 1 } else { -1 }).collect();
        BinaryDataset::new(self.inputs.clone(), labels).expect("labels are ±1 by construction")
    }

    /// Seeded random subset of at most `max` points, in original order.
    pub fn subsample(&self, max: usize, seed: u64) -> Self {
        if self.len() <= max {
            return self.clone();
        }
        let idx = sorted_sample(self.len(), max, seed);
        ClassificationDataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Per-point OVR output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    /// Binary-task probabilities for classes 1, 2, 3 (not normalized).
    pub probs: [f64; 3],
    pub label: u8,
    /// Gap between the largest and second-largest probability.
    pub certainty: f64,
}

impl ClassPrediction {
    pub fn from_probs(probs: [f64; 3]) -> Self {
        let (label, certainty) = argmax_and_certainty(&probs);
        ClassPrediction {
            probs,
            label,
            certainty,
        }
    }
}

/// Argmax class (lowest index wins ties) and `max − second max`.
pub fn argmax_and_certainty(probs: &[f64; 3]) -> (u8, f64) {
    let mut best = 0;
    for k in 1..3 {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    let second = (0..3)
        .filter(|&k| k != best)
        .map(|k| probs[k])
        .fold(f64::NEG_INFINITY, f64::max);
    (best as u8 + 1, probs[best] - second)
}

/// Certainty `c = max(π) − second-max(π)`.
pub fn certainty(probs: &[f64; 3]) -> f64 {
    argmax_and_certainty(probs).1
}
