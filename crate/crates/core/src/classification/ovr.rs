use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ep::{optimize_hyper_classifier, BinaryGpClassifier, EpSettings};
use super::{ClassPrediction, ClassificationDataset, CLASSES};
use crate::error::{Error, Result};
use crate::kernels::{InputPoint, Kernel, KernelFamily};
use crate::optimize::{self, HyperBounds, SearchSettings};
use crate::regression::Mode;

/// Three binary classifiers, one per region, sharing the training inputs.
#[derive(Debug, Clone)]
pub struct OvrClassifier {
    tasks: Vec<BinaryGpClassifier>,
}

impl OvrClassifier {
    /// Fits the three One-versus-Rest tasks; every class must be present.
    pub fn fit(data: &ClassificationDataset, kernels: &[Kernel; 3], mode: &Mode, ep: EpSettings) -> Result<Self> {
        let counts = data.counts();
        if let Some(k) = (0..3).find(|&k| counts[k] == 0) {
            return Err(Error::input(format!(
                "class {} is absent from the training data",
                CLASSES[k]
            )));
        }
        Self::fit_from(data, kernels, mode, ep, None)
    }

    /// Fits without requiring every class, optionally warm-starting EP from a
    /// previous fit whose training set is a prefix of `data`.
    ///
    /// A task whose class is absent is fitted to all-negative labels.
    pub fn fit_from(
        data: &ClassificationDataset,
        kernels: &[Kernel; 3],
        mode: &Mode,
        ep: EpSettings,
        warm: Option<&OvrClassifier>,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("classification dataset is empty"));
        }
        let tasks = (0..3usize)
            .into_par_iter()
            .map(|k| {
                let warm = warm.map(|w| {
                    let s = w.tasks[k].state();
                    (s.tau.as_slice(), s.nu.as_slice())
                });
                BinaryGpClassifier::fit_from(&data.binary(CLASSES[k]), kernels[k].clone(), mode.clone(), ep, warm)
                    .map_err(|e| match e {
                        Error::Numerical(m) => Error::Numerical(format!("class {}: {m}", CLASSES[k])),
                        other => other,
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OvrClassifier { tasks })
    }

    /// Binary classifier for class `k ∈ {1, 2, 3}`.
    pub fn task(&self, k: u8) -> &BinaryGpClassifier {
        &self.tasks[(k - 1) as usize]
    }

    pub fn kernels(&self) -> [Kernel; 3] {
        [0, 1, 2].map(|k| self.tasks[k].kernel().clone())
    }

    pub fn dim(&self) -> usize {
        self.tasks[0].dim()
    }

    pub fn len(&self) -> usize {
        self.tasks[0].data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-point probabilities, argmax label and certainty.
    pub fn predict(&self, xs: &[InputPoint]) -> Result<Vec<ClassPrediction>> {
        let probs = self
            .tasks
            .iter()
            .map(|t| t.predict_prob(xs))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..xs.len())
            .map(|i| ClassPrediction::from_probs([probs[0][i], probs[1][i], probs[2][i]]))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrHyperSettings {
    pub family: KernelFamily,
    pub bounds: HyperBounds,
    pub search: SearchSettings,
    /// One hyperparameter set for all three tasks instead of one per task.
    pub shared: bool,
    /// Evidence is evaluated on a seeded subsample of at most this many points.
    pub max_points: Option<usize>,
}

impl Default for OvrHyperSettings {
    fn default() -> Self {
        OvrHyperSettings {
            family: KernelFamily::SquaredExponential,
            bounds: HyperBounds::classifier(),
            search: SearchSettings::default(),
            shared: false,
            max_points: None,
        }
    }
}

/// Evidence-maximizing kernels for the three tasks.
///
/// Tasks whose class has no positive or no negative example keep their
/// initial kernel.
pub fn optimize_ovr_hyper(
    data: &ClassificationDataset,
    init: &[Kernel; 3],
    settings: &OvrHyperSettings,
    mode: &Mode,
    ep: EpSettings,
) -> Result<[Kernel; 3]> {
    let data = match settings.max_points {
        Some(m) => data.subsample(m, settings.search.seed),
        None => data.clone(),
    };
    let usable: Vec<bool> = CLASSES.iter().map(|&k| data.binary(k).has_both_labels()).collect();
    if settings.shared {
        let family = settings.family;
        let (lower, upper) = settings.bounds.log_box(family, data.dim());
        let tasks: Vec<_> = (0..3).filter(|&k| usable[k]).map(|k| data.binary(CLASSES[k])).collect();
        if tasks.is_empty() {
            return Ok(init.clone());
        }
        let objective = |p: &[f64]| -> Option<f64> {
            let kernel = Kernel::from_log_params(family, p);
            let mut total = 0.0;
            for t in &tasks {
                let v = BinaryGpClassifier::fit(t, kernel.clone(), mode.clone(), ep).ok()?.log_marginal();
                if !v.is_finite() {
                    return None;
                }
                total += v;
            }
            Some(total)
        };
        let best = optimize::maximize(objective, &init[0].log_params(), &lower, &upper, &settings.search)?;
        let k = Kernel::from_log_params(family, &best.params);
        return Ok([k.clone(), k.clone(), k]);
    }
    let fits = (0..3usize)
        .into_par_iter()
        .map(|k| {
            if !usable[k] {
                return Ok(init[k].clone());
            }
            let search = SearchSettings {
                seed: settings.search.seed.wrapping_add(k as u64),
                ..settings.search.clone()
            };
            optimize_hyper_classifier(
                &data.binary(CLASSES[k]),
                settings.family,
                &init[k],
                &settings.bounds,
                &search,
                mode,
                ep,
            )
            .map(|f| f.kernel)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok([fits[0].clone(), fits[1].clone(), fits[2].clone()])
}
