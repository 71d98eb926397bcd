use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_absolute_error, misclassification_rate, SurfaceSettings};
use crate::active::{
    self, classification_data, regression_data, ClassifierAlConfig, SurfaceAlConfig,
};
use crate::classification::OvrClassifier;
use crate::error::{Error, Result};
use crate::kernels::InputPoint;
use crate::regression::GpRegressor;
use crate::simulators::{Sample, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    RandomSurface,
    RandomClassifier,
    ActiveSurface,
    ActiveClassifier,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::RandomSurface => "random-surface",
            Strategy::RandomClassifier => "random-classifier",
            Strategy::ActiveSurface => "active-surface",
            Strategy::ActiveClassifier => "active-classifier",
        }
    }

    pub fn is_surface(self) -> bool {
        matches!(self, Strategy::RandomSurface | Strategy::ActiveSurface)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Strategy::RandomSurface,
            Strategy::RandomClassifier,
            Strategy::ActiveSurface,
            Strategy::ActiveClassifier,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::config(format!("unknown strategy `{s}`")))
    }
}

/// Shared inputs of a learning-curve experiment.
pub struct CurveSetup<'a> {
    pub sim: &'a dyn Simulator,
    pub test: &'a [Sample],
    pub classifier: ClassifierAlConfig,
    /// Initial design size for surface strategies.
    pub surface_n1: usize,
    pub surface: SurfaceAlConfig,
    pub surface_settings: SurfaceSettings,
    /// Classifier that filters surface candidates.
    pub filter: Option<&'a OvrClassifier>,
}

/// Error statistics at one budget: boundary error (%) for classifier
/// strategies, surface error for surface strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub strategy: Strategy,
    pub budget: usize,
    pub mean: f64,
    pub std: f64,
    pub repeats: usize,
}

/// Error versus simulator budget, averaged over `repeats` seeded runs.
///
/// Each repeat runs the strategy once up to the largest budget; smaller
/// budgets are scored by refitting on the corresponding prefix of the
/// training sequence with the same fixed hyperparameters.
pub fn learning_curve(
    strategy: Strategy,
    budgets: &[usize],
    repeats: usize,
    seed: u64,
    setup: &CurveSetup<'_>,
) -> Result<Vec<CurveRow>> {
    if repeats == 0 || budgets.is_empty() {
        return Err(Error::config("learning curves need at least one repeat and one budget"));
    }
    let errors = (0..repeats as u64)
        .into_par_iter()
        .map(|r| one_repeat(strategy, budgets, seed.wrapping_add(r), setup))
        .collect::<Result<Vec<_>>>()?;
    Ok(budgets
        .iter()
        .enumerate()
        .map(|(b, &budget)| {
            let v: Vec<f64> = errors.iter().map(|e| e[b]).collect();
            let (mean, std) = mean_std(&v);
            CurveRow {
                strategy,
                budget,
                mean,
                std,
                repeats,
            }
        })
        .collect())
}

/// Mean and sample standard deviation (0 for a single value).
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn one_repeat(strategy: Strategy, budgets: &[usize], seed: u64, setup: &CurveSetup<'_>) -> Result<Vec<f64>> {
    let max_b = *budgets.iter().max().expect("nonempty");
    let xs: Vec<InputPoint> = setup.test.iter().map(|s| s.x.clone()).collect();
    if strategy.is_surface() {
        let filter = setup
            .filter
            .ok_or_else(|| Error::config("surface learning curves need a filtering classifier"))?;
        let initial = active::initial_design(setup.sim, setup.surface_n1, seed, false)?;
        let reg = regression_data(&initial)?;
        let model = setup.surface_settings.fit_model(&reg, &setup.surface_settings.kernel, None)?;
        let cfg = SurfaceAlConfig {
            rounds: max_b.saturating_sub(initial.len()),
            seed,
            ..setup.surface.clone()
        };
        let run = if strategy == Strategy::ActiveSurface {
            active::active_learn_surface(setup.sim, filter, &reg, &model, &cfg)?
        } else {
            active::random_surface(setup.sim, filter, &reg, &model, &cfg)?
        };
        let valid: Vec<InputPoint> = setup
            .test
            .iter()
            .filter(|s| s.result.label() == 2)
            .map(|s| s.x.clone())
            .collect();
        budgets
            .iter()
            .map(|&b| {
                let k = b.saturating_sub(initial.len()).min(run.picks.len());
                let mut data = reg.dedup();
                for p in &run.picks[..k] {
                    if let Some(y) = p.result.value() {
                        data.push(p.point.clone(), y)?;
                    }
                }
                let m = GpRegressor::fit(&data, model.kernel.clone(), model.noise, model.sparse.mode_for(data.len()))?;
                mean_absolute_error(setup.test, &m.predict_mean(&valid)?)
            })
            .collect()
    } else {
        let base = ClassifierAlConfig {
            seed,
            rounds: 0,
            ..setup.classifier.clone()
        };
        let n_init = base.budget(setup.sim.dim());
        let cfg = ClassifierAlConfig {
            rounds: max_b.saturating_sub(n_init).div_ceil(base.pso.swarm_size),
            ..base
        };
        let run = if strategy == Strategy::ActiveClassifier {
            active::active_learn_classifier(setup.sim, &cfg)?
        } else {
            active::random_classifier(setup.sim, &cfg)?
        };
        budgets
            .iter()
            .map(|&b| {
                let n = b.min(run.samples.len());
                let clf = if n == run.samples.len() {
                    run.classifier.clone()
                } else {
                    let data = classification_data(&run.samples[..n])?;
                    OvrClassifier::fit_from(&data, &run.kernels, &cfg.sparse.mode_for(n), cfg.ep, None)?
                };
                let labels: Vec<u8> = clf.predict(&xs)?.into_iter().map(|p| p.label).collect();
                misclassification_rate(setup.test, &labels)
            })
            .collect()
    }
}

/// CSV with columns `strategy,budget,mean,std,repeats`.
pub fn write_curve<W: Write>(w: W, rows: &[CurveRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    out.write_record(["strategy", "budget", "mean", "std", "repeats"]).map_err(io)?;
    for r in rows {
        out.write_record([
            r.strategy.to_string(),
            r.budget.to_string(),
            format!("{}", r.mean),
            format!("{}", r.std),
            r.repeats.to_string(),
        ])
        .map_err(io)?;
    }
    out.flush()?;
    Ok(())
}
