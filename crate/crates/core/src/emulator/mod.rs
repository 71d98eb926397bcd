//! The two-step emulator: an OVR classifier segments the input space and a
//! GP regressor predicts the biomarker inside the valid region.

mod curve;
mod lut;
mod propagate;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::active::{
    self, classification_data, regression_data, AuditRow, ClassifierAlConfig, Design, PsoSettings,
    SurfaceAlConfig, SurfaceModel,
};
use crate::classification::{ClassificationDataset, EpSettings, OvrClassifier, OvrHyperSettings};
use crate::error::{Error, Result};
use crate::kernels::{InputPoint, Kernel, KernelFamily, RqHyper, SeHyper};
use crate::optimize::{HyperBounds, SearchSettings};
use crate::regression::{
    default_noise, optimize_hyper, GpRegressor, Mode, PredictiveGaussian, RegressionDataset, SparsePolicy,
};
use crate::simulators::{read_dataset, write_dataset, Sample, SimResult, Simulator};

pub use curve::{learning_curve, write_curve, CurveRow, CurveSetup, Strategy};
pub use lut::Lut;
pub use propagate::{propagate, BiomarkerDistribution, Propagation, BINS, RANGE};

/// Marginal-likelihood search settings for the surface GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceHyperSettings {
    pub family: KernelFamily,
    pub bounds: HyperBounds,
    pub search: SearchSettings,
    pub optimize_noise: bool,
    /// Evidence is evaluated on a seeded subsample of at most this many points.
    pub max_points: Option<usize>,
}

impl Default for SurfaceHyperSettings {
    fn default() -> Self {
        SurfaceHyperSettings {
            family: KernelFamily::RationalQuadratic,
            bounds: HyperBounds::default(),
            search: SearchSettings::default(),
            optimize_noise: false,
            max_points: None,
        }
    }
}

/// How the surface GP gets its hyperparameters and inference mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSettings {
    /// Starting kernel, used as-is when `hyper` is `None`.
    pub kernel: Kernel,
    /// Fixed noise variance; `None` means `1e-8·var(y)`.
    pub noise: Option<f64>,
    pub hyper: Option<SurfaceHyperSettings>,
    pub sparse: SparsePolicy,
}

impl Default for SurfaceSettings {
    fn default() -> Self {
        SurfaceSettings {
            kernel: Kernel::RationalQuadratic(RqHyper::new(1e4, 0.3, 1.0)),
            noise: None,
            hyper: Some(SurfaceHyperSettings::default()),
            sparse: SparsePolicy::fitc(2000, 1000, 0),
        }
    }
}

impl SurfaceSettings {
    /// Hyperparameters for `data`, starting from `init`.
    pub fn fit_model(&self, data: &RegressionDataset, init: &Kernel, init_noise: Option<f64>) -> Result<SurfaceModel> {
        if data.is_empty() {
            return Err(Error::config("no valid-region points to fit the surface hyperparameters"));
        }
        let noise = init_noise.or(self.noise).unwrap_or_else(|| default_noise(data));
        let (kernel, noise) = match &self.hyper {
            None => (init.clone(), noise),
            Some(h) => {
                let sub = match h.max_points {
                    Some(m) => data.dedup().subsample(m, h.search.seed),
                    None => data.dedup(),
                };
                let init = if init.family() == h.family {
                    init.clone()
                } else {
                    default_kernel(h.family, init.variance(), data.dim())
                };
                let fit = optimize_hyper(
                    &sub,
                    h.family,
                    &init,
                    noise,
                    &h.bounds,
                    &h.search,
                    h.optimize_noise,
                    &self.sparse.mode_for(sub.len()),
                )?;
                (fit.kernel, fit.noise)
            }
        };
        Ok(SurfaceModel {
            kernel,
            noise,
            sparse: self.sparse,
        })
    }
}

fn default_kernel(family: KernelFamily, variance: f64, dim: usize) -> Kernel {
    match family {
        KernelFamily::SquaredExponential => Kernel::SquaredExponential(SeHyper::isotropic(variance, 0.3)),
        KernelFamily::SquaredExponentialArd => Kernel::SquaredExponential(SeHyper::ard(variance, vec![0.3; dim])),
        KernelFamily::RationalQuadratic => Kernel::RationalQuadratic(RqHyper::new(variance, 0.3, 1.0)),
    }
}

/// Everything needed to train a two-step emulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepConfig {
    pub n1: usize,
    pub corners: bool,
    pub seed: u64,
    pub rounds: usize,
    pub pso: PsoSettings,
    pub n2: usize,
    pub candidates: usize,
    pub classifier_kernels: [Kernel; 3],
    pub classifier_hyper: Option<OvrHyperSettings>,
    pub classifier_sparse: SparsePolicy,
    pub ep: EpSettings,
    pub surface: SurfaceSettings,
    /// Re-optimize classifier hyperparameters after the classifier rounds.
    pub refit_classifier: bool,
    /// Re-optimize surface hyperparameters after the surface rounds.
    pub refit_surface: bool,
    /// Certainty below which predictions defer to the simulator.
    pub fallback: Option<f64>,
}

impl Default for TwoStepConfig {
    fn default() -> Self {
        let c = ClassifierAlConfig::default();
        TwoStepConfig {
            n1: 500,
            corners: false,
            seed: 0,
            rounds: 30,
            pso: PsoSettings {
                swarm_size: 50,
                ..PsoSettings::default()
            },
            n2: 3000,
            candidates: 10_000,
            classifier_kernels: c.kernels,
            classifier_hyper: c.hyper,
            classifier_sparse: c.sparse,
            ep: c.ep,
            surface: SurfaceSettings::default(),
            refit_classifier: true,
            refit_surface: true,
            fallback: None,
        }
    }
}

impl TwoStepConfig {
    pub fn validate(&self) -> Result<()> {
        self.classifier_al().validate()?;
        if let Some(t) = self.fallback {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config(format!("fallback threshold must lie in [0, 1], got {t}")));
            }
        }
        if self.n2 > 0 && self.candidates == 0 {
            return Err(Error::config("surface rounds need a nonempty candidate pool"));
        }
        Ok(())
    }

    pub fn classifier_al(&self) -> ClassifierAlConfig {
        ClassifierAlConfig {
            n1: self.n1,
            rounds: self.rounds,
            pso: self.pso.clone(),
            seed: self.seed,
            corners: self.corners,
            kernels: self.classifier_kernels.clone(),
            hyper: self.classifier_hyper.clone(),
            sparse: self.classifier_sparse,
            ep: self.ep,
        }
    }

    pub fn surface_al(&self) -> SurfaceAlConfig {
        SurfaceAlConfig {
            rounds: self.n2,
            candidates: self.candidates,
            seed: self.seed,
        }
    }

    /// Planned simulator calls for a `dim`-input simulator.
    pub fn budget(&self, dim: usize) -> Budget {
        Budget {
            initial: self.n1 + if self.corners { 1 << dim } else { 0 },
            classifier_rounds: self.rounds * self.pso.swarm_size,
            surface_rounds: self.n2,
        }
    }
}

/// Simulator calls by stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub initial: usize,
    pub classifier_rounds: usize,
    pub surface_rounds: usize,
}

impl Budget {
    pub fn total(&self) -> usize {
        self.initial + self.classifier_rounds + self.surface_rounds
    }
}

/// Per-point output of the two-step emulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmulatorPrediction {
    pub label: u8,
    pub probs: [f64; 3],
    pub certainty: f64,
    /// Surface prediction, present only for label 2.
    pub prediction: Option<PredictiveGaussian>,
    /// The simulator answered this point because certainty was below threshold.
    pub fallback: bool,
}

/// Something that assigns regions and biomarker values to inputs.
pub trait Emulator {
    fn dim(&self) -> usize;

    fn classify(&self, xs: &[InputPoint]) -> Result<Vec<u8>>;

    /// Biomarker estimate at each input, whatever its predicted region.
    fn surface_mean(&self, xs: &[InputPoint]) -> Result<Vec<f64>>;
}

/// Treats a simulator as a perfect emulator.
pub struct Exact<'a>(pub &'a dyn Simulator);

impl Emulator for Exact<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn classify(&self, xs: &[InputPoint]) -> Result<Vec<u8>> {
        xs.iter().map(|x| Ok(self.0.evaluate(x)?.label())).collect()
    }

    fn surface_mean(&self, xs: &[InputPoint]) -> Result<Vec<f64>> {
        xs.iter()
            .map(|x| {
                self.0.evaluate(x)?.value().ok_or_else(|| Error::Simulation {
                    point: x.coords().to_vec(),
                    reason: "no biomarker outside the valid region".into(),
                })
            })
            .collect()
    }
}

/// Mean absolute error of `means` against the true values of the label-2
/// test points, in order.
pub fn mean_absolute_error(test: &[Sample], means: &[f64]) -> Result<f64> {
    let truth: Vec<f64> = test.iter().filter_map(|s| s.result.value()).collect();
    if truth.is_empty() {
        return Err(Error::input("test set has no valid-region points"));
    }
    if truth.len() != means.len() {
        return Err(Error::input("one prediction per valid-region test point is required"));
    }
    Ok(truth.iter().zip(means).map(|(y, m)| (y - m).abs()).sum::<f64>() / truth.len() as f64)
}

/// Percentage of test points whose predicted label is wrong.
pub fn misclassification_rate(test: &[Sample], labels: &[u8]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::input("test set is empty"));
    }
    if test.len() != labels.len() {
        return Err(Error::input("one predicted label per test point is required"));
    }
    let wrong = test.iter().zip(labels).filter(|(s, l)| s.result.label() != **l).count();
    Ok(100.0 * wrong as f64 / test.len() as f64)
}

/// Surface error over the true label-2 test points, querying the surface
/// regardless of the predicted region.
pub fn surface_error(em: &dyn Emulator, test: &[Sample]) -> Result<f64> {
    let xs: Vec<InputPoint> = test
        .iter()
        .filter(|s| s.result.label() == 2)
        .map(|s| s.x.clone())
        .collect();
    if xs.is_empty() {
        return Err(Error::input("test set has no valid-region points"));
    }
    mean_absolute_error(test, &em.surface_mean(&xs)?)
}

/// Boundary error over all test points.
pub fn boundary_error(em: &dyn Emulator, test: &[Sample]) -> Result<f64> {
    let xs: Vec<InputPoint> = test.iter().map(|s| s.x.clone()).collect();
    misclassification_rate(test, &em.classify(&xs)?)
}

#[derive(Debug, Clone)]
pub struct TwoStepEmulator {
    config: TwoStepConfig,
    classifier: OvrClassifier,
    surface: GpRegressor,
    classifier_samples: Vec<Sample>,
    budget: Budget,
    audit: Vec<AuditRow>,
}

/// Runs the full pipeline: initial design, hyperparameters, classifier
/// rounds, optional classifier re-fit, surface rounds, optional surface re-fit.
pub fn train_two_step(sim: &dyn Simulator, config: &TwoStepConfig) -> Result<TwoStepEmulator> {
    train_two_step_logged(sim, config, &mut Vec::new())
}

/// Like [`train_two_step`], appending audit rows to `log` as stages finish so
/// a failed run still leaves its partial log behind.
pub fn train_two_step_logged(
    sim: &dyn Simulator,
    config: &TwoStepConfig,
    log: &mut Vec<AuditRow>,
) -> Result<TwoStepEmulator> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let start = Instant::now();
    let stage_row = |log: &mut Vec<AuditRow>, stage: &str, added: usize, calls: usize| {
        log.push(AuditRow {
            stage: stage.into(),
            round: 0,
            points_added: added,
            metric: f64::NAN,
            cumulative_sim_calls: calls,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    };
    let clf_cfg = config.classifier_al();
    let initial = active::initial_design(sim, config.n1, config.seed, config.corners)
        .map_err(|e| e.in_stage("initial-design"))?;
    let n_init = initial.len();
    stage_row(log, "initial-design", n_init, n_init);

    let kernels = classification_data(&initial)
        .and_then(|d| active::classifier_kernels(&d, &clf_cfg))
        .map_err(|e| e.in_stage("classifier-hyper"))?;
    let reg_initial = regression_data(&initial).map_err(|e| e.in_stage("surface-hyper"))?;
    let model = config
        .surface
        .fit_model(&reg_initial, &config.surface.kernel, None)
        .map_err(|e| e.in_stage("surface-hyper"))?;
    stage_row(log, "hyperparameters", 0, n_init);

    let t0 = start.elapsed().as_secs_f64();
    let run = active::classifier_rounds(sim, initial, kernels, &clf_cfg, Design::Active)
        .map_err(|e| e.in_stage("classifier-al"))?;
    log.extend(run.audit.iter().skip(1).map(|r| AuditRow {
        wall_time_s: r.wall_time_s + t0,
        ..r.clone()
    }));
    let mut classifier = run.classifier;
    if config.rounds > 0 {
        let data = classification_data(&run.samples).map_err(|e| e.in_stage("classifier-refit"))?;
        let kernels = if config.refit_classifier {
            let refit_cfg = ClassifierAlConfig {
                kernels: run.kernels.clone(),
                ..clf_cfg.clone()
            };
            active::classifier_kernels(&data, &refit_cfg).map_err(|e| e.in_stage("classifier-refit"))?
        } else {
            run.kernels.clone()
        };
        // Cold start, as in `Manifest::rebuild`.
        classifier =
            OvrClassifier::fit_from(&data, &kernels, &config.classifier_sparse.mode_for(data.len()), config.ep, None)
                .map_err(|e| e.in_stage("classifier-refit"))?;
        if config.refit_classifier {
            stage_row(log, "classifier-refit", 0, run.sim_calls);
        }
    }

    let t0 = start.elapsed().as_secs_f64();
    let surface_run = active::active_learn_surface(sim, &classifier, &reg_initial, &model, &config.surface_al())
        .map_err(|e| e.in_stage("surface-al"))?;
    log.extend(surface_run.audit.iter().map(|r| AuditRow {
        cumulative_sim_calls: r.cumulative_sim_calls + run.sim_calls,
        wall_time_s: r.wall_time_s + t0,
        ..r.clone()
    }));
    let mut surface = surface_run.regressor;
    let total = run.sim_calls + surface_run.sim_calls;
    if config.refit_surface && config.n2 > 0 {
        let data = surface.data().clone();
        surface = config
            .surface
            .fit_model(&data, surface.kernel(), Some(surface.noise()))
            .and_then(|m| GpRegressor::fit(&data, m.kernel, m.noise, m.sparse.mode_for(data.len())))
            .map_err(|e| e.in_stage("surface-refit"))?;
        stage_row(log, "surface-refit", 0, total);
    }
    let budget = Budget {
        initial: n_init,
        classifier_rounds: run.sim_calls - n_init,
        surface_rounds: surface_run.sim_calls,
    };
    Ok(TwoStepEmulator {
        config: config.clone(),
        classifier,
        surface,
        classifier_samples: run.samples,
        budget,
        audit: log.clone(),
    })
}

impl TwoStepEmulator {
    /// Assembles an emulator from fitted parts.
    pub fn from_parts(
        config: TwoStepConfig,
        classifier: OvrClassifier,
        surface: GpRegressor,
        classifier_samples: Vec<Sample>,
        budget: Budget,
    ) -> Result<Self> {
        if classifier.dim() != surface.dim() {
            return Err(Error::input(format!(
                "classifier has dimension {}, surface has {}",
                classifier.dim(),
                surface.dim()
            )));
        }
        Ok(TwoStepEmulator {
            config,
            classifier,
            surface,
            classifier_samples,
            budget,
            audit: Vec::new(),
        })
    }

    pub fn config(&self) -> &TwoStepConfig {
        &self.config
    }

    pub fn classifier(&self) -> &OvrClassifier {
        &self.classifier
    }

    pub fn surface(&self) -> &GpRegressor {
        &self.surface
    }

    pub fn classifier_samples(&self) -> &[Sample] {
        &self.classifier_samples
    }

    pub fn classifier_data(&self) -> ClassificationDataset {
        classification_data(&self.classifier_samples).expect("labels validated on ingest")
    }

    pub fn surface_data(&self) -> &RegressionDataset {
        self.surface.data()
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn audit(&self) -> &[AuditRow] {
        &self.audit
    }

    pub fn dim(&self) -> usize {
        self.surface.dim()
    }

    /// Segments `xs` by argmax label and predicts the surface on label-2
    /// points. With a threshold, points whose certainty is below it are
    /// answered by `sim` and flagged.
    pub fn predict(
        &self,
        xs: &[InputPoint],
        fallback: Option<f64>,
        sim: Option<&dyn Simulator>,
    ) -> Result<Vec<EmulatorPrediction>> {
        if fallback.is_some() && sim.is_none() {
            return Err(Error::config("a fallback threshold needs a simulator"));
        }
        let classes = self.classifier.predict(xs)?;
        let mut out: Vec<EmulatorPrediction> = classes
            .iter()
            .map(|c| EmulatorPrediction {
                label: c.label,
                probs: c.probs,
                certainty: c.certainty,
                prediction: None,
                fallback: false,
            })
            .collect();
        if let (Some(t), Some(sim)) = (fallback, sim) {
            for (p, x) in out.iter_mut().zip(xs) {
                if p.certainty < t {
                    let r = active::simulate(sim, std::slice::from_ref(x))?.remove(0).result;
                    p.fallback = true;
                    p.label = r.label();
                    p.prediction = r.value().map(|y| PredictiveGaussian { mean: y, variance: 0.0 });
                }
            }
        }
        let idx: Vec<usize> = (0..xs.len()).filter(|&i| out[i].label == 2 && !out[i].fallback).collect();
        let pts: Vec<InputPoint> = idx.iter().map(|&i| xs[i].clone()).collect();
        for (i, g) in idx.into_iter().zip(self.surface.predict(&pts)?) {
            out[i].prediction = Some(g);
        }
        Ok(out)
    }

    /// Writes `<stem>.json` plus the two training sets as CSV next to it and
    /// returns the manifest path.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let clf_name = format!("{stem}_classifier.csv");
        let surf_name = format!("{stem}_surface.csv");
        write_dataset(BufWriter::new(File::create(dir.join(&clf_name))?), &self.classifier_samples)?;
        let surf: Vec<Sample> = self
            .surface
            .data()
            .inputs()
            .iter()
            .zip(self.surface.data().targets())
            .map(|(x, y)| {
                Ok(Sample {
                    x: x.clone(),
                    result: SimResult::valid(*y)?,
                })
            })
            .collect::<Result<_>>()?;
        write_dataset(BufWriter::new(File::create(dir.join(&surf_name))?), &surf)?;
        let manifest = Manifest {
            format: MANIFEST_FORMAT,
            dim: self.dim(),
            config: self.config.clone(),
            classifier_kernels: self.classifier.kernels(),
            classifier_mode: self.classifier.task(1).mode().clone(),
            surface_kernel: self.surface.kernel().clone(),
            surface_noise: self.surface.noise(),
            surface_mode: self.surface.mode().clone(),
            classifier_data: clf_name,
            surface_data: surf_name,
            budget: self.budget,
        };
        let path = dir.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    /// Reads a manifest and re-fits both models from the referenced CSVs.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let manifest = Manifest::parse(&text).map_err(|e| Error::Ingest {
            path: path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let read = |name: &str| -> Result<Vec<Sample>> {
            let p = dir.join(name);
            read_dataset(File::open(&p).map_err(|e| Error::io_at(&p, e))?, &p.display().to_string())
        };
        let clf_samples = read(&manifest.classifier_data)?;
        let surf_samples = read(&manifest.surface_data)?;
        manifest.rebuild(clf_samples, surf_samples)
    }
}

impl Emulator for TwoStepEmulator {
    fn dim(&self) -> usize {
        TwoStepEmulator::dim(self)
    }

    fn classify(&self, xs: &[InputPoint]) -> Result<Vec<u8>> {
        Ok(self.classifier.predict(xs)?.into_iter().map(|p| p.label).collect())
    }

    fn surface_mean(&self, xs: &[InputPoint]) -> Result<Vec<f64>> {
        self.surface.predict_mean(xs)
    }
}

pub const MANIFEST_FORMAT: u32 = 1;

/// JSON description of a trained emulator. Training sets live in CSV files
/// named relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub dim: usize,
    pub config: TwoStepConfig,
    pub classifier_kernels: [Kernel; 3],
    pub classifier_mode: Mode,
    pub surface_kernel: Kernel,
    pub surface_noise: f64,
    pub surface_mode: Mode,
    pub classifier_data: String,
    pub surface_data: String,
    pub budget: Budget,
}

impl Manifest {
    /// Parses and checks a manifest without touching the filesystem.
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::input(format!("unsupported manifest format {}", m.format)));
        }
        if m.dim == 0 {
            return Err(Error::input("manifest dimension must be >= 1"));
        }
        for k in m.classifier_kernels.iter().chain([&m.surface_kernel]) {
            k.validate()?;
            k.check_dim(m.dim)?;
        }
        if !(m.surface_noise >= 0.0 && m.surface_noise.is_finite()) {
            return Err(Error::input("surface noise must be finite and >= 0"));
        }
        m.config.validate()?;
        Ok(m)
    }

    /// Re-fits both models from training samples.
    pub fn rebuild(&self, classifier_samples: Vec<Sample>, surface_samples: Vec<Sample>) -> Result<TwoStepEmulator> {
        for s in classifier_samples.iter().chain(&surface_samples) {
            if s.x.dim() != self.dim {
                return Err(Error::input(format!(
                    "training point has dimension {}, manifest says {}",
                    s.x.dim(),
                    self.dim
                )));
            }
        }
        if surface_samples.iter().any(|s| s.result.label() != 2) {
            return Err(Error::input("surface training set contains points outside the valid region"));
        }
        let data = classification_data(&classifier_samples)?;
        let classifier = OvrClassifier::fit_from(&data, &self.classifier_kernels, &self.classifier_mode, self.config.ep, None)?;
        let reg = regression_data(&surface_samples)?;
        let surface = GpRegressor::fit(&reg, self.surface_kernel.clone(), self.surface_noise, self.surface_mode.clone())?;
        TwoStepEmulator::from_parts(self.config.clone(), classifier, surface, classifier_samples, self.budget)
    }
}
