//! Training-set construction: a particle swarm pushes classifier points
//! toward low-certainty regions, and greedy entropy selection picks surface
//! points from a classifier-filtered candidate pool.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classification::{
    optimize_ovr_hyper, ClassificationDataset, EpSettings, OvrClassifier, OvrHyperSettings,
};
use crate::error::{Error, Result};
use crate::kernels::{self, InputPoint, Kernel, SeHyper};
use crate::linalg::LN_2PI;
use crate::regression::{GpRegressor, RegressionDataset, SparsePolicy};
use crate::simulators::{sample_inputs, uniform_points, Sample, SamplingScheme, Simulator};

/// Independent random stream `stream` derived from `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_PSO: u64 = 1;
const STREAM_RANDOM_CLASSIFIER: u64 = 2;
const STREAM_CANDIDATES: u64 = 3;
const STREAM_RANDOM_SURFACE: u64 = 4;

/// `½(ln 2π + 1)`, the entropy of a unit-variance Gaussian.
pub const ENTROPY_CONST: f64 = 0.5 * (LN_2PI + 1.0);

pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Differential entropy of a Gaussian with variance `v` (floored at 1e-12).
pub fn entropy_from_variance(v: f64) -> f64 {
    0.5 * v.max(VARIANCE_FLOOR).ln() + ENTROPY_CONST
}

/// Entropy of the latent posterior at each test input.
pub fn conditional_entropy(model: &GpRegressor, xs: &[InputPoint]) -> Result<Vec<f64>> {
    Ok(model
        .predict_latent(xs)?
        .into_iter()
        .map(|p| entropy_from_variance(p.variance))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoSettings {
    pub swarm_size: usize,
    /// Stop once the swarm's mean objective drops below this.
    pub theta: f64,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Per-coordinate velocity bound.
    pub v_max: f64,
    pub max_iters: usize,
}

impl Default for PsoSettings {
    fn default() -> Self {
        PsoSettings {
            swarm_size: 10,
            theta: 0.5,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            v_max: 0.25,
            max_iters: 100,
        }
    }
}

impl PsoSettings {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size == 0 || self.max_iters == 0 {
            return Err(Error::config("swarm size and PSO iteration cap must be >= 1"));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::config("v_max must be positive"));
        }
        if ![self.inertia, self.cognitive, self.social].iter().all(|c| c.is_finite() && *c >= 0.0) {
            return Err(Error::config("PSO coefficients must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Global-best particle swarm over `[0,1]^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub best_positions: Vec<Vec<f64>>,
    pub best_values: Vec<f64>,
    pub global_best: Vec<f64>,
    pub global_value: f64,
    pub iterations: usize,
}

impl SwarmState {
    /// Uniform positions, zero velocities.
    pub fn new(n: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let positions: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        SwarmState {
            velocities: vec![vec![0.0; dim]; n],
            best_positions: positions.clone(),
            best_values: vec![f64::INFINITY; n],
            global_best: positions[0].clone(),
            global_value: f64::INFINITY,
            positions,
            iterations: 0,
        }
    }

    pub fn points(&self) -> Vec<InputPoint> {
        self.positions.iter().map(|p| InputPoint::clamped(p.clone())).collect()
    }

    /// Updates personal and global bests; earlier particles win ties.
    pub fn record(&mut self, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            if v < self.best_values[i] {
                self.best_values[i] = v;
                self.best_positions[i] = self.positions[i].clone();
            }
            if v < self.global_value {
                self.global_value = v;
                self.global_best = self.positions[i].clone();
            }
        }
    }

    /// One velocity/position update with reflecting walls.
    pub fn step(&mut self, s: &PsoSettings, rng: &mut impl Rng) {
        for i in 0..self.positions.len() {
            for j in 0..self.positions[i].len() {
                let x = self.positions[i][j];
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = s.inertia * self.velocities[i][j]
                    + s.cognitive * r1 * (self.best_positions[i][j] - x)
                    + s.social * r2 * (self.global_best[j] - x);
                let mut v = v.clamp(-s.v_max, s.v_max);
                let mut x = x + v;
                if x < 0.0 {
                    x = -x;
                    v = -v;
                } else if x > 1.0 {
                    x = 2.0 - x;
                    v = -v;
                }
                self.positions[i][j] = x.clamp(0.0, 1.0);
                self.velocities[i][j] = v;
            }
        }
        self.iterations += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    /// Final swarm positions; these are the points handed to the simulator.
    pub positions: Vec<InputPoint>,
    pub best: InputPoint,
    pub best_value: f64,
    pub mean_value: f64,
    pub iterations: usize,
    /// The iteration cap was reached before the mean fell below `theta`.
    pub cap_hit: bool,
}

/// Minimizes a batch objective until the swarm's mean value drops below
/// `theta` or the iteration cap is reached. At least one move is made.
pub fn pso_minimize<F>(mut objective: F, dim: usize, settings: &PsoSettings, rng: &mut impl Rng) -> Result<PsoOutcome>
where
    F: FnMut(&[InputPoint]) -> Result<Vec<f64>>,
{
    settings.validate()?;
    if dim == 0 {
        return Err(Error::input("PSO needs dimension >= 1"));
    }
    let mut swarm = SwarmState::new(settings.swarm_size, dim, rng);
    let values = objective(&swarm.points())?;
    swarm.record(&values);
    let mut mean = f64::INFINITY;
    for _ in 0..settings.max_iters {
        swarm.step(settings, rng);
        let values = objective(&swarm.points())?;
        swarm.record(&values);
        mean = values.iter().sum::<f64>() / values.len() as f64;
        if mean < settings.theta {
            break;
        }
    }
    Ok(PsoOutcome {
        positions: swarm.points(),
        best: InputPoint::clamped(swarm.global_best.clone()),
        best_value: swarm.global_value,
        mean_value: mean,
        iterations: swarm.iterations,
        cap_hit: !(mean < settings.theta),
    })
}

/// One swarm minimizing the classifier's certainty.
pub fn pso_round(clf: &OvrClassifier, settings: &PsoSettings, rng: &mut impl Rng) -> Result<PsoOutcome> {
    pso_minimize(
        |xs| Ok(clf.predict(xs)?.iter().map(|p| p.certainty).collect()),
        clf.dim(),
        settings,
        rng,
    )
}

/// One line of the round-by-round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub stage: String,
    pub round: usize,
    pub points_added: usize,
    /// Mean swarm certainty (classifier) or selected entropy (surface).
    pub metric: f64,
    pub cumulative_sim_calls: usize,
    pub wall_time_s: f64,
}

pub fn write_audit<W: Write>(w: W, rows: &[AuditRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(["stage", "round", "points_added", "metric", "cumulative_sim_calls", "wall_time_s"])
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    for r in rows {
        out.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    out.flush()?;
    Ok(())
}

/// Runs the simulator on each point, attaching the point to any failure.
pub fn simulate(sim: &dyn Simulator, xs: &[InputPoint]) -> Result<Vec<Sample>> {
    xs.iter()
        .map(|x| {
            let result = sim.evaluate(x).map_err(|e| match e {
                e @ Error::Simulation { .. } => e,
                other => Error::Simulation {
                    point: x.coords().to_vec(),
                    reason: other.to_string(),
                },
            })?;
            Ok(Sample { x: x.clone(), result })
        })
        .collect()
}

/// Seeded uniform design of `n1` points, optionally with the cube corners.
pub fn initial_design(sim: &dyn Simulator, n1: usize, seed: u64, corners: bool) -> Result<Vec<Sample>> {
    let scheme = if corners {
        SamplingScheme::CornersAugmented
    } else {
        SamplingScheme::Uniform
    };
    let xs: Vec<InputPoint> = sample_inputs(n1, sim.dim(), seed, scheme)?
        .into_iter()
        .map(|x| sim.snap(x))
        .collect();
    simulate(sim, &xs)
}

pub fn classification_data(samples: &[Sample]) -> Result<ClassificationDataset> {
    ClassificationDataset::new(
        samples.iter().map(|s| s.x.clone()).collect(),
        samples.iter().map(|s| s.result.label()).collect(),
    )
}

/// The valid-region (label 2) samples as a regression set.
pub fn regression_data(samples: &[Sample]) -> Result<RegressionDataset> {
    let (xs, ys): (Vec<_>, Vec<_>) = samples
        .iter()
        .filter_map(|s| s.result.value().map(|y| (s.x.clone(), y)))
        .unzip();
    if xs.is_empty() {
        return Ok(RegressionDataset::empty());
    }
    RegressionDataset::new(xs, ys)
}

/// How new classifier points are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Active,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierAlConfig {
    pub n1: usize,
    pub rounds: usize,
    pub pso: PsoSettings,
    pub seed: u64,
    pub corners: bool,
    /// Starting kernels, used as-is when `hyper` is `None`.
    pub kernels: [Kernel; 3],
    pub hyper: Option<OvrHyperSettings>,
    pub sparse: SparsePolicy,
    pub ep: EpSettings,
}

impl Default for ClassifierAlConfig {
    fn default() -> Self {
        let k = Kernel::SquaredExponential(SeHyper::isotropic(4.0, 0.2));
        ClassifierAlConfig {
            n1: 10,
            rounds: 10,
            pso: PsoSettings::default(),
            seed: 0,
            corners: false,
            kernels: [k.clone(), k.clone(), k],
            hyper: Some(OvrHyperSettings::default()),
            sparse: SparsePolicy::fitc(1000, 300, 0),
            ep: EpSettings::default(),
        }
    }
}

impl ClassifierAlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return Err(Error::config("n1 must be >= 1"));
        }
        self.pso.validate()?;
        for k in &self.kernels {
            k.validate()?;
        }
        Ok(())
    }

    /// Simulator calls made by a run: initial design plus `r·n_s`.
    pub fn budget(&self, dim: usize) -> usize {
        let corners = if self.corners { 1usize << dim } else { 0 };
        self.n1 + corners + self.rounds * self.pso.swarm_size
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierRun {
    pub classifier: OvrClassifier,
    pub samples: Vec<Sample>,
    /// 0 for initial points, otherwise the round that added the point.
    pub provenance: Vec<usize>,
    pub kernels: [Kernel; 3],
    pub audit: Vec<AuditRow>,
    pub sim_calls: usize,
    /// Rounds whose swarm stopped at the iteration cap.
    pub cap_hits: usize,
}

impl ClassifierRun {
    pub fn dataset(&self) -> ClassificationDataset {
        classification_data(&self.samples).expect("samples hold valid labels")
    }
}

/// Evidence-maximizing OVR kernels on `data`, or the configured ones.
pub fn classifier_kernels(data: &ClassificationDataset, config: &ClassifierAlConfig) -> Result<[Kernel; 3]> {
    match &config.hyper {
        None => Ok(config.kernels.clone()),
        Some(h) => {
            let n = h.max_points.map_or(data.len(), |m| m.min(data.len()));
            optimize_ovr_hyper(data, &config.kernels, h, &config.sparse.mode_for(n), config.ep)
        }
    }
}

/// Boundary detection by PSO rounds on top of a fresh initial design.
pub fn active_learn_classifier(sim: &dyn Simulator, config: &ClassifierAlConfig) -> Result<ClassifierRun> {
    run_classifier(sim, config, Design::Active)
}

/// The same budget spent on uniform random points.
pub fn random_classifier(sim: &dyn Simulator, config: &ClassifierAlConfig) -> Result<ClassifierRun> {
    run_classifier(sim, config, Design::Random)
}

fn run_classifier(sim: &dyn Simulator, config: &ClassifierAlConfig, design: Design) -> Result<ClassifierRun> {
    config.validate()?;
    let initial = initial_design(sim, config.n1, config.seed, config.corners)?;
    let data = classification_data(&initial)?;
    let kernels = classifier_kernels(&data, config)?;
    classifier_rounds(sim, initial, kernels, config, design)
}

/// Grows `initial` by `r` batches of `n_s` points with fixed kernels,
/// refitting the classifier after every batch.
pub fn classifier_rounds(
    sim: &dyn Simulator,
    initial: Vec<Sample>,
    kernels: [Kernel; 3],
    config: &ClassifierAlConfig,
    design: Design,
) -> Result<ClassifierRun> {
    config.validate()?;
    let start = Instant::now();
    let mut samples = initial;
    let mut provenance = vec![0; samples.len()];
    let mut data = classification_data(&samples)?;
    let mut sim_calls = samples.len();
    let mut clf = OvrClassifier::fit_from(&data, &kernels, &config.sparse.mode_for(data.len()), config.ep, None)?;
    let mut audit = vec![AuditRow {
        stage: "classifier".into(),
        round: 0,
        points_added: samples.len(),
        metric: f64::NAN,
        cumulative_sim_calls: sim_calls,
        wall_time_s: start.elapsed().as_secs_f64(),
    }];
    let mut cap_hits = 0;
    let mut pso_rng = rng_stream(config.seed, STREAM_PSO);
    let mut random_rng = rng_stream(config.seed, STREAM_RANDOM_CLASSIFIER);
    for round in 1..=config.rounds {
        let (xs, metric) = match design {
            Design::Active => {
                let out = pso_round(&clf, &config.pso, &mut pso_rng)?;
                cap_hits += out.cap_hit as usize;
                (out.positions, out.mean_value)
            }
            Design::Random => (uniform_points(config.pso.swarm_size, sim.dim(), &mut random_rng), f64::NAN),
        };
        let xs: Vec<InputPoint> = xs.into_iter().map(|x| sim.snap(x)).collect();
        let new = simulate(sim, &xs)?;
        sim_calls += new.len();
        for s in new {
            data.push(s.x.clone(), s.result.label())?;
            samples.push(s);
            provenance.push(round);
        }
        clf = OvrClassifier::fit_from(&data, &kernels, &config.sparse.mode_for(data.len()), config.ep, Some(&clf))?;
        audit.push(AuditRow {
            stage: "classifier".into(),
            round,
            points_added: xs.len(),
            metric,
            cumulative_sim_calls: sim_calls,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(ClassifierRun {
        classifier: clf,
        samples,
        provenance,
        kernels,
        audit,
        sim_calls,
        cap_hits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceAlConfig {
    /// Number of sequential picks `n2`.
    pub rounds: usize,
    /// Uniform candidate count `N_c`, ignored for pool simulators.
    pub candidates: usize,
    pub seed: u64,
}

impl Default for SurfaceAlConfig {
    fn default() -> Self {
        SurfaceAlConfig {
            rounds: 90,
            candidates: 10_000,
            seed: 0,
        }
    }
}

/// Fixed surface hyperparameters and the inference mode of the final fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub kernel: Kernel,
    pub noise: f64,
    pub sparse: SparsePolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePick {
    pub round: usize,
    pub point: InputPoint,
    /// Entropy at selection time (NaN for random picks).
    pub score: f64,
    pub result: crate::simulators::SimResult,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct SurfaceRun {
    pub regressor: GpRegressor,
    pub data: RegressionDataset,
    pub picks: Vec<SurfacePick>,
    /// Candidates left after classifier filtering, before any pick.
    pub pool: Vec<InputPoint>,
    pub audit: Vec<AuditRow>,
    /// Simulator calls made by the rounds (picks with invalid labels included).
    pub sim_calls: usize,
}

/// Candidate pool filtered once to points the classifier labels 2.
///
/// Points already in `exclude` are dropped. Pool simulators supply their own
/// points; otherwise `N_c` uniform points are drawn.
pub fn candidate_pool(
    sim: &dyn Simulator,
    clf: &OvrClassifier,
    config: &SurfaceAlConfig,
    exclude: &[InputPoint],
) -> Result<Vec<InputPoint>> {
    let raw = match sim.pool() {
        Some(p) => p,
        None => uniform_points(config.candidates, sim.dim(), &mut rng_stream(config.seed, STREAM_CANDIDATES)),
    };
    let taken: std::collections::HashSet<Vec<u64>> =
        exclude.iter().map(|x| x.coords().iter().map(|c| c.to_bits()).collect()).collect();
    let raw: Vec<InputPoint> = raw
        .into_iter()
        .filter(|x| !taken.contains(&x.coords().iter().map(|c| c.to_bits()).collect::<Vec<_>>()))
        .collect();
    let labels = clf.predict(&raw)?;
    let pool: Vec<InputPoint> = raw
        .into_iter()
        .zip(labels)
        .filter(|(_, p)| p.label == 2)
        .map(|(x, _)| x)
        .collect();
    if pool.is_empty() {
        return Err(Error::config("no candidate is classified into the valid region"));
    }
    Ok(pool)
}

/// Posterior variances of an exact GP over a fixed candidate set, updated
/// one training point at a time.
///
/// Keeps `W = L⁻¹ K(X, C)` row by row so that `var_c = k_cc − Σ_j W_jc²`.
struct VarianceTracker {
    rows: Vec<Vec<f64>>,
    var: Vec<f64>,
    s2: f64,
}

impl VarianceTracker {
    fn new(train: &[InputPoint], cands: &[InputPoint], kernel: &Kernel, s2: f64) -> Result<Self> {
        let prior: Vec<f64> = cands.iter().map(|c| kernel.eval_raw(c.coords(), c.coords())).collect();
        if train.is_empty() {
            return Ok(VarianceTracker {
                rows: Vec::new(),
                var: prior,
                s2,
            });
        }
        let mut k = kernels::gram_sym_raw(train, kernel);
        for i in 0..k.nrows() {
            k[(i, i)] += s2;
        }
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::numerical("training covariance is not positive definite"))?;
        let kxc: DMatrix<f64> = kernels::gram_raw(train, cands, kernel);
        let w = chol
            .l()
            .solve_lower_triangular(&kxc)
            .ok_or_else(|| Error::numerical("triangular solve failed"))?;
        let rows: Vec<Vec<f64>> = (0..w.nrows()).map(|j| w.row(j).iter().copied().collect()).collect();
        let var = (0..cands.len())
            .map(|c| (prior[c] - rows.iter().map(|r| r[c] * r[c]).sum::<f64>()).max(0.0))
            .collect();
        Ok(VarianceTracker { rows, var, s2 })
    }

    fn add(&mut self, c: usize, cands: &[InputPoint], alive: &[bool], kernel: &Kernel) {
        let l = (self.var[c] + self.s2).max(f64::MIN_POSITIVE).sqrt();
        let x = cands[c].coords();
        let mut row: Vec<f64> = cands.iter().map(|p| kernel.eval_raw(x, p.coords())).collect();
        for r in &self.rows {
            let a = r[c];
            for (v, w) in row.iter_mut().zip(r) {
                *v -= a * w;
            }
        }
        for (i, v) in row.iter_mut().enumerate() {
            *v /= l;
            if alive[i] {
                self.var[i] = (self.var[i] - *v * *v).max(0.0);
            }
        }
        self.rows.push(row);
    }
}

fn argmax_alive(var: &[f64], alive: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in var.iter().enumerate() {
        if alive[i] && best.is_none_or(|b| *v > var[b]) {
            best = Some(i);
        }
    }
    best
}

/// Greedy maximum-entropy selection from the filtered pool, with fixed
/// hyperparameters. Picks whose true label is not 2 are simulated and
/// discarded.
pub fn active_learn_surface(
    sim: &dyn Simulator,
    clf: &OvrClassifier,
    initial: &RegressionDataset,
    model: &SurfaceModel,
    config: &SurfaceAlConfig,
) -> Result<SurfaceRun> {
    run_surface(sim, clf, initial, model, config, Design::Active)
}

/// Uniform random picks from the same filtered pool.
pub fn random_surface(
    sim: &dyn Simulator,
    clf: &OvrClassifier,
    initial: &RegressionDataset,
    model: &SurfaceModel,
    config: &SurfaceAlConfig,
) -> Result<SurfaceRun> {
    run_surface(sim, clf, initial, model, config, Design::Random)
}

fn run_surface(
    sim: &dyn Simulator,
    clf: &OvrClassifier,
    initial: &RegressionDataset,
    model: &SurfaceModel,
    config: &SurfaceAlConfig,
    design: Design,
) -> Result<SurfaceRun> {
    if initial.is_empty() {
        return Err(Error::config("the initial design has no valid-region points"));
    }
    let start = Instant::now();
    let mut data = initial.dedup();
    let first = GpRegressor::fit(&data, model.kernel.clone(), model.noise, model.sparse.mode_for(data.len()))?;
    let mut audit = Vec::new();
    let mut picks = Vec::new();
    if config.rounds == 0 {
        return Ok(SurfaceRun {
            regressor: first,
            data,
            picks,
            pool: Vec::new(),
            audit,
            sim_calls: 0,
        });
    }
    let pool = candidate_pool(sim, clf, config, data.inputs())?;
    let mut alive = vec![true; pool.len()];
    let mut tracker = match design {
        Design::Active => Some(VarianceTracker::new(
            data.inputs(),
            &pool,
            &model.kernel,
            model.noise + first.jitter(),
        )?),
        Design::Random => None,
    };
    let order: Vec<usize> = match design {
        Design::Active => Vec::new(),
        Design::Random => {
            let mut rng = rng_stream(config.seed, STREAM_RANDOM_SURFACE);
            rand::seq::index::sample(&mut rng, pool.len(), config.rounds.min(pool.len())).into_vec()
        }
    };
    for round in 1..=config.rounds {
        let (c, score) = match &tracker {
            Some(t) => match argmax_alive(&t.var, &alive) {
                Some(c) => (c, entropy_from_variance(t.var[c])),
                None => None.ok_or_else(|| exhausted(round))?,
            },
            None => (*order.get(round - 1).ok_or_else(|| exhausted(round))?, f64::NAN),
        };
        alive[c] = false;
        let s = simulate(sim, std::slice::from_ref(&pool[c]))?.remove(0);
        let accepted = s.result.label() == 2;
        if let Some(y) = s.result.value() {
            data.push(s.x.clone(), y)?;
            if let Some(t) = tracker.as_mut() {
                t.add(c, &pool, &alive, &model.kernel);
            }
        }
        picks.push(SurfacePick {
            round,
            point: s.x,
            score,
            result: s.result,
            accepted,
        });
        audit.push(AuditRow {
            stage: "surface".into(),
            round,
            points_added: accepted as usize,
            metric: score,
            cumulative_sim_calls: round,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    let regressor = GpRegressor::fit(&data, model.kernel.clone(), model.noise, model.sparse.mode_for(data.len()))?;
    Ok(SurfaceRun {
        regressor,
        data,
        picks,
        pool,
        audit,
        sim_calls: config.rounds,
    })
}

fn exhausted(round: usize) -> Error {
    Error::config(format!("candidate pool exhausted after {} rounds", round - 1))
}
