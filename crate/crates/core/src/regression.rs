//! Zero-mean GP regression, exact or FITC-sparse.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, common_dim, FitcStructure, InputPoint, Kernel, KernelFamily};
use crate::linalg::{self, JITTER, LN_2PI};
use crate::optimize::{self, HyperBounds, SearchSettings};

const PREDICT_CHUNK: usize = 256;

/// Training inputs with their observed biomarker values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    inputs: Vec<InputPoint>,
    targets: Vec<f64>,
}

impl RegressionDataset {
    pub fn new(inputs: Vec<InputPoint>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::input(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(Error::input(format!("non-finite target {t}")));
        }
        common_dim(&inputs)?;
        Ok(RegressionDataset { inputs, targets })
    }

    pub fn empty() -> Self {
        RegressionDataset {
            inputs: Vec::new(),
            targets: Vec::new(),
        }
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

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn push(&mut self, x: InputPoint, y: f64) -> Result<()> {
        if !self.is_empty() && x.dim() != self.dim() {
            return Err(Error::input("dimension mismatch in pushed point"));
        }
        if !y.is_finite() {
            return Err(Error::input(format!("non-finite target {y}")));
        }
        self.inputs.push(x);
        self.targets.push(y);
        Ok(())
    }

    /// Drops exact duplicate inputs, keeping the first occurrence.
    pub fn dedup(&self) -> Self {
        let mut seen = std::collections::HashSet::new();
        let mut out = RegressionDataset::empty();
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let key: Vec<u64> = x.coords().iter().map(|c| c.to_bits()).collect();
            if seen.insert(key) {
                out.inputs.push(x.clone());
                out.targets.push(*y);
            }
        }
        out
    }

    /// Sample variance of the targets (0 for fewer than two points).
    pub fn target_variance(&self) -> f64 {
        let n = self.targets.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.targets.iter().sum::<f64>() / n as f64;
        self.targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    /// Seeded random subset of at most `max` points, in original order.
    pub fn subsample(&self, max: usize, seed: u64) -> Self {
        if self.len() <= max {
            return self.clone();
        }
        let idx = sorted_sample(self.len(), max, seed);
        RegressionDataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

pub(crate) fn sorted_sample(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

/// How the inducing inputs of a FITC model are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InducingSet {
    /// Uniform random subset of the training inputs.
    Subset { size: usize, seed: u64 },
    Points(Vec<InputPoint>),
}

impl InducingSet {
    pub fn resolve(&self, inputs: &[InputPoint]) -> Vec<InputPoint> {
        match self {
            InducingSet::Subset { size, seed } => sorted_sample(inputs.len(), *size, *seed)
                .into_iter()
                .map(|i| inputs[i].clone())
                .collect(),
            InducingSet::Points(p) => p.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Fitc(InducingSet),
}

/// Chooses exact or FITC inference from the training-set size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsePolicy {
    /// Switch to FITC when the training set has more points than this.
    pub fitc_above: Option<usize>,
    pub inducing: usize,
    pub seed: u64,
}

impl SparsePolicy {
    pub fn exact() -> Self {
        SparsePolicy {
            fitc_above: None,
            inducing: 0,
            seed: 0,
        }
    }

    pub fn fitc(above: usize, inducing: usize, seed: u64) -> Self {
        SparsePolicy {
            fitc_above: Some(above),
            inducing,
            seed,
        }
    }

    pub fn mode_for(&self, n: usize) -> Mode {
        match self.fitc_above {
            Some(t) if n > t && self.inducing < n => Mode::Fitc(InducingSet::Subset {
                size: self.inducing,
                seed: self.seed,
            }),
            _ => Mode::Exact,
        }
    }
}

/// Gaussian predictive distribution at one test input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveGaussian {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone)]
enum Factor {
    Exact {
        chol: Cholesky<f64, Dyn>,
        alpha: DVector<f64>,
    },
    Fitc {
        fitc: FitcStructure,
        lam: DVector<f64>,
        chol_p: Cholesky<f64, Dyn>,
        /// `P⁻¹ V Λ⁻¹ y`, the posterior mean of the whitened inducing values.
        m_u: DVector<f64>,
    },
}

/// A fitted surface emulator.
#[derive(Debug, Clone)]
pub struct GpRegressor {
    data: RegressionDataset,
    kernel: Kernel,
    noise: f64,
    mode: Mode,
    jitter: f64,
    factor: Factor,
}

impl GpRegressor {
    /// Factorizes `K + σ²I` (or its FITC counterpart) once.
    ///
    /// Exact duplicate inputs are dropped first, keeping the first occurrence.
    pub fn fit(data: &RegressionDataset, kernel: Kernel, noise: f64, mode: Mode) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("regression dataset is empty"));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::input(format!("noise variance must be >= 0, got {noise}")));
        }
        kernel.validate()?;
        kernel.check_dim(data.dim())?;
        let data = data.dedup();
        let y = DVector::from_column_slice(data.targets());
        let fail = |e: Error| {
            Error::numerical(format!("{e} (kernel {kernel:?}, noise {noise:e})"))
        };
        let (factor, jitter) = match &mode {
            Mode::Exact => {
                let mut k = kernels::gram_sym_raw(data.inputs(), &kernel);
                for i in 0..k.nrows() {
                    k[(i, i)] += noise;
                }
                let (chol, jitter) = linalg::cholesky_jittered(&k, kernel.variance()).map_err(fail)?;
                let alpha = chol.solve(&y);
                (Factor::Exact { chol, alpha }, jitter)
            }
            Mode::Fitc(set) => {
                let xu = set.resolve(data.inputs());
                let fitc = FitcStructure::build(data.inputs(), &xu, &kernel).map_err(fail)?;
                let jitter = JITTER * kernel.variance();
                let lam = fitc.diag_correction().map(|d| d.max(0.0) + noise + jitter);
                let v = fitc.whitened();
                let mut scaled = v.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col /= lam[j].sqrt();
                }
                let p = DMatrix::identity(fitc.m(), fitc.m()) + &scaled * scaled.transpose();
                let chol_p = p
                    .cholesky()
                    .ok_or_else(|| fail(Error::numerical("FITC posterior precision not positive definite")))?;
                let m_u = chol_p.solve(&(v * y.component_div(&lam)));
                (
                    Factor::Fitc {
                        fitc,
                        lam,
                        chol_p,
                        m_u,
                    },
                    jitter,
                )
            }
        };
        Ok(GpRegressor {
            data,
            kernel,
            noise,
            mode,
            jitter,
            factor,
        })
    }

    pub fn data(&self) -> &RegressionDataset {
        &self.data
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// Absolute jitter added to the diagonal during factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Inducing inputs in FITC mode.
    pub fn inducing(&self) -> Option<&[InputPoint]> {
        match &self.factor {
            Factor::Fitc { fitc, .. } => Some(fitc.inducing()),
            Factor::Exact { .. } => None,
        }
    }

    fn check_inputs(&self, xs: &[InputPoint]) -> Result<()> {
        if let Some(p) = xs.iter().find(|p| p.dim() != self.dim()) {
            return Err(Error::input(format!(
                "test point has dimension {}, model expects {}",
                p.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Posterior predictive of `y*` (latent variance plus noise).
    pub fn predict(&self, xs: &[InputPoint]) -> Result<Vec<PredictiveGaussian>> {
        let mut out = self.predict_latent(xs)?;
        for p in &mut out {
            p.variance += self.noise;
        }
        Ok(out)
    }

    /// Posterior of the latent `f(x*)`.
    pub fn predict_latent(&self, xs: &[InputPoint]) -> Result<Vec<PredictiveGaussian>> {
        self.check_inputs(xs)?;
        let chunks: Vec<Vec<PredictiveGaussian>> = xs
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| self.predict_chunk(chunk, true))
            .collect();
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Posterior means only; O(n) per point.
    pub fn predict_mean(&self, xs: &[InputPoint]) -> Result<Vec<f64>> {
        self.check_inputs(xs)?;
        let chunks: Vec<Vec<PredictiveGaussian>> = xs
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| self.predict_chunk(chunk, false))
            .collect();
        Ok(chunks.into_iter().flatten().map(|p| p.mean).collect())
    }

    fn predict_chunk(&self, xs: &[InputPoint], with_var: bool) -> Vec<PredictiveGaussian> {
        let prior = self.kernel.variance();
        match &self.factor {
            Factor::Exact { chol, alpha } => {
                let k_sf = kernels::gram_raw(self.data.inputs(), xs, &self.kernel);
                let means = k_sf.tr_mul(alpha);
                let mut v = k_sf;
                if with_var {
                    chol.l_dirty().solve_lower_triangular_mut(&mut v);
                }
                (0..xs.len())
                    .map(|j| PredictiveGaussian {
                        mean: means[j],
                        variance: if with_var {
                            (prior - v.column(j).norm_squared()).max(0.0)
                        } else {
                            f64::NAN
                        },
                    })
                    .collect()
            }
            Factor::Fitc {
                fitc, chol_p, m_u, ..
            } => {
                let k_su = kernels::gram_raw(xs, fitc.inducing(), &self.kernel);
                let w = fitc.whiten_cross(&k_su);
                let means = w.tr_mul(m_u);
                let mut wp = w.clone();
                if with_var {
                    chol_p.l_dirty().solve_lower_triangular_mut(&mut wp);
                }
                (0..xs.len())
                    .map(|j| PredictiveGaussian {
                        mean: means[j],
                        variance: if with_var {
                            (prior - w.column(j).norm_squared() + wp.column(j).norm_squared())
                                .max(0.0)
                        } else {
                            f64::NAN
                        },
                    })
                    .collect()
            }
        }
    }

    /// Log marginal likelihood `log p(y | hyperparameters)` from the cached factor.
    pub fn log_marginal(&self) -> f64 {
        let n = self.data.len() as f64;
        let y = DVector::from_column_slice(self.data.targets());
        match &self.factor {
            Factor::Exact { chol, alpha } => {
                -0.5 * y.dot(alpha) - 0.5 * linalg::log_det(chol) - 0.5 * n * LN_2PI
            }
            Factor::Fitc {
                fitc, lam, chol_p, m_u,
            } => {
                let b = fitc.whitened() * y.component_div(lam);
                let quad = y.component_div(lam).dot(&y) - b.dot(m_u);
                let log_det = linalg::log_det(chol_p) + lam.iter().map(|l| l.ln()).sum::<f64>();
                -0.5 * quad - 0.5 * log_det - 0.5 * n * LN_2PI
            }
        }
    }
}

/// Default surface noise: `1e-8·var(y)`, floored so it stays positive.
pub fn default_noise(data: &RegressionDataset) -> f64 {
    (1e-8 * data.target_variance()).max(1e-12)
}

/// Result of a marginal-likelihood search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperFit {
    pub kernel: Kernel,
    pub noise: f64,
    pub log_marginal: f64,
}

/// Maximizes the log marginal likelihood over kernel hyperparameters
/// (and the noise variance when `optimize_noise` is set).
///
/// The first restart starts at `init`; the rest start from log-uniform draws
/// inside `bounds`. The returned objective is never below the objective at
/// `init`.
pub fn optimize_hyper(
    data: &RegressionDataset,
    family: KernelFamily,
    init: &Kernel,
    init_noise: f64,
    bounds: &HyperBounds,
    settings: &SearchSettings,
    optimize_noise: bool,
    mode: &Mode,
) -> Result<HyperFit> {
    if data.is_empty() {
        return Err(Error::input("regression dataset is empty"));
    }
    if init.family() != family {
        return Err(Error::input("initial kernel does not belong to the searched family"));
    }
    let d = data.dim();
    let (mut lower, mut upper) = bounds.log_box(family, d);
    let mut x0 = init.log_params();
    if optimize_noise {
        lower.push(bounds.noise.0.ln());
        upper.push(bounds.noise.1.ln());
        x0.push(init_noise.max(bounds.noise.0).ln());
    }
    let k = family.n_params(d);
    let data = data.dedup();
    let objective = |p: &[f64]| -> Option<f64> {
        let kernel = Kernel::from_log_params(family, &p[..k]);
        let noise = if optimize_noise { p[k].exp() } else { init_noise };
        GpRegressor::fit(&data, kernel, noise, mode.clone())
            .ok()
            .map(|m| m.log_marginal())
            .filter(|v| v.is_finite())
    };
    let best = optimize::maximize(objective, &x0, &lower, &upper, settings)?;
    Ok(HyperFit {
        kernel: Kernel::from_log_params(family, &best.params[..k]),
        noise: if optimize_noise {
            best.params[k].exp()
        } else {
            init_noise
        },
        log_marginal: best.value,
    })
}
