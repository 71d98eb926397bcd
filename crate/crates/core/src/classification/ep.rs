//! Binary GP classification with Expectation Propagation, exact or FITC.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::logistic_tilted;
use crate::error::{Error, Result};
use crate::kernels::{self, common_dim, FitcStructure, InputPoint, Kernel, KernelFamily};
use crate::linalg::{self, norm_cdf, JITTER};
use crate::optimize::{self, HyperBounds, SearchSettings};
use crate::regression::{sorted_sample, Mode, PredictiveGaussian};

const PREDICT_CHUNK: usize = 256;

/// Inputs with labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryDataset {
    inputs: Vec<InputPoint>,
    labels: Vec<f64>,
}

impl BinaryDataset {
    pub fn new(inputs: Vec<InputPoint>, labels: Vec<i8>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::input(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| **l != 1 && **l != -1) {
            return Err(Error::input(format!("binary label must be -1 or +1, got {l}")));
        }
        common_dim(&inputs)?;
        Ok(BinaryDataset {
            inputs,
            labels: labels.into_iter().map(f64::from).collect(),
        })
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

    /// Labels as `±1.0`.
    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn has_both_labels(&self) -> bool {
        self.labels.iter().any(|l| *l > 0.0) && self.labels.iter().any(|l| *l < 0.0)
    }

    /// The same inputs with every label negated.
    pub fn flipped(&self) -> Self {
        BinaryDataset {
            inputs: self.inputs.clone(),
            labels: self.labels.iter().map(|l| -l).collect(),
        }
    }

    /// Seeded random subset of at most `max` points, in original order.
    pub fn subsample(&self, max: usize, seed: u64) -> Self {
        if self.len() <= max {
            return self.clone();
        }
        let idx = sorted_sample(self.len(), max, seed);
        BinaryDataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpSettings {
    pub max_sweeps: usize,
    /// Convergence threshold on the largest site-parameter change in a sweep.
    pub tol: f64,
}

impl Default for EpSettings {
    fn default() -> Self {
        EpSettings {
            max_sweeps: 20,
            tol: 1e-6,
        }
    }
}

/// Site parameters in natural form: precision `τ̃ = 1/σ̃²` and `ν̃ = μ̃/σ̃²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpState {
    pub tau: Vec<f64>,
    pub nu: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Largest site-parameter change in the final sweep.
    pub last_change: f64,
    /// Site updates skipped for a non-positive cavity precision, all sweeps.
    pub skipped: usize,
}

impl EpState {
    /// Site means `μ̃ = ν̃/τ̃`.
    pub fn site_means(&self) -> Vec<f64> {
        self.nu.iter().zip(&self.tau).map(|(n, t)| n / t).collect()
    }

    /// Site variances `σ̃² = 1/τ̃`.
    pub fn site_variances(&self) -> Vec<f64> {
        self.tau.iter().map(|t| 1.0 / t).collect()
    }
}

#[derive(Debug, Clone)]
enum Posterior {
    Exact {
        chol_b: Cholesky<f64, Dyn>,
        sqrt_s: DVector<f64>,
        alpha: DVector<f64>,
    },
    Fitc {
        fitc: FitcStructure,
        chol_p: Cholesky<f64, Dyn>,
        m_u: DVector<f64>,
    },
}

/// Marginals of the current EP posterior plus the factors behind them.
struct Marginals {
    /// Full posterior covariance (exact mode only).
    sigma: Option<DMatrix<f64>>,
    mu: DVector<f64>,
    var: DVector<f64>,
    log_det_b: f64,
    post: Posterior,
}

#[derive(Debug, Clone)]
pub struct BinaryGpClassifier {
    data: BinaryDataset,
    kernel: Kernel,
    mode: Mode,
    state: EpState,
    post: Posterior,
    log_z: f64,
}

impl BinaryGpClassifier {
    /// Runs EP with sites visited in dataset order.
    pub fn fit(data: &BinaryDataset, kernel: Kernel, mode: Mode, settings: EpSettings) -> Result<Self> {
        if !data.has_both_labels() {
            return Err(Error::input("binary dataset needs at least one example of each label"));
        }
        Self::fit_from(data, kernel, mode, settings, None)
    }

    /// Like [`fit`](Self::fit) but starts from given site parameters for a
    /// prefix of the data and tolerates a single-label dataset.
    pub fn fit_from(
        data: &BinaryDataset,
        kernel: Kernel,
        mode: Mode,
        settings: EpSettings,
        warm: Option<(&[f64], &[f64])>,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("classification dataset is empty"));
        }
        if settings.max_sweeps == 0 {
            return Err(Error::config("EP needs at least one sweep"));
        }
        kernel.validate()?;
        kernel.check_dim(data.dim())?;
        let n = data.len();
        let mut tau = DVector::zeros(n);
        let mut nu = DVector::zeros(n);
        if let Some((t0, n0)) = warm {
            for i in 0..t0.len().min(n0.len()).min(n) {
                if t0[i].is_finite() && n0[i].is_finite() && t0[i] >= 0.0 {
                    tau[i] = t0[i];
                    nu[i] = n0[i];
                }
            }
        }
        let fail = |e: Error| Error::numerical(format!("{e} (kernel {kernel:?})"));
        let engine = Engine::new(data, &kernel, &mode).map_err(fail)?;
        let y = data.labels();

        let mut state = EpState {
            tau: Vec::new(),
            nu: Vec::new(),
            converged: false,
            sweeps: 0,
            last_change: f64::INFINITY,
            skipped: 0,
        };
        let mut marg = engine.marginals(&tau, &nu).map_err(fail)?;
        let mut live = engine.live(&tau, &nu, &marg).map_err(fail)?;
        for sweep in 1..=settings.max_sweeps {
            let mut max_change: f64 = 0.0;
            let mut skipped = 0;
            for i in 0..n {
                let (s_ii, mu_i) = live.marginal(&engine, i, tau[i], nu[i]);
                let tau_c = 1.0 / s_ii - tau[i];
                let nu_c = mu_i / s_ii - nu[i];
                if !(tau_c > 0.0 && tau_c.is_finite() && nu_c.is_finite()) {
                    skipped += 1;
                    continue;
                }
                let m = logistic_tilted(y[i], nu_c / tau_c, 1.0 / tau_c);
                let new_tau = (1.0 / m.variance - tau_c).max(0.0);
                let new_nu = m.mean / m.variance - nu_c;
                if !(new_tau.is_finite() && new_nu.is_finite()) {
                    skipped += 1;
                    continue;
                }
                let d_tau = new_tau - tau[i];
                let d_nu = new_nu - nu[i];
                max_change = max_change.max(d_tau.abs()).max(d_nu.abs());
                let old = (tau[i], nu[i]);
                tau[i] = new_tau;
                nu[i] = new_nu;
                live.update(&engine, i, old, (new_tau, new_nu), &nu);
            }
            state.skipped += skipped;
            state.sweeps = sweep;
            state.last_change = max_change;
            if skipped == n {
                return Err(fail(Error::numerical(format!(
                    "every site had a non-positive cavity precision in sweep {sweep}"
                ))));
            }
            marg = engine.marginals(&tau, &nu).map_err(fail)?;
            if max_change < settings.tol {
                state.converged = true;
                break;
            }
            live = engine.live(&tau, &nu, &marg).map_err(fail)?;
        }

        let log_z = log_z_ep(y, &tau, &nu, &marg);
        state.tau = tau.as_slice().to_vec();
        state.nu = nu.as_slice().to_vec();
        Ok(BinaryGpClassifier {
            data: data.clone(),
            kernel,
            mode,
            state,
            post: marg.post,
            log_z,
        })
    }

    pub fn data(&self) -> &BinaryDataset {
        &self.data
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn state(&self) -> &EpState {
        &self.state
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// EP approximation `ln Z_EP` of the log marginal likelihood.
    pub fn log_marginal(&self) -> f64 {
        self.log_z
    }

    fn check_inputs(&self, xs: &[InputPoint]) -> Result<()> {
        if let Some(p) = xs.iter().find(|p| p.dim() != self.dim()) {
            return Err(Error::input(format!(
                "test point has dimension {}, classifier expects {}",
                p.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Gaussian posterior of the latent function at test inputs.
    pub fn predict_latent(&self, xs: &[InputPoint]) -> Result<Vec<PredictiveGaussian>> {
        self.check_inputs(xs)?;
        let chunks: Vec<Vec<PredictiveGaussian>> = xs
            .par_chunks(PREDICT_CHUNK)
            .map(|c| self.latent_chunk(c))
            .collect();
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Probit-approximated class-`+1` probabilities `Φ(m/√(1+v))`.
    pub fn predict_prob(&self, xs: &[InputPoint]) -> Result<Vec<f64>> {
        Ok(self
            .predict_latent(xs)?
            .iter()
            .map(|p| probit_prob(p.mean, p.variance))
            .collect())
    }

    fn latent_chunk(&self, xs: &[InputPoint]) -> Vec<PredictiveGaussian> {
        let prior = self.kernel.variance();
        match &self.post {
            Posterior::Exact {
                chol_b,
                sqrt_s,
                alpha,
            } => {
                let k = kernels::gram_raw(self.data.inputs(), xs, &self.kernel);
                let means = k.tr_mul(alpha);
                let mut v = k;
                for (i, mut row) in v.row_iter_mut().enumerate() {
                    row *= sqrt_s[i];
                }
                chol_b.l_dirty().solve_lower_triangular_mut(&mut v);
                (0..xs.len())
                    .map(|j| PredictiveGaussian {
                        mean: means[j],
                        variance: (prior - v.column(j).norm_squared()).max(0.0),
                    })
                    .collect()
            }
            Posterior::Fitc { fitc, chol_p, m_u } => {
                let k_su = kernels::gram_raw(xs, fitc.inducing(), &self.kernel);
                let w = fitc.whiten_cross(&k_su);
                let means = w.tr_mul(m_u);
                let mut wp = w.clone();
                chol_p.l_dirty().solve_lower_triangular_mut(&mut wp);
                (0..xs.len())
                    .map(|j| PredictiveGaussian {
                        mean: means[j],
                        variance: (prior - w.column(j).norm_squared() + wp.column(j).norm_squared()).max(0.0),
                    })
                    .collect()
            }
        }
    }
}

/// Result of a classifier evidence search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHyperFit {
    pub kernel: Kernel,
    pub log_marginal: f64,
}

/// Maximizes `ln Z_EP` over kernel hyperparameters, refitting EP at every
/// objective evaluation.
pub fn optimize_hyper_classifier(
    data: &BinaryDataset,
    family: KernelFamily,
    init: &Kernel,
    bounds: &HyperBounds,
    search: &SearchSettings,
    mode: &Mode,
    ep: EpSettings,
) -> Result<ClassifierHyperFit> {
    if init.family() != family {
        return Err(Error::input("initial kernel does not belong to the searched family"));
    }
    if !data.has_both_labels() {
        return Err(Error::input("binary dataset needs at least one example of each label"));
    }
    let (lower, upper) = bounds.log_box(family, data.dim());
    let objective = |p: &[f64]| -> Option<f64> {
        let kernel = Kernel::from_log_params(family, p);
        BinaryGpClassifier::fit(data, kernel, mode.clone(), ep)
            .ok()
            .map(|c| c.log_marginal())
            .filter(|v| v.is_finite())
    };
    let best = optimize::maximize(objective, &init.log_params(), &lower, &upper, search)?;
    Ok(ClassifierHyperFit {
        kernel: Kernel::from_log_params(family, &best.params),
        log_marginal: best.value,
    })
}

/// `Φ(m/√(1+v))`, kept strictly inside `(0, 1)`.
pub fn probit_prob(mean: f64, variance: f64) -> f64 {
    norm_cdf(mean / (1.0 + variance).sqrt()).clamp(1e-16, 1.0 - 1e-16)
}

/// `ln Z_EP` from final site parameters, in a form that stays finite when
/// some `τ̃ᵢ = 0`. Cavities are recomputed from the final posterior marginals.
fn log_z_ep(y: &[f64], tau: &DVector<f64>, nu: &DVector<f64>, marg: &Marginals) -> f64 {
    let mut total = -0.5 * marg.log_det_b + 0.5 * nu.dot(&marg.mu);
    for i in 0..y.len() {
        let s_ii = marg.var[i];
        let tau_c = 1.0 / s_ii - tau[i];
        let nu_c = marg.mu[i] / s_ii - nu[i];
        if !(tau_c > 0.0) {
            return f64::NAN;
        }
        let mu_c = nu_c / tau_c;
        let log_zhat = logistic_tilted(y[i], mu_c, 1.0 / tau_c).log_z;
        let (t, n) = (tau[i], nu[i]);
        total += log_zhat + 0.5 * (t / tau_c).ln_1p()
            + (tau_c * t * mu_c * mu_c - 2.0 * tau_c * mu_c * n - n * n) / (2.0 * (tau_c + t));
    }
    total
}

/// Fixed covariance structure shared by all sweeps of one fit.
enum Engine {
    Exact {
        k: DMatrix<f64>,
    },
    Fitc {
        fitc: FitcStructure,
        /// FITC diagonal `diag(K − Q)` plus jitter.
        d: DVector<f64>,
    },
}

/// Running posterior maintained through rank-one updates inside a sweep.
enum Live {
    Exact {
        sigma: DMatrix<f64>,
        mu: DVector<f64>,
    },
    Fitc {
        chol_p: Cholesky<f64, Dyn>,
        b: DVector<f64>,
        m_u: DVector<f64>,
    },
}

impl Engine {
    fn new(data: &BinaryDataset, kernel: &Kernel, mode: &Mode) -> Result<Engine> {
        Ok(match mode {
            Mode::Exact => Engine::Exact {
                k: kernels::gram_sym_raw(data.inputs(), kernel),
            },
            Mode::Fitc(set) => {
                let xu = set.resolve(data.inputs());
                let fitc = FitcStructure::build(data.inputs(), &xu, kernel)?;
                let jitter = JITTER * kernel.variance();
                let d = fitc.diag_correction().map(|c| c.max(0.0) + jitter);
                Engine::Fitc { fitc, d }
            }
        })
    }

    /// Recomputes the posterior from scratch for the given sites.
    fn marginals(&self, tau: &DVector<f64>, nu: &DVector<f64>) -> Result<Marginals> {
        match self {
            Engine::Exact { k } => {
                let n = k.nrows();
                let sqrt_s = tau.map(f64::sqrt);
                let mut b = k.clone();
                for j in 0..n {
                    for i in 0..n {
                        b[(i, j)] *= sqrt_s[i] * sqrt_s[j];
                    }
                    b[(j, j)] += 1.0;
                }
                let chol_b = b
                    .cholesky()
                    .ok_or_else(|| Error::numerical("EP matrix B is not positive definite"))?;
                // V = L⁻¹ S½ K, Σ = K − VᵀV.
                let mut v = k.clone();
                for (i, mut row) in v.row_iter_mut().enumerate() {
                    row *= sqrt_s[i];
                }
                chol_b.l_dirty().solve_lower_triangular_mut(&mut v);
                let sigma = k - v.tr_mul(&v);
                let mu = &sigma * nu;
                let kn = k * nu;
                let z = chol_b.solve(&kn.component_mul(&sqrt_s)).component_mul(&sqrt_s);
                let alpha = nu - z;
                Ok(Marginals {
                    var: sigma.diagonal(),
                    sigma: Some(sigma),
                    mu,
                    log_det_b: linalg::log_det(&chol_b),
                    post: Posterior::Exact {
                        chol_b,
                        sqrt_s,
                        alpha,
                    },
                })
            }
            Engine::Fitc { fitc, d } => {
                let (chol_p, _, m_u) = self.fitc_factor(tau, nu)?;
                let v = fitc.whitened();
                let mut lv = v.clone();
                chol_p.l_dirty().solve_lower_triangular_mut(&mut lv);
                let delta = DVector::from_fn(tau.len(), |i, _| 1.0 + d[i] * tau[i]);
                let vm = v.tr_mul(&m_u);
                let var = DVector::from_fn(tau.len(), |i, _| {
                    d[i] / delta[i] + lv.column(i).norm_squared() / (delta[i] * delta[i])
                });
                let mu = DVector::from_fn(tau.len(), |i, _| (vm[i] + d[i] * nu[i]) / delta[i]);
                let log_det_b = linalg::log_det(&chol_p) + delta.iter().map(|x| x.ln()).sum::<f64>();
                Ok(Marginals {
                    sigma: None,
                    mu,
                    var,
                    log_det_b,
                    post: Posterior::Fitc {
                        fitc: fitc.clone(),
                        chol_p,
                        m_u,
                    },
                })
            }
        }
    }

    /// `P = I + V diag(τ̃/Δ) Vᵀ`, `b = V (ν̃/Δ)`, `m_u = P⁻¹ b` with `Δ = 1 + dτ̃`.
    fn fitc_factor(&self, tau: &DVector<f64>, nu: &DVector<f64>) -> Result<(Cholesky<f64, Dyn>, DVector<f64>, DVector<f64>)> {
        let Engine::Fitc { fitc, d } = self else {
            unreachable!("FITC factor requested for an exact engine")
        };
        let v = fitc.whitened();
        let m = fitc.m();
        let mut scaled = v.clone();
        let mut r = DVector::zeros(tau.len());
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            let delta = 1.0 + d[i] * tau[i];
            col *= (tau[i] / delta).sqrt();
            r[i] = nu[i] / delta;
        }
        let p = DMatrix::identity(m, m) + &scaled * scaled.transpose();
        let chol_p = p
            .cholesky()
            .ok_or_else(|| Error::numerical("FITC-EP inducing precision is not positive definite"))?;
        let b = v * r;
        let m_u = chol_p.solve(&b);
        Ok((chol_p, b, m_u))
    }

    fn live(&self, tau: &DVector<f64>, nu: &DVector<f64>, marg: &Marginals) -> Result<Live> {
        Ok(match self {
            Engine::Exact { .. } => Live::Exact {
                sigma: marg.sigma.clone().expect("exact marginals carry the covariance"),
                mu: marg.mu.clone(),
            },
            Engine::Fitc { .. } => {
                let (chol_p, b, m_u) = self.fitc_factor(tau, nu)?;
                Live::Fitc { chol_p, b, m_u }
            }
        })
    }
}

impl Live {
    /// Current posterior variance and mean of site `i` with site parameters `(τ̃ᵢ, ν̃ᵢ)`.
    fn marginal(&self, engine: &Engine, i: usize, tau_i: f64, nu_i: f64) -> (f64, f64) {
        match (self, engine) {
            (Live::Exact { sigma, mu }, _) => (sigma[(i, i)], mu[i]),
            (Live::Fitc { chol_p, m_u, .. }, Engine::Fitc { fitc, d }) => {
                let vi = fitc.whitened().column(i);
                let mut lp = vi.clone_owned();
                chol_p.l_dirty().solve_lower_triangular_mut(&mut lp);
                let delta = 1.0 + d[i] * tau_i;
                (
                    d[i] / delta + lp.norm_squared() / (delta * delta),
                    (vi.dot(m_u) + d[i] * nu_i) / delta,
                )
            }
            _ => unreachable!(),
        }
    }

    /// Applies the change of site `i` and refreshes the posterior mean.
    fn update(&mut self, engine: &Engine, i: usize, old: (f64, f64), new: (f64, f64), nu: &DVector<f64>) {
        match (self, engine) {
            (Live::Exact { sigma, mu }, _) => {
                let d_tau = new.0 - old.0;
                let s_ii = sigma[(i, i)];
                let si = sigma.column(i).clone_owned();
                let c = d_tau / (1.0 + d_tau * s_ii);
                sigma.ger(-c, &si, &si, 1.0);
                sigma.mul_to(nu, mu);
            }
            (Live::Fitc { chol_p, b, m_u }, Engine::Fitc { fitc, d }) => {
                let vi = fitc.whitened().column(i).clone_owned();
                let (delta_old, delta_new) = (1.0 + d[i] * old.0, 1.0 + d[i] * new.0);
                let dw = new.0 / delta_new - old.0 / delta_old;
                if dw != 0.0 {
                    chol_p.rank_one_update(&vi, dw);
                }
                b.axpy(new.1 / delta_new - old.1 / delta_old, &vi, 1.0);
                *m_u = chol_p.solve(b);
            }
            _ => unreachable!(),
        }
    }
}
