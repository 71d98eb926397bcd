//! Dense reference implementations used as test oracles. Everything here
//! uses explicit inverses and determinants and brute-force integration, and
//! shares no code with the library beyond the input types.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

#[derive(Debug, Clone, Copy)]
pub enum OracleKernel {
    Se { variance: f64, lengthscale: f64 },
    Rq { variance: f64, lengthscale: f64, alpha: f64 },
}

impl OracleKernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        match *self {
            OracleKernel::Se { variance, lengthscale } => variance * (-0.5 * r2 / (lengthscale * lengthscale)).exp(),
            OracleKernel::Rq {
                variance,
                lengthscale,
                alpha,
            } => variance * (1.0 + r2 / (2.0 * alpha * lengthscale * lengthscale)).powf(-alpha),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            OracleKernel::Se { variance, .. } | OracleKernel::Rq { variance, .. } => variance,
        }
    }

    pub fn gram(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), ys.len(), |i, j| self.eval(&xs[i], &ys[j]))
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Posterior of exact GP regression with `diag` added to the Gram matrix.
pub struct DenseRegression {
    pub means: Vec<f64>,
    /// Latent variances.
    pub variances: Vec<f64>,
    pub log_marginal: f64,
}

pub fn dense_regression(
    xs: &[Vec<f64>],
    ys: &[f64],
    kernel: OracleKernel,
    diag: f64,
    test: &[Vec<f64>],
) -> DenseRegression {
    let n = xs.len();
    let a = kernel.gram(xs, xs) + DMatrix::identity(n, n) * diag;
    let a_inv = a.clone().try_inverse().expect("invertible");
    let y = DVector::from_column_slice(ys);
    let k_star = kernel.gram(xs, test);
    let weights = &a_inv * &y;
    let means = (k_star.transpose() * &weights).as_slice().to_vec();
    let variances = (0..test.len())
        .map(|j| {
            let k = k_star.column(j);
            kernel.variance() - (k.transpose() * &a_inv * k)[(0, 0)]
        })
        .collect();
    let log_marginal = -0.5 * y.dot(&weights)
        - 0.5 * a.determinant().ln()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    DenseRegression {
        means,
        variances,
        log_marginal,
    }
}

fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// `(ln Z, mean, variance)` of `σ(y f) N(f; mu, var)` by a 24-sd trapezoid.
pub fn tilted(y: f64, mu: f64, var: f64) -> (f64, f64, f64) {
    let sd = var.sqrt();
    let steps = 8000;
    let h = 24.0 * sd / steps as f64;
    let logs: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let f = mu - 12.0 * sd + k as f64 * h;
            let z = (f - mu) / sd;
            (f, -0.5 * z * z + log_sigmoid(y * f))
        })
        .collect();
    let top = logs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut z0, mut z1, mut z2) = (0.0, 0.0, 0.0);
    for (k, &(f, l)) in logs.iter().enumerate() {
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 } * (l - top).exp();
        z0 += w;
        z1 += w * f;
        z2 += w * f * f;
    }
    let mean = z1 / z0;
    let log_z = top + (z0 * h).ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
    (log_z, mean, z2 / z0 - mean * mean)
}

/// Brute-force EP for the logistic likelihood: the full posterior is rebuilt
/// from explicit inverses after every site update.
pub struct DenseEp {
    pub k: DMatrix<f64>,
    pub xs: Vec<Vec<f64>>,
    pub kernel: OracleKernel,
    pub tau: DVector<f64>,
    pub nu: DVector<f64>,
    pub log_z: f64,
}

fn posterior(k: &DMatrix<f64>, tau: &DVector<f64>, nu: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = k.nrows();
    let s = DMatrix::from_diagonal(&tau.map(f64::sqrt));
    let b = DMatrix::identity(n, n) + &s * k * &s;
    let b_inv = b.try_inverse().expect("B invertible");
    let sigma = k - k * &s * b_inv * &s * k;
    let mu = &sigma * nu;
    (sigma, mu)
}

impl DenseEp {
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], kernel: OracleKernel) -> DenseEp {
        let n = xs.len();
        let k = kernel.gram(xs, xs);
        let mut tau = DVector::zeros(n);
        let mut nu = DVector::zeros(n);
        for _ in 0..2000 {
            let mut change: f64 = 0.0;
            for i in 0..n {
                let (sigma, mu) = posterior(&k, &tau, &nu);
                let tau_c = 1.0 / sigma[(i, i)] - tau[i];
                let nu_c = mu[i] / sigma[(i, i)] - nu[i];
                let (_, m, v) = tilted(ys[i], nu_c / tau_c, 1.0 / tau_c);
                let new_tau = (1.0 / v - tau_c).max(0.0);
                let new_nu = m / v - nu_c;
                change = change.max((new_tau - tau[i]).abs()).max((new_nu - nu[i]).abs());
                tau[i] = new_tau;
                nu[i] = new_nu;
            }
            if change < 1e-12 {
                break;
            }
        }
        // Evidence in covariance form with site variances and means.
        let (sigma, mu) = posterior(&k, &tau, &nu);
        let site_var = tau.map(|t| 1.0 / t);
        let site_mean = nu.component_div(&tau);
        let a = &k + DMatrix::from_diagonal(&site_var);
        let a_inv = a.clone().try_inverse().expect("K + site variances invertible");
        let mut log_z = -0.5 * a.determinant().ln() - 0.5 * (site_mean.transpose() * &a_inv * &site_mean)[(0, 0)];
        for i in 0..n {
            let tau_c = 1.0 / sigma[(i, i)] - tau[i];
            let nu_c = mu[i] / sigma[(i, i)] - nu[i];
            let (var_c, mu_c) = (1.0 / tau_c, nu_c / tau_c);
            let (lz, _, _) = tilted(ys[i], mu_c, var_c);
            let s = var_c + site_var[i];
            log_z += lz + 0.5 * s.ln() + (mu_c - site_mean[i]).powi(2) / (2.0 * s);
        }
        DenseEp {
            k,
            xs: xs.to_vec(),
            kernel,
            tau,
            nu,
            log_z,
        }
    }

    /// Latent predictive `(mean, variance)` at each test input.
    pub fn latent(&self, test: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let site_var = self.tau.map(|t| 1.0 / t);
        let site_mean = self.nu.component_div(&self.tau);
        let a_inv = (&self.k + DMatrix::from_diagonal(&site_var))
            .try_inverse()
            .expect("invertible");
        let ks = self.kernel.gram(&self.xs, test);
        (0..test.len())
            .map(|j| {
                let k = ks.column(j);
                let m = (k.transpose() * &a_inv * &site_mean)[(0, 0)];
                let v = self.kernel.variance() - (k.transpose() * &a_inv * k)[(0, 0)];
                (m, v)
            })
            .collect()
    }

    /// `Φ(m/√(1+v))` at each test input.
    pub fn probs(&self, test: &[Vec<f64>]) -> Vec<f64> {
        self.latent(test)
            .into_iter()
            .map(|(m, v)| normal_cdf(m / (1.0 + v).sqrt()))
            .collect()
    }
}

/// Differential entropy `−∫ p ln p` of `N(0, var)` by trapezoid over ±20 sd.
pub fn gaussian_entropy_quadrature(var: f64) -> f64 {
    let sd = var.sqrt();
    let steps = 200_000;
    let h = 40.0 * sd / steps as f64;
    let mut total = 0.0;
    for k in 0..=steps {
        let x = -20.0 * sd + k as f64 * h;
        let log_p = -0.5 * x * x / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        total -= w * log_p.exp() * log_p;
    }
    total * h
}

/// Largest minus second-largest entry, by sorting.
pub fn sorted_certainty(p: &[f64; 3]) -> f64 {
    let mut s = *p;
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[2] - s[1]
}
