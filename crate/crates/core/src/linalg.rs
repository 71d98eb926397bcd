//! Small dense linear-algebra and normal-distribution helpers.

use nalgebra::{Cholesky, DMatrix, Dyn};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// First jitter level, relative to the prior variance.
pub const JITTER: f64 = 1e-10;
/// Jitter used for the single retry after a failed factorization.
pub const JITTER_RETRY: f64 = 1e-6;

/// Cholesky factor of `a + jitter·scale·I`, escalating jitter once on failure.
///
/// Returns the factor and the absolute jitter that was added.
pub fn cholesky_jittered(a: &DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for level in [JITTER, JITTER_RETRY] {
        let jitter = level * scale;
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            if c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok((c, jitter));
            }
        }
    }
    Err(Error::numerical(format!(
        "Cholesky factorization failed after jitter {:e}",
        JITTER_RETRY * scale
    )))
}

/// `log|A|` from a Cholesky factor of `A`.
pub fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Normal CDF with mean and standard deviation.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    norm_cdf((x - mean) / sd)
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln σ(x)` for the logistic sigmoid.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        let d = norm_cdf(1.0) - 0.841_344_746_068_542_9;
        assert!(d.abs() < 1e-10, "{d:e}");
        assert!((norm_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-12);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        let a = DMatrix::from_element(3, 3, 1.0);
        let (c, jitter) = cholesky_jittered(&a, 1.0).unwrap();
        assert!(jitter > 0.0);
        assert!(log_det(&c).is_finite());
        assert!(cholesky_jittered(&DMatrix::from_element(2, 2, -1.0), 1.0).is_err());
    }
}
