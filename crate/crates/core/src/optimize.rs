//! Bounded multi-restart Nelder–Mead search in log-hyperparameter space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelFamily;

/// Box constraints on hyperparameters (natural scale, all positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub variance: (f64, f64),
    pub lengthscale: (f64, f64),
    pub alpha: (f64, f64),
    pub noise: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            variance: (1e-6, 1e8),
            lengthscale: (1e-3, 1e2),
            alpha: (1e-2, 1e3),
            noise: (1e-10, 1e4),
        }
    }
}

impl HyperBounds {
    /// Bounds suited to a latent classification function.
    pub fn classifier() -> Self {
        HyperBounds {
            variance: (1e-2, 1e4),
            ..HyperBounds::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("variance", self.variance),
            ("lengthscale", self.lengthscale),
            ("alpha", self.alpha),
            ("noise", self.noise),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::config(format!(
                    "{name} bounds must satisfy 0 < lower <= upper, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    /// Log-space box matching [`crate::kernels::Kernel::log_params`].
    pub fn log_box(&self, family: KernelFamily, d: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.variance.0.ln()];
        let mut hi = vec![self.variance.1.ln()];
        let nl = match family {
            KernelFamily::SquaredExponentialArd => d,
            _ => 1,
        };
        for _ in 0..nl {
            lo.push(self.lengthscale.0.ln());
            hi.push(self.lengthscale.1.ln());
        }
        if family == KernelFamily::RationalQuadratic {
            lo.push(self.alpha.0.ln());
            hi.push(self.alpha.1.ln());
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    /// Number of simplex runs; the first starts at the initial point.
    pub restarts: usize,
    /// Objective evaluations allowed per run.
    pub max_evals: usize,
    /// Stop when the simplex's objective spread falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            restarts: 5,
            max_evals: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub params: Vec<f64>,
    pub value: f64,
}

/// Maximizes `f` over the box `[lower, upper]`.
///
/// `f` returns `None` where it cannot be evaluated. Points are clamped into the
/// box before evaluation. The starting point is itself a candidate, so the
/// result is never worse than `f(x0)` when that is finite.
pub fn maximize<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], settings: &SearchSettings) -> Result<Optimum>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let d = x0.len();
    if lower.len() != d || upper.len() != d {
        return Err(Error::input("bounds and start point differ in length"));
    }
    if settings.restarts == 0 {
        return Err(Error::config("restarts must be >= 1"));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::config("lower bound exceeds upper bound"));
    }
    let clamp = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(lower.iter().zip(upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut best: Option<Optimum> = None;
    let consider = |best: &mut Option<Optimum>, x: Vec<f64>, v: f64| {
        if best.as_ref().is_none_or(|b| v > b.value) {
            *best = Some(Optimum { params: x, value: v });
        }
    };
    for restart in 0..settings.restarts {
        let start = if restart == 0 {
            clamp(x0)
        } else {
            (0..d).map(|i| rng.random_range(lower[i]..=upper[i])).collect()
        };
        if let Some((x, v)) = nelder_mead(&mut f, start, lower, upper, settings) {
            consider(&mut best, x, v);
        }
    }
    best.ok_or_else(|| {
        Error::Optimization(format!(
            "all {} restarts failed to evaluate the objective",
            settings.restarts
        ))
    })
}

/// One bounded Nelder–Mead run; returns the best finite point seen.
fn nelder_mead<F>(f: &mut F, start: Vec<f64>, lower: &[f64], upper: &[f64], s: &SearchSettings) -> Option<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let d = start.len();
    let clamp = |x: Vec<f64>| -> Vec<f64> {
        x.into_iter()
            .zip(lower.iter().zip(upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    };
    let mut evals = 0usize;
    // Minimize the negated objective; failures count as +inf.
    let mut cost = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        f(x).map_or(f64::INFINITY, |v| -v)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let c0 = cost(&start, &mut evals);
    simplex.push((start.clone(), c0));
    for i in 0..d {
        let width = upper[i] - lower[i];
        let step = (0.25 * width).min(1.0);
        let mut x = start.clone();
        x[i] = if x[i] + step <= upper[i] { x[i] + step } else { x[i] - step };
        let x = clamp(x);
        let c = cost(&x, &mut evals);
        simplex.push((x, c));
    }

    while evals < s.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (fb, fw) = (simplex[0].1, simplex[d].1);
        if fb.is_finite() && fw.is_finite() && (fw - fb).abs() <= s.tol * (1.0 + fb.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|p| p.0[j]).sum::<f64>() / d as f64)
            .collect();
        let towards = |t: f64, from: &[f64]| -> Vec<f64> {
            clamp(centroid.iter().zip(from).map(|(c, x)| c + t * (x - c)).collect())
        };
        let worst = simplex[d].0.clone();
        let xr = towards(-1.0, &worst);
        let fr = cost(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = towards(-2.0, &worst);
            let fe = cost(&xe, &mut evals);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = towards(-0.5, &worst);
                let fc = cost(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = towards(0.5, &worst);
                let fc = cost(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x = clamp(best.iter().zip(&p.0).map(|(b, x)| b + 0.5 * (x - b)).collect());
                    let c = cost(&x, &mut evals);
                    *p = (x, c);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, c) = simplex.swap_remove(0);
    c.is_finite().then_some((x, -c))
}
