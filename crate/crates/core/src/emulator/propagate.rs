use std::io::Write;

use serde::{Deserialize, Serialize};

use super::TwoStepEmulator;
use crate::error::{Error, Result};
use crate::kernels::InputPoint;
use crate::linalg::norm_cdf;
use crate::simulators::Simulator;

pub const BINS: usize = 1000;

/// Biomarker range covered by the bins (ms).
pub const RANGE: (f64, f64) = (0.0, 1000.0);

/// Histogram of the biomarker over equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerDistribution {
    pub masses: Vec<f64>,
}

fn width() -> f64 {
    (RANGE.1 - RANGE.0) / BINS as f64
}

/// `P(a < X < b)` for `X ~ N(mu, sd²)`, evaluated in the tail nearer to the
/// interval so small masses keep their relative accuracy.
fn interval_mass(a: f64, b: f64, mu: f64, sd: f64) -> f64 {
    let za = (a - mu) / sd;
    let zb = (b - mu) / sd;
    if za > 0.0 {
        norm_cdf(-za) - norm_cdf(-zb)
    } else {
        norm_cdf(zb) - norm_cdf(za)
    }
}

impl BiomarkerDistribution {
    /// Equal-weight mixture of Gaussians `(mean, variance)` binned and
    /// renormalized over the range. Zero variance puts the whole component
    /// in its bin.
    pub fn from_components(components: &[(f64, f64)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::input("no components to bin"));
        }
        let w = width();
        let mut masses = vec![0.0; BINS];
        let bin_of = |y: f64| (((y - RANGE.0) / w).floor() as isize).clamp(0, BINS as isize - 1) as usize;
        for &(mu, var) in components {
            if !(mu.is_finite() && var.is_finite() && var >= 0.0) {
                return Err(Error::numerical(format!("invalid component N({mu}, {var})")));
            }
            let sd = var.sqrt();
            if sd < 1e-9 * w {
                if (RANGE.0..=RANGE.1).contains(&mu) {
                    masses[bin_of(mu)] += 1.0;
                }
                continue;
            }
            let lo = bin_of(mu - 12.0 * sd);
            let hi = bin_of(mu + 12.0 * sd);
            for (b, m) in masses.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let a = RANGE.0 + b as f64 * w;
                *m += interval_mass(a, a + w, mu, sd);
            }
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::numerical("no probability mass falls inside the biomarker range"));
        }
        for m in &mut masses {
            *m /= total;
        }
        Ok(BiomarkerDistribution { masses })
    }

    pub fn center(b: usize) -> f64 {
        RANGE.0 + (b as f64 + 0.5) * width()
    }

    /// `Σ_b center_b · mass_b`.
    pub fn mean(&self) -> f64 {
        self.masses.iter().enumerate().map(|(b, m)| Self::center(b) * m).sum()
    }

    /// CSV with columns `lower,upper,center,mass`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        out.write_record(["lower", "upper", "center", "mass"]).map_err(io)?;
        let wd = width();
        for (b, m) in self.masses.iter().enumerate() {
            let lo = RANGE.0 + b as f64 * wd;
            out.write_record([
                format!("{lo}"),
                format!("{}", lo + wd),
                format!("{}", Self::center(b)),
                format!("{m:e}"),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub distribution: BiomarkerDistribution,
    /// Samples per predicted region, indexed by `label − 1`.
    pub tally: [usize; 3],
    /// Samples answered by the simulator.
    pub fallback: usize,
}

impl Propagation {
    /// Samples contributing to the distribution.
    pub fn n_ap(&self) -> usize {
        self.tally[1]
    }
}

/// Pushes input samples through the emulator and mixes the surface
/// predictions of the valid-region samples into a binned distribution.
pub fn propagate(
    em: &TwoStepEmulator,
    samples: &[InputPoint],
    fallback: Option<f64>,
    sim: Option<&dyn Simulator>,
) -> Result<Propagation> {
    if samples.is_empty() {
        return Err(Error::input("no input samples to propagate"));
    }
    let preds = em.predict(samples, fallback, sim)?;
    let mut tally = [0; 3];
    let mut components = Vec::new();
    let mut n_fallback = 0;
    for p in &preds {
        tally[(p.label - 1) as usize] += 1;
        n_fallback += p.fallback as usize;
        if let Some(g) = p.prediction {
            components.push((g.mean, g.variance));
        }
    }
    if components.is_empty() {
        return Err(Error::EmptyDistribution { tally });
    }
    Ok(Propagation {
        distribution: BiomarkerDistribution::from_components(&components)?,
        tally,
        fallback: n_fallback,
    })
}
