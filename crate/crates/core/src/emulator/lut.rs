use serde::{Deserialize, Serialize};

use super::Emulator;
use crate::error::{Error, Result};
use crate::kernels::InputPoint;
use crate::simulators::{grid_points, SimResult, Simulator};

/// Look-up-table baseline: simulator results on a regular grid with
/// multilinear interpolation inside cells whose vertices are all valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lut {
    dim: usize,
    k: usize,
    labels: Vec<u8>,
    values: Vec<Option<f64>>,
}

impl Lut {
    /// Largest `k` with `k^d ≤ budget`.
    pub fn resolution_for(budget: usize, dim: usize) -> usize {
        let mut k = (budget as f64).powf(1.0 / dim as f64).floor() as usize;
        while (k + 1).checked_pow(dim as u32).is_some_and(|v| v <= budget) {
            k += 1;
        }
        while k > 0 && k.checked_pow(dim as u32).is_none_or(|v| v > budget) {
            k -= 1;
        }
        k
    }

    /// Runs the simulator at every vertex of a `k^d` grid.
    pub fn fit(sim: &dyn Simulator, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::config(format!("look-up table needs at least 2 levels per dimension, got {k}")));
        }
        let results = grid_points(k, sim.dim())
            .iter()
            .map(|x| sim.evaluate(x))
            .collect::<Result<Vec<_>>>()?;
        Self::from_vertices(sim.dim(), k, &results)
    }

    /// Table from vertex results in grid order (first coordinate slowest).
    pub fn from_vertices(dim: usize, k: usize, results: &[SimResult]) -> Result<Self> {
        if k < 2 || dim == 0 {
            return Err(Error::config("look-up table needs dimension >= 1 and at least 2 levels"));
        }
        if k.checked_pow(dim as u32) != Some(results.len()) {
            return Err(Error::input(format!("{} vertex results for a {k}^{dim} grid", results.len())));
        }
        Ok(Lut {
            dim,
            k,
            labels: results.iter().map(SimResult::label).collect(),
            values: results.iter().map(SimResult::value).collect(),
        })
    }

    pub fn resolution(&self) -> usize {
        self.k
    }

    pub fn vertices(&self) -> usize {
        self.labels.len()
    }

    fn check(&self, x: &InputPoint) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::input(format!("query has dimension {}, table has {}", x.dim(), self.dim)));
        }
        Ok(())
    }

    fn index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, i| acc * self.k + i)
    }

    /// Lower cell corner and local coordinates in `[0,1]`.
    fn cell(&self, x: &InputPoint) -> (Vec<usize>, Vec<f64>) {
        let s = (self.k - 1) as f64;
        x.coords()
            .iter()
            .map(|c| {
                let i = ((c * s).floor() as usize).min(self.k - 2);
                (i, c * s - i as f64)
            })
            .unzip()
    }

    /// Cell vertices with their multilinear weights.
    fn corners(&self, x: &InputPoint) -> Vec<(usize, f64)> {
        let (base, t) = self.cell(x);
        (0..1usize << self.dim)
            .map(|mask| {
                let mut idx = base.clone();
                let mut w = 1.0;
                for j in 0..self.dim {
                    if mask >> j & 1 == 1 {
                        idx[j] += 1;
                        w *= t[j];
                    } else {
                        w *= 1.0 - t[j];
                    }
                }
                (self.index(&idx), w)
            })
            .collect()
    }

    fn nearest(&self, x: &InputPoint) -> usize {
        let s = (self.k - 1) as f64;
        let idx: Vec<usize> = x.coords().iter().map(|c| ((c * s).round() as usize).min(self.k - 1)).collect();
        self.index(&idx)
    }

    /// Label and, inside all-valid cells, the interpolated value. Elsewhere
    /// the label is the nearest vertex's.
    pub fn predict(&self, x: &InputPoint) -> Result<(u8, Option<f64>)> {
        self.check(x)?;
        let corners = self.corners(x);
        if corners.iter().all(|(i, _)| self.labels[*i] == 2) {
            let y = corners.iter().map(|(i, w)| w * self.values[*i].expect("label 2 has a value")).sum();
            return Ok((2, Some(y)));
        }
        Ok((self.labels[self.nearest(x)], None))
    }

    /// Value estimate for any query: multilinear over the valid vertices of
    /// its cell with renormalized weights, or the nearest valid vertex when
    /// the cell has none.
    pub fn surface_value(&self, x: &InputPoint) -> Result<f64> {
        self.check(x)?;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (i, w) in self.corners(x) {
            if let Some(v) = self.values[i] {
                acc += w * v;
                wsum += w;
            }
        }
        if wsum > 0.0 {
            return Ok(acc / wsum);
        }
        let s = (self.k - 1) as f64;
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.values.iter().enumerate() {
            let Some(v) = v else { continue };
            let mut rem = i;
            let mut d = 0.0;
            for j in (0..self.dim).rev() {
                let c = (rem % self.k) as f64 / s;
                rem /= self.k;
                d += (c - x.coords()[j]).powi(2);
            }
            if d < best_d {
                best_d = d;
                best = Some(*v);
            }
        }
        best.ok_or_else(|| Error::input("look-up table has no valid-region vertex"))
    }
}

impl Emulator for Lut {
    fn dim(&self) -> usize {
        self.dim
    }

    fn classify(&self, xs: &[InputPoint]) -> Result<Vec<u8>> {
        xs.iter().map(|x| Ok(self.predict(x)?.0)).collect()
    }

    fn surface_mean(&self, xs: &[InputPoint]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.surface_value(x)).collect()
    }
}
