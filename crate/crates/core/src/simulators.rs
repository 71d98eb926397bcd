//! Ground-truth providers: closed-form synthetic surfaces, CSV-backed point
//! pools, and the Hill-curve mapping from drug parameters to conductance scalings.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::InputPoint;

/// Upper end of the biomarker range (ms).
pub const MAX_VALUE: f64 = 1000.0;

/// Region label plus the biomarker value when the region is valid (label 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    label: u8,
    value: Option<f64>,
}

impl SimResult {
    /// Valid-region result with biomarker value `y ∈ (0, 1000)`.
    pub fn valid(y: f64) -> Result<Self> {
        if !(y > 0.0 && y < MAX_VALUE) {
            return Err(Error::input(format!("biomarker value {y} outside (0, {MAX_VALUE})")));
        }
        Ok(SimResult {
            label: 2,
            value: Some(y),
        })
    }

    /// Result for an invalid region (label 1 or 3).
    pub fn invalid(label: u8) -> Result<Self> {
        if label != 1 && label != 3 {
            return Err(Error::input(format!("invalid-region label must be 1 or 3, got {label}")));
        }
        Ok(SimResult { label, value: None })
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }
}

/// A labeled point of the input domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: InputPoint,
    pub result: SimResult,
}

/// Something that can be run at a point of `[0,1]^D`.
pub trait Simulator: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &InputPoint) -> Result<SimResult>;

    fn check_dim(&self, x: &InputPoint) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::input(format!(
                "point has dimension {}, simulator expects {}",
                x.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Moves a proposed point onto the simulator's domain of support.
    fn snap(&self, x: InputPoint) -> InputPoint {
        x
    }

    /// The finite point set the simulator can evaluate, when there is one.
    fn pool(&self) -> Option<Vec<InputPoint>> {
        None
    }

    /// Evaluates a batch, failing on the first error.
    fn evaluate_all(&self, xs: &[InputPoint]) -> Result<Vec<Sample>> {
        xs.iter()
            .map(|x| {
                Ok(Sample {
                    x: x.clone(),
                    result: self.evaluate(x)?,
                })
            })
            .collect()
    }
}

/// Closed-form discontinuous test surface with three regions.
///
/// With `r1, r2` the first two coordinates and `M` the mean of the remaining
/// ones (0.5 when `D = 2`):
/// label 1 if `r1 < 0.12 + 0.03 r2`; otherwise label 3 if
/// `r2 < b2 = 0.28(1 − 0.4 r1) + 0.05(M − 0.5)`; otherwise label 2 with
/// `y = 220 + 180(1−r2)² + 60(1−r1) + 50(1−M) + 90 exp(−12(r2 − b2))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Synthetic {
    dim: usize,
}

impl Synthetic {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config(format!("synthetic surface needs D >= 2, got {dim}")));
        }
        Ok(Synthetic { dim })
    }

    pub fn b1(r2: f64) -> f64 {
        0.12 + 0.03 * r2
    }

    pub fn b2(r1: f64, m: f64) -> f64 {
        0.28 * (1.0 - 0.4 * r1) + 0.05 * (m - 0.5)
    }

    fn rest_mean(c: &[f64]) -> f64 {
        if c.len() == 2 {
            0.5
        } else {
            c[2..].iter().sum::<f64>() / (c.len() - 2) as f64
        }
    }
}

impl Simulator for Synthetic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &InputPoint) -> Result<SimResult> {
        self.check_dim(x)?;
        let c = x.coords();
        let (r1, r2) = (c[0], c[1]);
        let m = Self::rest_mean(c);
        if r1 < Self::b1(r2) {
            return SimResult::invalid(1);
        }
        let b2 = Self::b2(r1, m);
        if r2 < b2 {
            return SimResult::invalid(3);
        }
        let y = 220.0
            + 180.0 * (1.0 - r2).powi(2)
            + 60.0 * (1.0 - r1)
            + 50.0 * (1.0 - m)
            + 90.0 * (-12.0 * (r2 - b2)).exp();
        SimResult::valid(y)
    }
}

/// A finite set of precomputed points served by exact coordinate lookup.
#[derive(Debug, Clone)]
pub struct PoolSimulator {
    dim: usize,
    samples: Vec<Sample>,
    index: HashMap<Vec<u64>, usize>,
}

fn key(x: &InputPoint) -> Vec<u64> {
    x.coords().iter().map(|c| c.to_bits()).collect()
}

impl PoolSimulator {
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples
            .first()
            .map(|s| s.x.dim())
            .ok_or_else(|| Error::input("pool has no points"))?;
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.x.dim() != dim {
                return Err(Error::input(format!("pool point {i} has dimension {}", s.x.dim())));
            }
            if index.insert(key(&s.x), i).is_some() {
                return Err(Error::input(format!("pool point {i} duplicates an earlier point")));
            }
        }
        Ok(PoolSimulator { dim, samples, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
        let samples = read_dataset(file, &path.display().to_string())?;
        Self::from_samples(samples).map_err(|e| Error::Ingest {
            path: path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn points(&self) -> Vec<InputPoint> {
        self.samples.iter().map(|s| s.x.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl Simulator for PoolSimulator {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Nearest pool point in Euclidean distance, lowest index on ties.
    fn snap(&self, x: InputPoint) -> InputPoint {
        if self.index.contains_key(&key(&x)) || x.dim() != self.dim {
            return x;
        }
        let dist = |s: &Sample| -> f64 {
            s.x.coords().iter().zip(x.coords()).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.samples.iter().enumerate() {
            let d = dist(s);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        self.samples[best].x.clone()
    }

    fn pool(&self) -> Option<Vec<InputPoint>> {
        Some(self.points())
    }

    fn evaluate(&self, x: &InputPoint) -> Result<SimResult> {
        self.check_dim(x)?;
        self.index
            .get(&key(x))
            .map(|&i| self.samples[i].result)
            .ok_or_else(|| Error::Simulation {
                point: x.coords().to_vec(),
                reason: "point is not in the pool".into(),
            })
    }
}

/// Writes samples in the dataset CSV format `R_1..R_D,label,apd90`.
pub fn write_dataset<W: Write>(w: W, samples: &[Sample]) -> Result<()> {
    let d = samples.first().map_or(0, |s| s.x.dim());
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=d).map(|j| format!("R_{j}")).collect();
    header.push("label".into());
    header.push("apd90".into());
    out.write_record(&header).map_err(csv_io)?;
    for s in samples {
        let mut row: Vec<String> = s.x.coords().iter().map(|c| format!("{c}")).collect();
        row.push(s.result.label().to_string());
        row.push(s.result.value().map(|v| format!("{v}")).unwrap_or_default());
        out.write_record(&row).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn ingest(path: &str, line: u64, reason: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_string(),
        line,
        reason: reason.into(),
    }
}

fn parse_f64(path: &str, line: u64, field: &str, name: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| ingest(path, line, format!("column {name}: `{field}` is not a number")))
}

/// Parses the dataset CSV format; `path` is only used in error messages.
pub fn read_dataset<R: Read>(r: R, path: &str) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| ingest(path, 1, e.to_string()))?,
        None => return Err(ingest(path, 1, "file is empty")),
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let d = cols.len().saturating_sub(2);
    let expected: Vec<String> = (1..=d)
        .map(|j| format!("R_{j}"))
        .chain(["label".to_string(), "apd90".to_string()])
        .collect();
    if d == 0 || cols != expected {
        return Err(ingest(
            path,
            1,
            format!("header must be R_1,...,R_D,label,apd90, got `{}`", cols.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ingest(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 2 {
            return Err(ingest(path, line, format!("expected {} fields, found {}", d + 2, rec.len())));
        }
        let coords = (0..d)
            .map(|j| parse_f64(path, line, &rec[j], &expected[j]))
            .collect::<Result<Vec<f64>>>()?;
        let x = InputPoint::new(coords).map_err(|e| ingest(path, line, e.to_string()))?;
        let label: u8 = rec[d]
            .trim()
            .parse()
            .map_err(|_| ingest(path, line, format!("label `{}` is not 1, 2 or 3", &rec[d])))?;
        let value = rec[d + 1].trim();
        let result = match (label, value.is_empty()) {
            (2, true) => return Err(ingest(path, line, "label 2 requires an apd90 value")),
            (2, false) => {
                SimResult::valid(parse_f64(path, line, value, "apd90")?).map_err(|e| ingest(path, line, e.to_string()))?
            }
            (1 | 3, true) => SimResult::invalid(label).expect("label checked"),
            (1 | 3, false) => {
                return Err(ingest(path, line, format!("label {label} must have an empty apd90 field")))
            }
            _ => return Err(ingest(path, line, format!("label `{label}` is not 1, 2 or 3"))),
        };
        out.push(Sample { x, result });
    }
    Ok(out)
}

/// Reads input points from a CSV whose header starts `R_1,...,R_D`; a
/// trailing `label,apd90` pair, as in dataset files, is ignored.
pub fn read_points<R: Read>(r: R, path: &str) -> Result<Vec<InputPoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| ingest(path, 1, e.to_string()))?,
        None => return Err(ingest(path, 1, "file is empty")),
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let d = if cols.ends_with(&["label", "apd90"]) { cols.len() - 2 } else { cols.len() };
    if d == 0 || (0..d).any(|j| cols[j] != format!("R_{}", j + 1)) {
        return Err(ingest(path, 1, format!("header must start R_1,...,R_D, got `{}`", cols.join(","))));
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| ingest(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols.len() {
            return Err(ingest(path, line, format!("expected {} fields, found {}", cols.len(), rec.len())));
        }
        let coords = (0..d)
            .map(|j| parse_f64(path, line, &rec[j], cols[j]))
            .collect::<Result<Vec<f64>>>()?;
        out.push(InputPoint::new(coords).map_err(|e| ingest(path, line, e.to_string()))?);
    }
    Ok(out)
}

/// Concentration-effect parameters of one drug on one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillParams {
    pub ic50: f64,
    pub n: f64,
    pub concentration: f64,
}

impl HillParams {
    pub fn new(ic50: f64, n: f64, concentration: f64) -> Result<Self> {
        if !(ic50 > 0.0 && ic50.is_finite()) {
            return Err(Error::input(format!("IC50 must be positive, got {ic50}")));
        }
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::input(format!("Hill coefficient must be positive, got {n}")));
        }
        if !(concentration >= 0.0 && concentration.is_finite()) {
            return Err(Error::input(format!("concentration must be >= 0, got {concentration}")));
        }
        Ok(HillParams { ic50, n, concentration })
    }

    /// Parameters from `pIC50 = −log10(IC50)`.
    pub fn from_pic50(pic50: f64, n: f64, concentration: f64) -> Result<Self> {
        Self::new(10f64.powf(-pic50), n, concentration)
    }
}

/// Conductance scaling `R = 1 − Cⁿ/(Cⁿ + IC50ⁿ)`.
pub fn hill_scaling(p: &HillParams) -> f64 {
    if p.concentration == 0.0 {
        return 1.0;
    }
    // 1/(1 + (C/IC50)ⁿ) is the same quantity without cancellation.
    1.0 / (1.0 + (p.concentration / p.ic50).powf(p.n))
}

/// Percentage block `100(1 − R)`.
pub fn percent_block(r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::input(format!("scaling {r} outside [0, 1]")));
    }
    Ok(100.0 * (1.0 - r))
}

/// One `(pIC50, hill)` row of a Hill-sample file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillSample {
    pub pic50: f64,
    pub hill: f64,
}

/// Parses a Hill-sample CSV with header `pIC50,hill`.
pub fn read_hill_samples<R: Read>(r: R, path: &str) -> Result<Vec<HillSample>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| ingest(path, 1, e.to_string()))?,
        None => return Err(ingest(path, 1, "file is empty")),
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols != ["pIC50", "hill"] {
        return Err(ingest(path, 1, format!("header must be pIC50,hill, got `{}`", cols.join(","))));
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| ingest(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(ingest(path, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let pic50 = parse_f64(path, line, &rec[0], "pIC50")?;
        let hill = parse_f64(path, line, &rec[1], "hill")?;
        if !pic50.is_finite() || !(hill > 0.0 && hill.is_finite()) {
            return Err(ingest(path, line, "pIC50 must be finite and hill positive"));
        }
        out.push(HillSample { pic50, hill });
    }
    Ok(out)
}

/// Maps Hill samples to input points: the `channel` coordinate (0-based) gets
/// the Hill scaling at `concentration`, every other coordinate is `other`.
pub fn hill_inputs(samples: &[HillSample], concentration: f64, dim: usize, channel: usize, other: f64) -> Result<Vec<InputPoint>> {
    if channel >= dim {
        return Err(Error::config(format!("channel {} outside dimension {dim}", channel + 1)));
    }
    samples
        .iter()
        .map(|s| {
            let r = hill_scaling(&HillParams::from_pic50(s.pic50, s.hill, concentration)?);
            let mut c = vec![other; dim];
            c[channel] = r;
            InputPoint::new(c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    Uniform,
    Grid,
    CornersAugmented,
}

impl std::str::FromStr for SamplingScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplingScheme::Uniform),
            "grid" => Ok(SamplingScheme::Grid),
            "corners" | "corners_augmented" | "corners-augmented" => Ok(SamplingScheme::CornersAugmented),
            other => Err(Error::config(format!("unknown sampling scheme `{other}`"))),
        }
    }
}

/// Draws `n` uniform points in `[0,1)^d` from a seeded generator.
pub fn uniform_points(n: usize, d: usize, rng: &mut impl Rng) -> Vec<InputPoint> {
    (0..n)
        .map(|_| InputPoint::new((0..d).map(|_| rng.random::<f64>()).collect()).expect("in [0,1)"))
        .collect()
}

/// All `2^d` corners of the unit cube.
pub fn corners(d: usize) -> Vec<InputPoint> {
    (0..1usize << d)
        .map(|mask| InputPoint::new((0..d).map(|j| ((mask >> (d - 1 - j)) & 1) as f64).collect()).expect("corner"))
        .collect()
}

/// Design points under the given scheme.
///
/// `Grid` needs `n = k^d` and places coordinates at `i/(k−1)` (0.5 when
/// `k = 1`). `CornersAugmented` appends the `2^d` corners to `n` uniform points.
pub fn sample_inputs(n: usize, d: usize, seed: u64, scheme: SamplingScheme) -> Result<Vec<InputPoint>> {
    if d == 0 {
        return Err(Error::input("dimension must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match scheme {
        SamplingScheme::Uniform => Ok(uniform_points(n, d, &mut rng)),
        SamplingScheme::CornersAugmented => {
            let mut pts = uniform_points(n, d, &mut rng);
            pts.extend(corners(d));
            Ok(pts)
        }
        SamplingScheme::Grid => {
            let k = (n as f64).powf(1.0 / d as f64).round() as usize;
            if k == 0 || k.checked_pow(d as u32) != Some(n) {
                return Err(Error::input(format!("grid needs n to be a perfect {d}-th power, got {n}")));
            }
            Ok(grid_points(k, d))
        }
    }
}

/// Regular grid with `k` levels per dimension, first coordinate slowest.
pub fn grid_points(k: usize, d: usize) -> Vec<InputPoint> {
    let level = |i: usize| if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
    let total = k.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut c = vec![0.0; d];
            for j in (0..d).rev() {
                c[j] = level(idx % k);
                idx /= k;
            }
            InputPoint::new(c).expect("grid level in [0,1]")
        })
        .collect()
}
