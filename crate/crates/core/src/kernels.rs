//! Covariance functions, Gram assembly and the FITC covariance structure.
//!
//! Inputs live in the unit hypercube of conductance scalings. Both kernels
//! are stationary and depend on the inputs only through `‖x1 − x2‖²`
//! (per-dimension scaled in ARD mode).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// A point of the input domain `[0,1]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct InputPoint(Vec<f64>);

impl InputPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::input("input point has no coordinates"));
        }
        if let Some(c) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::input(format!(
                "coordinate {c} outside [0, 1] in {coords:?}"
            )));
        }
        Ok(InputPoint(coords))
    }

    /// Builds a point by clamping every coordinate into `[0, 1]`.
    ///
    /// Panics on NaN coordinates.
    pub fn clamped(coords: Vec<f64>) -> Self {
        assert!(!coords.is_empty() && coords.iter().all(|c| !c.is_nan()));
        InputPoint(coords.into_iter().map(|c| c.clamp(0.0, 1.0)).collect())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for InputPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        InputPoint::new(v)
    }
}

impl From<InputPoint> for Vec<f64> {
    fn from(p: InputPoint) -> Self {
        p.0
    }
}

/// Checks that all points share one dimension and returns it.
pub fn common_dim(points: &[InputPoint]) -> Result<usize> {
    let d = points.first().map(InputPoint::dim).unwrap_or(0);
    if let Some(p) = points.iter().find(|p| p.dim() != d) {
        return Err(Error::input(format!(
            "dimension mismatch: expected {d}, found {}",
            p.dim()
        )));
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lengthscales {
    Isotropic(f64),
    Ard(Vec<f64>),
}

/// Squared-exponential hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeHyper {
    pub variance: f64,
    pub lengthscales: Lengthscales,
}

impl SeHyper {
    pub fn isotropic(variance: f64, lengthscale: f64) -> Self {
        SeHyper {
            variance,
            lengthscales: Lengthscales::Isotropic(lengthscale),
        }
    }

    pub fn ard(variance: f64, lengthscales: Vec<f64>) -> Self {
        SeHyper {
            variance,
            lengthscales: Lengthscales::Ard(lengthscales),
        }
    }

    fn validate(&self) -> Result<()> {
        positive("variance", self.variance)?;
        match &self.lengthscales {
            Lengthscales::Isotropic(l) => positive("lengthscale", *l),
            Lengthscales::Ard(ls) if ls.is_empty() => {
                Err(Error::input("ARD lengthscale vector is empty"))
            }
            Lengthscales::Ard(ls) => ls.iter().try_for_each(|l| positive("lengthscale", *l)),
        }
    }
}

/// Rational-quadratic hyperparameters (isotropic only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqHyper {
    pub variance: f64,
    pub lengthscale: f64,
    pub alpha: f64,
}

impl RqHyper {
    pub fn new(variance: f64, lengthscale: f64, alpha: f64) -> Self {
        RqHyper {
            variance,
            lengthscale,
            alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        positive("variance", self.variance)?;
        positive("lengthscale", self.lengthscale)?;
        positive("alpha", self.alpha)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// `ν²·exp(−‖x1−x2‖²/(2l²))`.
pub fn se_kernel(x1: &InputPoint, x2: &InputPoint, h: &SeHyper) -> Result<f64> {
    Kernel::SquaredExponential(h.clone()).eval(x1, x2)
}

/// `ν²·(1 + ‖x1−x2‖²/(2αl²))^(−α)`.
pub fn rq_kernel(x1: &InputPoint, x2: &InputPoint, h: &RqHyper) -> Result<f64> {
    Kernel::RationalQuadratic(h.clone()).eval(x1, x2)
}

/// Which kernel family a hyperparameter search runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    SquaredExponentialArd,
    RationalQuadratic,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" | "squared_exponential" => Ok(KernelFamily::SquaredExponential),
            "se_ard" | "squared_exponential_ard" => Ok(KernelFamily::SquaredExponentialArd),
            "rq" | "rational_quadratic" => Ok(KernelFamily::RationalQuadratic),
            other => Err(Error::config(format!("unknown kernel family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    SquaredExponential(SeHyper),
    RationalQuadratic(RqHyper),
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::SquaredExponential(h) => h.validate(),
            Kernel::RationalQuadratic(h) => h.validate(),
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            Kernel::SquaredExponential(SeHyper {
                lengthscales: Lengthscales::Ard(_),
                ..
            }) => KernelFamily::SquaredExponentialArd,
            Kernel::SquaredExponential(_) => KernelFamily::SquaredExponential,
            Kernel::RationalQuadratic(_) => KernelFamily::RationalQuadratic,
        }
    }

    /// Prior variance `ν²`, i.e. `k(x, x)`.
    pub fn variance(&self) -> f64 {
        match self {
            Kernel::SquaredExponential(h) => h.variance,
            Kernel::RationalQuadratic(h) => h.variance,
        }
    }

    /// Checks that the kernel can be evaluated on `d`-dimensional inputs.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        if let Kernel::SquaredExponential(SeHyper {
            lengthscales: Lengthscales::Ard(ls),
            ..
        }) = self
        {
            if ls.len() != d {
                return Err(Error::input(format!(
                    "ARD kernel has {} lengthscales but inputs have dimension {d}",
                    ls.len()
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x1: &InputPoint, x2: &InputPoint) -> Result<f64> {
        self.validate()?;
        if x1.dim() != x2.dim() {
            return Err(Error::input(format!(
                "dimension mismatch: {} vs {}",
                x1.dim(),
                x2.dim()
            )));
        }
        self.check_dim(x1.dim())?;
        Ok(self.eval_raw(x1.coords(), x2.coords()))
    }

    /// Evaluates without validation; callers guarantee matching dimensions.
    #[inline]
    pub(crate) fn eval_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::SquaredExponential(h) => {
                let r2 = match &h.lengthscales {
                    Lengthscales::Isotropic(l) => sq_dist(a, b) / (l * l),
                    Lengthscales::Ard(ls) => a
                        .iter()
                        .zip(b)
                        .zip(ls)
                        .map(|((x, y), l)| {
                            let d = (x - y) / l;
                            d * d
                        })
                        .sum(),
                };
                h.variance * (-0.5 * r2).exp()
            }
            Kernel::RationalQuadratic(h) => {
                let r2 = sq_dist(a, b);
                let base = 1.0 + r2 / (2.0 * h.alpha * h.lengthscale * h.lengthscale);
                h.variance * base.powf(-h.alpha)
            }
        }
    }

    /// Log-space parameter vector used by the hyperparameter search.
    ///
    /// Layout: `[ln ν², ln l…]` for SE, `[ln ν², ln l, ln α]` for RQ.
    pub fn log_params(&self) -> Vec<f64> {
        match self {
            Kernel::SquaredExponential(h) => {
                let mut p = vec![h.variance.ln()];
                match &h.lengthscales {
                    Lengthscales::Isotropic(l) => p.push(l.ln()),
                    Lengthscales::Ard(ls) => p.extend(ls.iter().map(|l| l.ln())),
                }
                p
            }
            Kernel::RationalQuadratic(h) => {
                vec![h.variance.ln(), h.lengthscale.ln(), h.alpha.ln()]
            }
        }
    }

    pub fn from_log_params(family: KernelFamily, p: &[f64]) -> Kernel {
        let e: Vec<f64> = p.iter().map(|v| v.exp()).collect();
        match family {
            KernelFamily::SquaredExponential => {
                Kernel::SquaredExponential(SeHyper::isotropic(e[0], e[1]))
            }
            KernelFamily::SquaredExponentialArd => {
                Kernel::SquaredExponential(SeHyper::ard(e[0], e[1..].to_vec()))
            }
            KernelFamily::RationalQuadratic => {
                Kernel::RationalQuadratic(RqHyper::new(e[0], e[1], e[2]))
            }
        }
    }
}

impl KernelFamily {
    /// Number of log-space parameters for inputs of dimension `d`.
    pub fn n_params(self, d: usize) -> usize {
        match self {
            KernelFamily::SquaredExponential => 2,
            KernelFamily::SquaredExponentialArd => 1 + d,
            KernelFamily::RationalQuadratic => 3,
        }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pair(xs: &[InputPoint], ys: &[InputPoint], kernel: &Kernel) -> Result<()> {
    kernel.validate()?;
    let dx = common_dim(xs)?;
    let dy = common_dim(ys)?;
    if !xs.is_empty() && !ys.is_empty() && dx != dy {
        return Err(Error::input(format!("dimension mismatch: {dx} vs {dy}")));
    }
    kernel.check_dim(if xs.is_empty() { dy } else { dx })
}

/// Cross-covariance matrix `K(X, Y)` of shape `|X|×|Y|`.
pub fn gram(xs: &[InputPoint], ys: &[InputPoint], kernel: &Kernel) -> Result<DMatrix<f64>> {
    check_pair(xs, ys, kernel)?;
    Ok(gram_raw(xs, ys, kernel))
}

/// Symmetric Gram matrix `K(X, X)`; entries mirrored so symmetry is exact.
pub fn gram_sym(xs: &[InputPoint], kernel: &Kernel) -> Result<DMatrix<f64>> {
    check_pair(xs, xs, kernel)?;
    Ok(gram_sym_raw(xs, kernel))
}

pub(crate) fn gram_raw(xs: &[InputPoint], ys: &[InputPoint], kernel: &Kernel) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
        kernel.eval_raw(xs[i].coords(), ys[j].coords())
    })
}

pub(crate) fn gram_sym_raw(xs: &[InputPoint], kernel: &Kernel) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = kernel.eval_raw(xs[i].coords(), xs[j].coords());
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Low-rank-plus-diagonal FITC covariance `K̂ = Q + diag(K − Q)` with
/// `Q = K_fu K_uu⁻¹ K_uf`.
///
/// Internally `Q = VᵀV` with `V = L_uu⁻¹ K_uf`, where `L_uu` is the jittered
/// Cholesky factor of `K_uu`.
#[derive(Debug, Clone)]
pub struct FitcStructure {
    inducing: Vec<InputPoint>,
    k_fu: DMatrix<f64>,
    k_uu: DMatrix<f64>,
    chol_uu: Cholesky<f64, Dyn>,
    v: DMatrix<f64>,
    diag_correction: DVector<f64>,
    kernel: Kernel,
}

impl FitcStructure {
    pub fn build(xs: &[InputPoint], inducing: &[InputPoint], kernel: &Kernel) -> Result<Self> {
        if inducing.is_empty() {
            return Err(Error::input("FITC needs at least one inducing point"));
        }
        check_pair(xs, inducing, kernel)?;
        let k_fu = gram_raw(xs, inducing, kernel);
        let k_uu = gram_sym_raw(inducing, kernel);
        let (chol_uu, _) = linalg::cholesky_jittered(&k_uu, kernel.variance())?;
        let mut v = k_fu.transpose();
        chol_uu.l_dirty().solve_lower_triangular_mut(&mut v);
        let diag_correction = DVector::from_iterator(
            xs.len(),
            xs.iter().enumerate().map(|(i, x)| {
                let kii = kernel.eval_raw(x.coords(), x.coords());
                kii - v.column(i).norm_squared()
            }),
        );
        Ok(FitcStructure {
            inducing: inducing.to_vec(),
            k_fu,
            k_uu,
            chol_uu,
            v,
            diag_correction,
            kernel: kernel.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.k_fu.nrows()
    }

    pub fn m(&self) -> usize {
        self.inducing.len()
    }

    pub fn inducing(&self) -> &[InputPoint] {
        &self.inducing
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn k_fu(&self) -> &DMatrix<f64> {
        &self.k_fu
    }

    pub fn k_uu(&self) -> &DMatrix<f64> {
        &self.k_uu
    }

    /// `V = L_uu⁻¹ K_uf` (m×n).
    pub fn whitened(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// `diag(K − Q)`.
    pub fn diag_correction(&self) -> &DVector<f64> {
        &self.diag_correction
    }

    /// Diagonal of `K̂`.
    pub fn diag(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            (0..self.n()).map(|i| self.v.column(i).norm_squared() + self.diag_correction[i]),
        )
    }

    /// `L_uu⁻¹ k_u(x)` for a batch of test points (columns).
    pub fn whiten_cross(&self, k_xu: &DMatrix<f64>) -> DMatrix<f64> {
        let mut w = k_xu.transpose();
        self.chol_uu.l_dirty().solve_lower_triangular_mut(&mut w);
        w
    }

    /// `K̂ x` in O(n·m).
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let vx = &self.v * x;
        self.v.tr_mul(&vx) + self.diag_correction.component_mul(x)
    }

    /// `log|K̂ + diag(extra)|` in O(n·m²); `extra` must keep the diagonal part positive.
    pub fn log_det_plus(&self, extra: &DVector<f64>) -> Result<f64> {
        let lam = self.diag_correction.clone() + extra;
        if lam.iter().any(|l| *l <= 0.0) {
            return Err(Error::numerical("FITC diagonal is not positive"));
        }
        let p = self.precision_factor(&lam)?;
        Ok(linalg::log_det(&p) + lam.iter().map(|l| l.ln()).sum::<f64>())
    }

    /// Solves `(K̂ + diag(extra)) x = b` by the Woodbury identity.
    pub fn solve_plus(&self, extra: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        let lam = self.diag_correction.clone() + extra;
        if lam.iter().any(|l| *l <= 0.0) {
            return Err(Error::numerical("FITC diagonal is not positive"));
        }
        let p = self.precision_factor(&lam)?;
        let lb = b.component_div(&lam);
        let t = p.solve(&(&self.v * &lb));
        Ok(lb - self.v.tr_mul(&t).component_div(&lam))
    }

    fn precision_factor(&self, lam: &DVector<f64>) -> Result<Cholesky<f64, Dyn>> {
        let mut scaled = self.v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col /= lam[j].sqrt();
        }
        let p = DMatrix::identity(self.m(), self.m()) + &scaled * scaled.transpose();
        p.cholesky()
            .ok_or_else(|| Error::numerical("FITC inducing precision is not positive definite"))
    }

    /// Dense `Q` (testing and small problems only).
    pub fn q_dense(&self) -> DMatrix<f64> {
        self.v.tr_mul(&self.v)
    }

    /// Dense `K̂` (testing and small problems only).
    pub fn dense(&self) -> DMatrix<f64> {
        let mut q = self.q_dense();
        for i in 0..self.n() {
            q[(i, i)] += self.diag_correction[i];
        }
        q
    }
}

/// Convenience: FITC build from the free-function form.
pub fn fitc_build(xs: &[InputPoint], inducing: &[InputPoint], kernel: &Kernel) -> Result<FitcStructure> {
    FitcStructure::build(xs, inducing, kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(c: &[f64]) -> InputPoint {
        InputPoint::new(c.to_vec()).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<InputPoint> {
        (0..n)
            .map(|_| InputPoint::new((0..d).map(|_| rng.random::<f64>()).collect()).unwrap())
            .collect()
    }

    #[test]
    fn input_point_rejects_out_of_domain() {
        assert!(InputPoint::new(vec![0.5, 1.2]).is_err());
        assert!(InputPoint::new(vec![]).is_err());
        assert!(InputPoint::new(vec![f64::NAN]).is_err());
        assert_eq!(InputPoint::clamped(vec![-0.1, 1.5]).coords(), &[0.0, 1.0]);
    }

    #[test]
    fn se_zero_distance_returns_variance() {
        let h = SeHyper::isotropic(4.0, 0.5);
        let x = p(&[0.3, 0.7]);
        assert_eq!(se_kernel(&x, &x, &h).unwrap(), 4.0);
    }

    #[test]
    fn se_unit_distance() {
        let h = SeHyper::isotropic(1.0, 1.0);
        let v = se_kernel(&p(&[0.0]), &p(&[1.0]), &h).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn rq_values() {
        let x = p(&[0.2, 0.4]);
        assert_eq!(rq_kernel(&x, &x, &RqHyper::new(9.0, 0.3, 2.0)).unwrap(), 9.0);
        // ‖Δ‖² = 2 → (1 + 2/2)^(-1)
        let v = rq_kernel(&p(&[0.0, 0.0]), &p(&[1.0, 1.0]), &RqHyper::new(1.0, 1.0, 1.0)).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rq_approaches_se_for_large_alpha() {
        let (var, l) = (1.7, 0.6);
        let mut worst: f64 = 0.0;
        for i in 0..=200 {
            let r = 2.0 * i as f64 / 200.0;
            let se = var * (-r * r / (2.0 * l * l)).exp();
            let rq = Kernel::RationalQuadratic(RqHyper::new(var, l, 1e6));
            worst = worst.max((rq.eval_raw(&[0.0], &[r]) - se).abs());
        }
        assert!(worst < 1e-3, "sup difference {worst}");
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let h = SeHyper::isotropic(1.0, 1.0);
        assert!(matches!(
            se_kernel(&p(&[0.1]), &p(&[0.1, 0.2]), &h),
            Err(Error::Input(_))
        ));
        let ard = Kernel::SquaredExponential(SeHyper::ard(1.0, vec![1.0, 2.0]));
        assert!(gram(&[p(&[0.1])], &[p(&[0.2])], &ard).is_err());
    }

    #[test]
    fn invalid_hyper_rejected() {
        let h = SeHyper::isotropic(-1.0, 1.0);
        assert!(se_kernel(&p(&[0.1]), &p(&[0.2]), &h).is_err());
        let h = RqHyper::new(1.0, 1.0, f64::INFINITY);
        assert!(rq_kernel(&p(&[0.1]), &p(&[0.2]), &h).is_err());
    }

    #[test]
    fn gram_single_point() {
        let k = Kernel::SquaredExponential(SeHyper::isotropic(2.5, 0.3));
        let g = gram_sym(&[p(&[0.4])], &k).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert_eq!(g[(0, 0)], 2.5);
    }

    #[test]
    fn gram_matches_elementwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = random_points(&mut rng, 4, 3);
        let ys = random_points(&mut rng, 5, 3);
        for k in [
            Kernel::SquaredExponential(SeHyper::ard(1.3, vec![0.2, 0.5, 0.9])),
            Kernel::RationalQuadratic(RqHyper::new(0.7, 0.4, 1.5)),
        ] {
            let g = gram(&xs, &ys, &k).unwrap();
            assert_eq!(g.shape(), (4, 5));
            for i in 0..4 {
                for j in 0..5 {
                    assert_eq!(g[(i, j)], k.eval(&xs[i], &ys[j]).unwrap());
                }
            }
        }
    }

    #[test]
    fn jittered_gram_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = Kernel::SquaredExponential(SeHyper::isotropic(1.0, 0.8));
        let xs = random_points(&mut rng, 3, 2);
        let mut g = gram_sym(&xs, &k).unwrap();
        for i in 0..3 {
            g[(i, i)] += 1e-10;
        }
        let eig = g.symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn fitc_full_inducing_set_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs = random_points(&mut rng, 8, 2);
        let k = Kernel::SquaredExponential(SeHyper::isotropic(1.0, 0.5));
        let f = FitcStructure::build(&xs, &xs, &k).unwrap();
        let exact = gram_sym(&xs, &k).unwrap();
        let diff = (f.dense() - &exact).amax();
        assert!(diff < 1e-10, "max deviation {diff}");
    }

    #[test]
    fn fitc_matches_dense_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs = random_points(&mut rng, 5, 2);
        let xu = random_points(&mut rng, 2, 2);
        let k = Kernel::RationalQuadratic(RqHyper::new(1.4, 0.4, 0.8));
        let f = FitcStructure::build(&xs, &xu, &k).unwrap();

        // Brute force: Q = K_fu (K_uu + jitter)^{-1} K_uf, K̂ = Q + diag(K - Q).
        let kff = gram_sym(&xs, &k).unwrap();
        let kfu = gram(&xs, &xu, &k).unwrap();
        let mut kuu = gram_sym(&xu, &k).unwrap();
        for i in 0..2 {
            kuu[(i, i)] += linalg::JITTER * k.variance();
        }
        let q = &kfu * kuu.try_inverse().unwrap() * kfu.transpose();
        let mut khat = q.clone();
        for i in 0..5 {
            khat[(i, i)] = kff[(i, i)];
        }
        assert!((f.dense() - khat).amax() < 1e-10);

        let x = DVector::from_fn(5, |i, _| (i as f64) - 2.0);
        assert!((f.matvec(&x) - f.dense() * &x).amax() < 1e-10);

        let extra = DVector::from_element(5, 0.3);
        let mut dense = f.dense();
        for i in 0..5 {
            dense[(i, i)] += 0.3;
        }
        let ld = dense.clone().cholesky().unwrap().l().diagonal().map(|v| v.ln()).sum() * 2.0;
        assert!((f.log_det_plus(&extra).unwrap() - ld).abs() < 1e-10);
        let sol = f.solve_plus(&extra, &x).unwrap();
        assert!((dense * sol - x).amax() < 1e-10);
    }

    proptest! {
        #[test]
        fn kernels_symmetric_and_bounded(
            a in proptest::collection::vec(0.0f64..=1.0, 3),
            b in proptest::collection::vec(0.0f64..=1.0, 3),
            var in 0.01f64..100.0,
            l in 0.1f64..10.0,
            alpha in 0.01f64..100.0,
        ) {
            let (a, b) = (p(&a), p(&b));
            for k in [
                Kernel::SquaredExponential(SeHyper::isotropic(var, l)),
                Kernel::RationalQuadratic(RqHyper::new(var, l, alpha)),
            ] {
                let ab = k.eval(&a, &b).unwrap();
                prop_assert_eq!(ab, k.eval(&b, &a).unwrap());
                prop_assert!(ab > 0.0 && ab <= var);
                prop_assert_eq!(k.eval(&a, &a).unwrap(), var);
            }
        }

        #[test]
        fn fitc_diagonal_is_exact(seed in 0u64..1000, n in 2usize..12, m in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs = random_points(&mut rng, n, 2);
            let xu = random_points(&mut rng, m, 2);
            let k = Kernel::SquaredExponential(SeHyper::isotropic(1.0 + rng.random::<f64>(), 0.3));
            let f = FitcStructure::build(&xs, &xu, &k).unwrap();
            for (i, d) in f.diag().iter().enumerate() {
                prop_assert!((d - k.eval(&xs[i], &xs[i]).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn jittered_cholesky_succeeds(seed in 0u64..500, n in 1usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs = random_points(&mut rng, n, 2);
            let k = Kernel::SquaredExponential(SeHyper::isotropic(1.0, 0.2 + 2.0 * rng.random::<f64>()));
            let g = gram_sym(&xs, &k).unwrap();
            prop_assert!(linalg::cholesky_jittered(&g, 1.0).is_ok());
        }
    }
}
