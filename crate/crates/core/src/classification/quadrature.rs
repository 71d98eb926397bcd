//! Gauss–Hermite rules and the tilted moments of the logistic likelihood.

use std::sync::OnceLock;

use crate::linalg::{log_sigmoid, LN_2PI};

/// Nodes used for every site moment computation.
pub const NODES: usize = 64;

/// Gauss–Hermite rule for the weight `e^{−x²}`: nodes and `ln` weights.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes an `n`-point rule by Newton iteration on the Hermite recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        GaussHermite {
            nodes,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
        }
    }

    /// The shared 64-node rule.
    pub fn standard() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(NODES))
    }
}

/// Gauss–Laguerre rule for the weight `e^{−u}` on `[0, ∞)`: nodes and weights.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLaguerre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut z = 0.0f64;
        for i in 0..n {
            z = match i {
                0 => 3.0 / (1.0 + 2.4 * nf),
                1 => z + 15.0 / (1.0 + 2.5 * nf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
                }
            };
            let mut pp = 0.0;
            let mut p2 = 0.0;
            for _ in 0..200 {
                let (mut p1, mut q2) = (1.0, 0.0);
                for j in 0..n {
                    let p3 = q2;
                    q2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0 - z) * q2 - jf * p3) / (jf + 1.0);
                }
                p2 = q2;
                pp = (nf * p1 - nf * p2) / z;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs() {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = -1.0 / (pp * nf * p2);
        }
        GaussLaguerre { nodes, weights }
    }

    pub fn standard() -> &'static GaussLaguerre {
        static RULE: OnceLock<GaussLaguerre> = OnceLock::new();
        RULE.get_or_init(|| GaussLaguerre::new(NODES))
    }
}

/// Cavities broader than this use the step/Laguerre split.
const BROAD_SD: f64 = 2.0;

/// Zeroth to second moments of `σ(t·g)·N(g | μ, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedMoments {
    pub log_z: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Tilted moments of the logistic likelihood with label `t = ±1` against a
/// Gaussian cavity `N(μ, v)`.
///
/// Narrow cavities use a 64-node Gauss–Hermite rule centred on the mode of the
/// tilted density and scaled by its curvature, summed in log space. For broad
/// cavities the sigmoid is split into a unit step, whose Gaussian moments are
/// closed-form, and a remainder decaying like `e^{−|g|}`, integrated by
/// Gauss–Laguerre.
pub fn logistic_tilted(t: f64, mu: f64, v: f64) -> TiltedMoments {
    if v.sqrt() > BROAD_SD {
        if let Some(m) = split_moments(t * mu, v) {
            return TiltedMoments {
                log_z: m.log_z,
                mean: t * m.mean,
                variance: m.variance,
            };
        }
    }
    hermite_moments(t, mu, v)
}

/// Moments of `σ(g)·N(g | μ, v)` as step part plus Laguerre remainder.
fn split_moments(mu: f64, v: f64) -> Option<TiltedMoments> {
    let sd = v.sqrt();
    let a = mu / sd;
    let (cdf, pdf) = (crate::linalg::norm_cdf(a), (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt());
    // E[g^k 1{g>0}] for k = 0, 1, 2.
    let p0 = cdf;
    let p1 = mu * cdf + sd * pdf;
    let p2 = (mu * mu + v) * cdf + mu * sd * pdf;
    // σ(g) − 1{g>0} = sgn(−g)·ρ(|g|), ρ(u) = e^{−u}/(1+e^{−u}).
    let rule = GaussLaguerre::standard();
    let dens = |x: f64| (-0.5 * (x - mu) * (x - mu) / v).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
    for (u, w) in rule.nodes.iter().zip(&rule.weights) {
        let c = w / (1.0 + (-u).exp());
        let (neg, pos) = (dens(-u), dens(*u));
        i0 += c * (neg - pos);
        i1 += c * (-u * neg - u * pos);
        i2 += c * (u * u * (neg - pos));
    }
    let z = p0 + i0;
    if !(z > 1e-200 && z.is_finite()) {
        return None;
    }
    let mean = (p1 + i1) / z;
    let variance = (p2 + i2) / z - mean * mean;
    (variance > 0.0).then_some(TiltedMoments {
        log_z: z.ln(),
        mean,
        variance,
    })
}

fn hermite_moments(t: f64, mu: f64, v: f64) -> TiltedMoments {
    let rule = GaussHermite::standard();
    let sd = v.sqrt();
    let log_density = |g: f64| log_sigmoid(t * g) - 0.5 * (g - mu).powi(2) / v - 0.5 * (LN_2PI + v.ln());

    // The mode lies between μ and μ + t·v; bracketed Newton on the score.
    let score = |g: f64| {
        let s = (-t * g).exp().recip();
        let sig_neg = 1.0 / (1.0 + s); // σ(−t g)
        (t * sig_neg - (g - mu) / v, sig_neg * (1.0 - sig_neg) + 1.0 / v)
    };
    let (mut lo, mut hi) = if t > 0.0 { (mu, mu + v) } else { (mu - v, mu) };
    let mut g = mu;
    for _ in 0..100 {
        let (d1, neg_d2) = score(g);
        if d1 > 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        let mut next = g + d1 / neg_d2;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - g).abs() <= 1e-13 * (1.0 + g.abs()) {
            g = next;
            break;
        }
        g = next;
    }
    let s = score(g).1.recip().sqrt().min(sd);

    let scale = std::f64::consts::SQRT_2 * s;
    let mut terms = [0.0; NODES];
    let mut points = [0.0; NODES];
    let mut max = f64::NEG_INFINITY;
    for i in 0..NODES {
        let x = rule.nodes[i];
        let gi = g + scale * x;
        points[i] = gi;
        terms[i] = rule.log_weights[i] + x * x + log_density(gi);
        max = max.max(terms[i]);
    }
    let mut sum = 0.0;
    let mut m1 = 0.0;
    for i in 0..NODES {
        let w = (terms[i] - max).exp();
        sum += w;
        m1 += w * points[i];
    }
    let mean = m1 / sum;
    let mut m2 = 0.0;
    for i in 0..NODES {
        m2 += (terms[i] - max).exp() * (points[i] - mean).powi(2);
    }
    TiltedMoments {
        log_z: max + sum.ln() + scale.ln(),
        mean,
        variance: m2 / sum,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laguerre_rule_integrates_polynomials() {
        let r = GaussLaguerre::new(NODES);
        let m = |k: i32| r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-12);
        assert!((m(1) - 1.0).abs() < 1e-12);
        assert!((m(3) - 6.0).abs() < 1e-10);
    }

    #[test]
    fn rule_integrates_polynomials() {
        let r = GaussHermite::new(NODES);
        let w: Vec<f64> = r.log_weights.iter().map(|l| l.exp()).collect();
        let sp = std::f64::consts::PI.sqrt();
        let m0: f64 = w.iter().sum();
        let m2: f64 = w.iter().zip(&r.nodes).map(|(w, x)| w * x * x).sum();
        let m4: f64 = w.iter().zip(&r.nodes).map(|(w, x)| w * x.powi(4)).sum();
        assert!((m0 - sp).abs() < 1e-12);
        assert!((m2 - sp / 2.0).abs() < 1e-12);
        assert!((m4 - 0.75 * sp).abs() < 1e-11);
        let mut sorted = r.nodes.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted.windows(2).all(|p| p[1] > p[0]));
    }

    /// Tilted moments by a dense trapezoid rule over ±12 cavity deviations.
    fn brute(t: f64, mu: f64, v: f64) -> (f64, f64, f64) {
        let sd = v.sqrt();
        let n = 400_000;
        let (a, b) = (mu - 12.0 * sd, mu + 12.0 * sd);
        let h = (b - a) / n as f64;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let g = a + h * i as f64;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let f = w * (1.0 / (1.0 + (-t * g).exp()))
                * (-(g - mu).powi(2) / (2.0 * v)).exp()
                / (2.0 * std::f64::consts::PI * v).sqrt();
            z += f;
            m1 += f * g;
            m2 += f * g * g;
        }
        z *= h;
        m1 *= h;
        m2 *= h;
        let mean = m1 / z;
        (z, mean, m2 / z - mean * mean)
    }

    #[test]
    fn narrow_cavities_are_near_exact() {
        for &(t, mu, v) in &[(1.0, 0.0, 1.0), (-1.0, 0.3, 0.01), (1.0, -2.0, 4.0)] {
            let q = logistic_tilted(t, mu, v);
            let (z, m, var) = brute(t, mu, v);
            assert!((q.log_z.exp() - z).abs() < 1e-10);
            assert!((q.mean - m).abs() < 1e-10);
            assert!((q.variance - var).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_dense_quadrature() {
        for &(t, mu, v) in &[
            (1.0, 0.0, 1.0),
            (-1.0, 0.3, 0.01),
            (1.0, -2.0, 4.0),
            (1.0, 3.0, 25.0),
            (-1.0, 5.0, 400.0),
            (1.0, -10.0, 2500.0),
            (1.0, 0.0, 1e4),
            (-1.0, 1.0, 4.5),
            (1.0, -30.0, 9.0),
        ] {
            let q = logistic_tilted(t, mu, v);
            let (z, m, var) = brute(t, mu, v);
            assert!((q.log_z.exp() - z).abs() < 1e-8 * z, "Z {t} {mu} {v}: {} vs {z}", q.log_z.exp());
            assert!((q.mean - m).abs() < 1e-7 * (1.0 + v.sqrt()), "mean {t} {mu} {v}: {} vs {m}", q.mean);
            assert!((q.variance - var).abs() < 1e-7 * (1.0 + v), "var {t} {mu} {v}: {} vs {var}", q.variance);
        }
    }

    #[test]
    fn label_flip_mirrors_moments() {
        for v in [2.0, 30.0] {
            let a = logistic_tilted(1.0, 0.7, v);
            let b = logistic_tilted(-1.0, -0.7, v);
            assert!((a.log_z - b.log_z).abs() < 1e-12);
            assert!((a.mean + b.mean).abs() < 1e-12);
            assert!((a.variance - b.variance).abs() < 1e-12);
        }
    }

    #[test]
    fn both_routes_agree_near_the_switch() {
        for mu in [-3.0, 0.0, 2.0] {
            let v = 4.2;
            let a = hermite_moments(1.0, mu, v);
            let b = split_moments(mu, v).unwrap();
            assert!((a.log_z - b.log_z).abs() < 1e-6);
            assert!((a.mean - b.mean).abs() < 1e-6);
            assert!((a.variance - b.variance).abs() < 1e-5);
        }
    }
}
