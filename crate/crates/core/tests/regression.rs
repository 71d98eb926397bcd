mod oracle;

use gpemu::kernels::{InputPoint, Kernel, KernelFamily, RqHyper, SeHyper};
use gpemu::optimize::{HyperBounds, SearchSettings};
use gpemu::regression::{optimize_hyper, GpRegressor, InducingSet, Mode, RegressionDataset};
use nalgebra::{DMatrix, DVector};
use oracle::{dense_regression, OracleKernel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(xs: &[Vec<f64>]) -> Vec<InputPoint> {
    xs.iter().map(|x| InputPoint::new(x.clone()).unwrap()).collect()
}

fn kernels(var: f64, l: f64, alpha: f64, rq: bool) -> (Kernel, OracleKernel) {
    if rq {
        (
            Kernel::RationalQuadratic(RqHyper::new(var, l, alpha)),
            OracleKernel::Rq {
                variance: var,
                lengthscale: l,
                alpha,
            },
        )
    } else {
        (
            Kernel::SquaredExponential(SeHyper::isotropic(var, l)),
            OracleKernel::Se {
                variance: var,
                lengthscale: l,
            },
        )
    }
}

#[test]
fn three_point_1d_matches_dense_inverse() {
    let xs = vec![vec![0.1], vec![0.45], vec![0.9]];
    let ys = [1.0, -0.5, 2.0];
    let (k, ok) = kernels(1.5, 0.3, 1.0, false);
    let data = RegressionDataset::new(points(&xs), ys.to_vec()).unwrap();
    let m = GpRegressor::fit(&data, k, 1e-4, Mode::Exact).unwrap();
    let test: Vec<Vec<f64>> = (0..5).map(|i| vec![0.2 * i as f64 + 0.05]).collect();
    let o = dense_regression(&xs, &ys, ok, 1e-4 + m.jitter(), &test);
    for (p, (mu, v)) in m.predict_latent(&points(&test)).unwrap().iter().zip(o.means.iter().zip(&o.variances)) {
        assert!((p.mean - mu).abs() < 1e-8);
        assert!((p.variance - v).abs() < 1e-8);
    }
}

#[test]
fn six_point_log_marginal_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random(), rng.random()]).collect();
    let ys: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (k, ok) = kernels(2.0, 0.4, 0.7, true);
    let m = GpRegressor::fit(&RegressionDataset::new(points(&xs), ys.clone()).unwrap(), k, 0.05, Mode::Exact).unwrap();
    let o = dense_regression(&xs, &ys, ok, 0.05 + m.jitter(), &[]);
    assert!((m.log_marginal() - o.log_marginal).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_instances_match_dense_oracle(
        seed in 0u64..10_000,
        n in 1usize..=20,
        d in 1usize..=4,
        rq in any::<bool>(),
        var in 0.3f64..5.0,
        l in 0.15f64..1.5,
        alpha in 0.3f64..4.0,
        noise in 1e-3f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let test: Vec<Vec<f64>> = (0..20).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
        let (k, ok) = kernels(var, l, alpha, rq);
        let m = GpRegressor::fit(&RegressionDataset::new(points(&xs), ys.clone()).unwrap(), k, noise, Mode::Exact).unwrap();
        let o = dense_regression(&xs, &ys, ok, noise + m.jitter(), &test);
        let pred = m.predict(&points(&test)).unwrap();
        for (j, p) in pred.iter().enumerate() {
            prop_assert!((p.mean - o.means[j]).abs() < 1e-8);
            prop_assert!((p.variance - (o.variances[j] + noise)).abs() < 1e-8);
        }
        prop_assert!((m.log_marginal() - o.log_marginal).abs() < 1e-8);
        let means = m.predict_mean(&points(&test)).unwrap();
        for (a, p) in means.iter().zip(&pred) {
            prop_assert!((a - p.mean).abs() < 1e-12);
        }
    }

    #[test]
    fn fitc_with_training_inputs_is_exact(seed in 0u64..1000, rq in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random(), rng.random()]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (4.0 * x[0]).cos() * x[1]).collect();
        let (k, _) = kernels(1.0, 0.3, 1.0, rq);
        let data = RegressionDataset::new(points(&xs), ys).unwrap();
        let exact = GpRegressor::fit(&data, k.clone(), 1e-2, Mode::Exact).unwrap();
        let fitc = GpRegressor::fit(&data, k, 1e-2, Mode::Fitc(InducingSet::Points(points(&xs)))).unwrap();
        let test: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random(), rng.random()]).collect();
        for (a, b) in exact.predict(&points(&test)).unwrap().iter().zip(fitc.predict(&points(&test)).unwrap()) {
            prop_assert!((a.mean - b.mean).abs() < 1e-6);
            prop_assert!((a.variance - b.variance).abs() < 1e-6);
        }
    }
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| {
        let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

#[test]
fn lengthscale_recovered_from_gp_draws() {
    let truth = 0.2;
    let ok = OracleKernel::Se {
        variance: 1.0,
        lengthscale: truth,
    };
    let mut hits = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random()]).collect();
        let k = ok.gram(&xs, &xs) + DMatrix::identity(40, 40) * 1e-6;
        let f = k.cholesky().unwrap().l() * standard_normals(&mut rng, 40);
        let data = RegressionDataset::new(points(&xs), f.as_slice().to_vec()).unwrap();
        let init = Kernel::SquaredExponential(SeHyper::isotropic(1.0, 1.0));
        let fit = optimize_hyper(
            &data,
            KernelFamily::SquaredExponential,
            &init,
            1e-6,
            &HyperBounds::default(),
            &SearchSettings {
                seed,
                ..SearchSettings::default()
            },
            false,
            &Mode::Exact,
        )
        .unwrap();
        let Kernel::SquaredExponential(h) = fit.kernel else { unreachable!() };
        let l = match h.lengthscales {
            gpemu::kernels::Lengthscales::Isotropic(l) => l,
            gpemu::kernels::Lengthscales::Ard(v) => v[0],
        };
        if (truth / 2.0..=truth * 2.0).contains(&l) {
            hits += 1;
        }
    }
    assert!(hits >= 8, "recovered in {hits}/10 seeds");
}

#[test]
fn zero_targets_drive_signal_variance_to_its_bound() {
    let xs: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 14.0]).collect();
    let data = RegressionDataset::new(points(&xs), vec![0.0; 15]).unwrap();
    let bounds = HyperBounds::default();
    let fit = optimize_hyper(
        &data,
        KernelFamily::SquaredExponential,
        &Kernel::SquaredExponential(SeHyper::isotropic(1.0, 0.3)),
        0.1,
        &bounds,
        &SearchSettings::default(),
        true,
        &Mode::Exact,
    )
    .unwrap();
    assert!(fit.kernel.variance() <= 10.0 * bounds.variance.0, "variance {}", fit.kernel.variance());
}
