mod oracle;

use std::time::Instant;

use gpemu::classification::{
    optimize_hyper_classifier, BinaryDataset, BinaryGpClassifier, ClassificationDataset, EpSettings, OvrClassifier,
};
use gpemu::kernels::{InputPoint, Kernel, KernelFamily, RqHyper, SeHyper};
use gpemu::optimize::{HyperBounds, SearchSettings};
use gpemu::regression::Mode;
use oracle::{DenseEp, OracleKernel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(xs: &[Vec<f64>]) -> Vec<InputPoint> {
    xs.iter().map(|x| InputPoint::new(x.clone()).unwrap()).collect()
}

fn tight() -> EpSettings {
    EpSettings {
        max_sweeps: 1000,
        tol: 1e-12,
    }
}

fn instance(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
    let mut ys: Vec<f64> = xs
        .iter()
        .map(|x| if x[0] + 0.3 * rng.random::<f64>() > 0.65 { 1.0 } else { -1.0 })
        .collect();
    ys[0] = 1.0;
    ys[1] = -1.0;
    (xs, ys)
}

fn dataset(xs: &[Vec<f64>], ys: &[f64]) -> BinaryDataset {
    BinaryDataset::new(points(xs), ys.iter().map(|&y| y as i8).collect()).unwrap()
}

#[test]
fn five_train_ten_test_matches_dense_ep() {
    let (xs, ys) = instance(5, 5, 2);
    let test: Vec<Vec<f64>> = instance(55, 10, 2).0;
    let k = Kernel::SquaredExponential(SeHyper::isotropic(3.0, 0.4));
    let ok = OracleKernel::Se {
        variance: 3.0,
        lengthscale: 0.4,
    };
    let c = BinaryGpClassifier::fit(&dataset(&xs, &ys), k, Mode::Exact, tight()).unwrap();
    let o = DenseEp::fit(&xs, &ys, ok);
    for (p, q) in c.predict_prob(&points(&test)).unwrap().iter().zip(o.probs(&test)) {
        assert!((p - q).abs() < 1e-8, "{p} vs {q}");
    }
    for (a, (m, v)) in c.predict_latent(&points(&test)).unwrap().iter().zip(o.latent(&test)) {
        assert!((a.mean - m).abs() < 1e-8);
        assert!((a.variance - v).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn log_evidence_matches_dense_ep(seed in 0u64..10_000, n in 2usize..=8, rq in any::<bool>(), var in 0.5f64..10.0, l in 0.2f64..1.0) {
        let (xs, ys) = instance(seed, n, 2);
        let (k, ok) = if rq {
            (Kernel::RationalQuadratic(RqHyper::new(var, l, 1.5)), OracleKernel::Rq { variance: var, lengthscale: l, alpha: 1.5 })
        } else {
            (Kernel::SquaredExponential(SeHyper::isotropic(var, l)), OracleKernel::Se { variance: var, lengthscale: l })
        };
        let c = BinaryGpClassifier::fit(&dataset(&xs, &ys), k, Mode::Exact, tight()).unwrap();
        let o = DenseEp::fit(&xs, &ys, ok);
        prop_assert!((c.log_marginal() - o.log_z).abs() < 1e-6, "{} vs {}", c.log_marginal(), o.log_z);
        for (a, b) in c.state().tau.iter().zip(o.tau.iter()) {
            prop_assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn label_flip_mirrors_probabilities(seed in 0u64..10_000, n in 2usize..=15) {
        let (xs, ys) = instance(seed, n, 3);
        let k = Kernel::SquaredExponential(SeHyper::isotropic(4.0, 0.3));
        let d = dataset(&xs, &ys);
        let test = points(&instance(seed + 1, 20, 3).0);
        let a = BinaryGpClassifier::fit(&d, k.clone(), Mode::Exact, tight()).unwrap();
        let b = BinaryGpClassifier::fit(&d.flipped(), k, Mode::Exact, tight()).unwrap();
        for (p, q) in a.predict_prob(&test).unwrap().iter().zip(b.predict_prob(&test).unwrap()) {
            prop_assert!((p + q - 1.0).abs() < 1e-6);
        }
    }
}

fn blobs(seed: u64, per_class: usize) -> ClassificationDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: [[f64; 2]; 3] = [[0.2, 0.2], [0.8, 0.3], [0.5, 0.85]];
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * 3 {
        let c = centers[i % 3];
        let p = vec![
            (c[0] + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0),
            (c[1] + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0),
        ];
        xs.push(InputPoint::new(p).unwrap());
        labels.push((i % 3) as u8 + 1);
    }
    ClassificationDataset::new(xs, labels).unwrap()
}

fn se3() -> [Kernel; 3] {
    let k = Kernel::SquaredExponential(SeHyper::isotropic(4.0, 0.2));
    [k.clone(), k.clone(), k]
}

#[test]
fn separable_blobs_are_classified() {
    let clf = OvrClassifier::fit(&blobs(1, 20), &se3(), &Mode::Exact, EpSettings::default()).unwrap();
    let test = blobs(2, 100);
    let preds = clf.predict(test.inputs()).unwrap();
    let right = preds.iter().zip(test.labels()).filter(|(p, l)| p.label == **l).count();
    assert!(right as f64 >= 0.95 * test.len() as f64, "{right}/{}", test.len());
    assert!(preds.iter().all(|p| p.probs.iter().all(|q| *q > 0.0 && *q < 1.0)));
}

#[test]
fn relabeling_permutes_probabilities() {
    let data = blobs(3, 10);
    let perm = [2u8, 3, 1];
    let relabeled = ClassificationDataset::new(
        data.inputs().to_vec(),
        data.labels().iter().map(|l| perm[(*l - 1) as usize]).collect(),
    )
    .unwrap();
    let a = OvrClassifier::fit(&data, &se3(), &Mode::Exact, EpSettings::default()).unwrap();
    let b = OvrClassifier::fit(&relabeled, &se3(), &Mode::Exact, EpSettings::default()).unwrap();
    let test = blobs(4, 5);
    for (p, q) in a.predict(test.inputs()).unwrap().iter().zip(b.predict(test.inputs()).unwrap()) {
        for k in 0..3 {
            assert!((p.probs[k] - q.probs[(perm[k] - 1) as usize]).abs() < 1e-12);
        }
    }
}

#[test]
fn ovr_task_equals_manual_binary_fit() {
    let data = blobs(5, 8);
    let clf = OvrClassifier::fit(&data, &se3(), &Mode::Exact, EpSettings::default()).unwrap();
    let manual = BinaryDataset::new(
        data.inputs().to_vec(),
        data.labels().iter().map(|&l| if l == 2 { 1 } else { -1 }).collect(),
    )
    .unwrap();
    let b = BinaryGpClassifier::fit(&manual, se3()[1].clone(), Mode::Exact, EpSettings::default()).unwrap();
    assert_eq!(clf.task(2).state(), b.state());
    assert_eq!(clf.task(2).log_marginal().to_bits(), b.log_marginal().to_bits());
}

#[test]
fn tuned_hyperparameters_beat_a_misscaled_start() {
    let mut wins = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let make = |rng: &mut ChaCha8Rng, n: usize| {
            let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
            let ys: Vec<f64> = xs.iter().map(|x| if x[0] > 0.5 { 1.0 } else { -1.0 }).collect();
            (xs, ys)
        };
        let (xs, mut ys) = make(&mut rng, 30);
        ys[0] = -ys[1];
        let train = dataset(&xs, &ys);
        let (tx, ty) = make(&mut rng, 200);
        let bad = Kernel::SquaredExponential(SeHyper::isotropic(1.0, 20.0));
        let fit = optimize_hyper_classifier(
            &train,
            KernelFamily::SquaredExponential,
            &bad,
            &HyperBounds::classifier(),
            &SearchSettings {
                restarts: 3,
                max_evals: 150,
                seed,
                ..SearchSettings::default()
            },
            &Mode::Exact,
            EpSettings::default(),
        )
        .unwrap();
        let acc = |k: Kernel| {
            let c = BinaryGpClassifier::fit(&train, k, Mode::Exact, EpSettings::default()).unwrap();
            let p = c.predict_prob(&points(&tx)).unwrap();
            p.iter().zip(&ty).filter(|(p, y)| (**p > 0.5) == (**y > 0.0)).count()
        };
        if acc(fit.kernel) >= acc(bad) {
            wins += 1;
        }
    }
    assert!(wins >= 6, "{wins}/10");
}

#[test]
fn ep_runtime_grows_roughly_cubically() {
    let k = Kernel::SquaredExponential(SeHyper::isotropic(2.0, 0.3));
    let settings = EpSettings {
        max_sweeps: 5,
        tol: 0.0,
    };
    let mut logs = Vec::new();
    for n in [50usize, 100, 200] {
        let (xs, ys) = instance(n as u64, n, 2);
        let d = dataset(&xs, &ys);
        let reps = (20_000 / n).max(3);
        let start = Instant::now();
        for _ in 0..reps {
            BinaryGpClassifier::fit(&d, k.clone(), Mode::Exact, settings).unwrap();
        }
        let t = start.elapsed().as_secs_f64() / reps as f64;
        logs.push(((n as f64).ln(), t.ln()));
    }
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((2.0..=4.0).contains(&slope), "log-log slope {slope}");
}
