use gpemu::active::PsoSettings;
use gpemu::emulator::{
    boundary_error, propagate, surface_error, train_two_step, Exact, Lut, Manifest, SurfaceSettings, TwoStepConfig,
    TwoStepEmulator,
};
use gpemu::simulators::{
    hill_inputs, sample_inputs, HillSample, PoolSimulator, SamplingScheme, Simulator, Synthetic,
};
use gpemu::Error;

fn small(seed: u64) -> TwoStepConfig {
    TwoStepConfig {
        n1: 60,
        rounds: 3,
        pso: PsoSettings {
            swarm_size: 10,
            ..PsoSettings::default()
        },
        n2: 20,
        candidates: 2000,
        seed,
        classifier_hyper: None,
        surface: SurfaceSettings {
            hyper: None,
            ..SurfaceSettings::default()
        },
        refit_classifier: false,
        refit_surface: false,
        ..TwoStepConfig::default()
    }
}

#[test]
fn budget_matches_simulator_calls() {
    let sim = Synthetic::new(2).unwrap();
    let cfg = small(1);
    let em = train_two_step(&sim, &cfg).unwrap();
    assert_eq!(em.budget(), cfg.budget(2));
    assert_eq!(em.classifier_samples().len(), 90);
    let full = TwoStepConfig::default();
    assert_eq!(full.budget(4).total(), 5000);
}

#[test]
fn save_and_load_reproduce_predictions() {
    let sim = Synthetic::new(2).unwrap();
    let em = train_two_step(&sim, &small(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = em.save(dir.path(), "m").unwrap();
    let back = TwoStepEmulator::load(&path).unwrap();
    let xs = sample_inputs(300, 2, 5, SamplingScheme::Uniform).unwrap();
    assert_eq!(em.predict(&xs, None, None).unwrap(), back.predict(&xs, None, None).unwrap());
    let text = std::fs::read_to_string(&path).unwrap();
    let m = Manifest::parse(&text).unwrap();
    assert_eq!(m.dim, 2);
    assert!(Manifest::parse(&text.replacen("\"dim\"", "\"dimension\"", 1)).is_err());
}

#[test]
fn fallback_flags_exactly_the_uncertain_points() {
    let sim = Synthetic::new(2).unwrap();
    let em = train_two_step(&sim, &small(3)).unwrap();
    let xs = sample_inputs(1000, 2, 6, SamplingScheme::Uniform).unwrap();
    let plain = em.predict(&xs, None, None).unwrap();
    let fb = em.predict(&xs, Some(0.8), Some(&sim)).unwrap();
    for ((p, q), x) in plain.iter().zip(&fb).zip(&xs) {
        assert_eq!(q.fallback, p.certainty < 0.8);
        if q.fallback {
            let truth = sim.evaluate(x).unwrap();
            assert_eq!(q.label, truth.label());
            assert_eq!(q.prediction.map(|g| (g.mean, g.variance)), truth.value().map(|y| (y, 0.0)));
        } else {
            assert_eq!(p, q);
        }
    }
    assert!(matches!(em.predict(&xs, Some(0.8), None), Err(Error::Config(_))));
}

#[test]
fn pool_simulator_drives_the_pipeline() {
    let sim = Synthetic::new(2).unwrap();
    let samples = sim.evaluate_all(&sample_inputs(3000, 2, 8, SamplingScheme::Uniform).unwrap()).unwrap();
    let pool = PoolSimulator::from_samples(samples.clone()).unwrap();
    let em = train_two_step(&pool, &small(4)).unwrap();
    assert!(em
        .classifier_samples()
        .iter()
        .all(|s| pool.evaluate(&s.x).unwrap() == s.result));
    let test = &samples[..500];
    assert!(boundary_error(&em, test).unwrap() < 50.0);
}

#[test]
fn propagation_of_hill_samples() {
    let sim = Synthetic::new(2).unwrap();
    let em = train_two_step(&sim, &small(5)).unwrap();
    let hs: Vec<HillSample> = (0..200)
        .map(|i| HillSample {
            pic50: 5.0 + i as f64 / 200.0,
            hill: 1.0,
        })
        .collect();
    let xs = hill_inputs(&hs, 3.0, 2, 0, 1.0).unwrap();
    match propagate(&em, &xs, None, None) {
        Ok(p) => {
            assert_eq!(p.tally.iter().sum::<usize>(), 200);
            assert!((p.distribution.masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        Err(Error::EmptyDistribution { tally }) => assert_eq!(tally.iter().sum::<usize>(), 200),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn lut_and_exact_reference_errors() {
    let sim = Synthetic::new(2).unwrap();
    let test = sim.evaluate_all(&sample_inputs(2000, 2, 9, SamplingScheme::Uniform).unwrap()).unwrap();
    assert_eq!(boundary_error(&Exact(&sim), &test).unwrap(), 0.0);
    assert_eq!(surface_error(&Exact(&sim), &test).unwrap(), 0.0);
    let coarse = Lut::fit(&sim, 10).unwrap();
    let fine = Lut::fit(&sim, 40).unwrap();
    assert!(boundary_error(&fine, &test).unwrap() < boundary_error(&coarse, &test).unwrap());
    assert!(surface_error(&fine, &test).unwrap() < surface_error(&coarse, &test).unwrap());
}
