//! The five commands. Each takes the merged config, consumes the keys it
//! knows, rejects the rest and writes its outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gpemu::active::{
    self, classification_data, write_audit, ClassifierAlConfig, PsoSettings, SurfaceAlConfig,
};
use gpemu::classification::{EpSettings, OvrClassifier, OvrHyperSettings};
use gpemu::emulator::{
    learning_curve, propagate as propagate_samples, write_curve, CurveSetup, Strategy, SurfaceHyperSettings,
    SurfaceSettings, TwoStepConfig, TwoStepEmulator,
};
use gpemu::kernels::{InputPoint, Kernel, KernelFamily, RqHyper, SeHyper};
use gpemu::optimize::{HyperBounds, SearchSettings};
use gpemu::regression::SparsePolicy;
use gpemu::simulators::{
    hill_inputs, read_hill_samples, read_points, sample_inputs, write_dataset, PoolSimulator, Sample,
    SamplingScheme, Simulator, Synthetic,
};
use gpemu::Error;

use crate::config::Keys;

type Result<T> = std::result::Result<T, Error>;

/// Process exit code for an error: 2 config or input, 3 I/O, 4 numerical,
/// 5 simulation.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) | Error::Input(_) => 2,
        Error::Io(_) | Error::Ingest { .. } | Error::Json(_) => 3,
        Error::Numerical(_) | Error::Optimization(_) | Error::EmptyDistribution { .. } => 4,
        Error::Simulation { .. } => 5,
        Error::Stage { .. } => 1,
    }
}

/// `synthetic2d`, `synthetic4d`, `synthetic:<D>` or `pool:<path>`.
pub fn simulator(spec: &str) -> Result<Box<dyn Simulator>> {
    match spec {
        "synthetic2d" => Ok(Box::new(Synthetic::new(2)?)),
        "synthetic4d" => Ok(Box::new(Synthetic::new(4)?)),
        s => {
            if let Some(d) = s.strip_prefix("synthetic:") {
                let d: usize = d
                    .parse()
                    .map_err(|_| Error::Config(format!("bad simulator dimension in `{s}`")))?;
                Ok(Box::new(Synthetic::new(d)?))
            } else if let Some(p) = s.strip_prefix("pool:") {
                Ok(Box::new(PoolSimulator::load(Path::new(p))?))
            } else {
                Err(Error::Config(format!("unknown simulator `{s}`")))
            }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// `dir/stem<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn open(path: &str) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{path}: {e}"))))
}

fn tally(samples: &[Sample]) -> [usize; 3] {
    let mut t = [0; 3];
    for s in samples {
        t[(s.result.label() - 1) as usize] += 1;
    }
    t
}

/// Optional `usize` where `none` means no value.
fn threshold(keys: &mut Keys, key: &str, default: Option<usize>) -> Result<Option<usize>> {
    match keys.str(key).as_deref() {
        None => Ok(default),
        Some("none") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{v}`"))),
    }
}

fn sparse(keys: &mut Keys, prefix: &str, default: SparsePolicy, seed: u64) -> Result<SparsePolicy> {
    Ok(SparsePolicy {
        fitc_above: threshold(keys, &format!("{prefix}_fitc_above"), default.fitc_above)?,
        inducing: keys.get_or(&format!("{prefix}_inducing"), default.inducing)?,
        seed,
    })
}

fn search(keys: &mut Keys, prefix: &str, seed: u64) -> Result<SearchSettings> {
    let d = SearchSettings::default();
    Ok(SearchSettings {
        restarts: keys.get_or(&format!("{prefix}_restarts"), d.restarts)?,
        max_evals: keys.get_or(&format!("{prefix}_max_evals"), d.max_evals)?,
        tol: keys.get_or(&format!("{prefix}_tol"), d.tol)?,
        seed,
    })
}

fn pso(keys: &mut Keys, default_swarm: Option<usize>) -> Result<PsoSettings> {
    let d = PsoSettings::default();
    let swarm_size = match default_swarm {
        Some(s) => keys.get_or("swarm_size", s)?,
        None => keys.req("swarm_size")?,
    };
    Ok(PsoSettings {
        swarm_size,
        theta: keys.get_or("theta", d.theta)?,
        inertia: keys.get_or("inertia", d.inertia)?,
        cognitive: keys.get_or("cognitive", d.cognitive)?,
        social: keys.get_or("social", d.social)?,
        v_max: keys.get_or("v_max", d.v_max)?,
        max_iters: keys.get_or("pso_max_iters", d.max_iters)?,
    })
}

struct ClassifierKeys {
    kernels: [Kernel; 3],
    hyper: Option<OvrHyperSettings>,
    sparse: SparsePolicy,
    ep: EpSettings,
}

fn classifier_keys(keys: &mut Keys, dim: usize, seed: u64) -> Result<ClassifierKeys> {
    let base = ClassifierAlConfig::default();
    let family: KernelFamily = keys.get_or("classifier_kernel", KernelFamily::SquaredExponential)?;
    let variance = keys.get_or("classifier_variance", 4.0)?;
    let lengthscale = keys.get_or("classifier_lengthscale", 0.2)?;
    let kernel = match family {
        KernelFamily::SquaredExponential => Kernel::SquaredExponential(SeHyper::isotropic(variance, lengthscale)),
        KernelFamily::SquaredExponentialArd => {
            Kernel::SquaredExponential(SeHyper::ard(variance, vec![lengthscale; dim]))
        }
        KernelFamily::RationalQuadratic => {
            let alpha = keys.get_or("classifier_alpha", 1.0)?;
            Kernel::RationalQuadratic(RqHyper::new(variance, lengthscale, alpha))
        }
    };
    kernel.validate()?;
    let hyper = if keys.flag("optimize_classifier", true)? {
        Some(OvrHyperSettings {
            family,
            bounds: HyperBounds::classifier(),
            search: search(keys, "classifier", seed)?,
            shared: keys.flag("classifier_shared", false)?,
            max_points: threshold(keys, "classifier_max_points", None)?,
        })
    } else {
        None
    };
    let d = EpSettings::default();
    Ok(ClassifierKeys {
        kernels: [kernel.clone(), kernel.clone(), kernel],
        hyper,
        sparse: sparse(keys, "classifier", base.sparse, seed)?,
        ep: EpSettings {
            max_sweeps: keys.get_or("ep_max_sweeps", d.max_sweeps)?,
            tol: keys.get_or("ep_tol", d.tol)?,
        },
    })
}

fn surface_keys(keys: &mut Keys, dim: usize, seed: u64) -> Result<SurfaceSettings> {
    let d = SurfaceSettings::default();
    let family: KernelFamily = keys.get_or("surface_kernel", KernelFamily::RationalQuadratic)?;
    let variance = keys.get_or("surface_variance", 1e4)?;
    let lengthscale = keys.get_or("surface_lengthscale", 0.3)?;
    let kernel = match family {
        KernelFamily::SquaredExponential => Kernel::SquaredExponential(SeHyper::isotropic(variance, lengthscale)),
        KernelFamily::SquaredExponentialArd => {
            Kernel::SquaredExponential(SeHyper::ard(variance, vec![lengthscale; dim]))
        }
        KernelFamily::RationalQuadratic => {
            Kernel::RationalQuadratic(RqHyper::new(variance, lengthscale, keys.get_or("surface_alpha", 1.0)?))
        }
    };
    kernel.validate()?;
    let hyper = if keys.flag("optimize_surface", true)? {
        Some(SurfaceHyperSettings {
            family,
            bounds: HyperBounds::default(),
            search: search(keys, "surface", seed)?,
            optimize_noise: keys.flag("surface_optimize_noise", false)?,
            max_points: threshold(keys, "surface_max_points", None)?,
        })
    } else {
        None
    };
    Ok(SurfaceSettings {
        kernel,
        noise: keys.get("surface_noise")?,
        hyper,
        sparse: sparse(keys, "surface", d.sparse, seed)?,
    })
}

/// Builds the training config from the keys; the budget keys are required.
pub fn two_step_config(keys: &mut Keys, dim: usize) -> Result<TwoStepConfig> {
    let d = TwoStepConfig::default();
    let seed = keys.get_or("seed", 0u64)?;
    let n1 = keys.req("n1")?;
    let rounds = keys.req("rounds")?;
    let pso = pso(keys, None)?;
    let n2 = keys.req("n2")?;
    let c = classifier_keys(keys, dim, seed)?;
    let cfg = TwoStepConfig {
        n1,
        corners: keys.flag("corners", d.corners)?,
        seed,
        rounds,
        pso,
        n2,
        candidates: keys.get_or("candidates", d.candidates)?,
        classifier_kernels: c.kernels,
        classifier_hyper: c.hyper,
        classifier_sparse: c.sparse,
        ep: c.ep,
        surface: surface_keys(keys, dim, seed)?,
        refit_classifier: keys.flag("refit_classifier", d.refit_classifier)?,
        refit_surface: keys.flag("refit_surface", d.refit_surface)?,
        fallback: keys.get("fallback")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn generate(mut keys: Keys) -> Result<()> {
    let sim = simulator(&keys.req_str("simulator")?)?;
    let n: usize = keys.req("n")?;
    let seed = keys.get_or("seed", 0u64)?;
    let scheme: SamplingScheme = keys.get_or("scheme", SamplingScheme::Uniform)?;
    let out = PathBuf::from(keys.req_str("out")?);
    keys.finish()?;
    let xs = sample_inputs(n, sim.dim(), seed, scheme)?;
    let samples = active::simulate(sim.as_ref(), &xs)?;
    let mut w = create(&out)?;
    write_dataset(&mut w, &samples)?;
    w.flush()?;
    let t = tally(&samples);
    println!(
        "wrote {} rows to {}: region 1 = {}, region 2 = {}, region 3 = {}",
        samples.len(),
        out.display(),
        t[0],
        t[1],
        t[2]
    );
    Ok(())
}

pub fn train(mut keys: Keys, dry_run: bool) -> Result<()> {
    let sim = simulator(&keys.req_str("simulator")?)?;
    let out = PathBuf::from(keys.req_str("out")?);
    let cfg = two_step_config(&mut keys, sim.dim())?;
    keys.finish()?;
    let b = cfg.budget(sim.dim());
    println!(
        "budget: initial {} + classifier rounds {} + surface rounds {} = {}",
        b.initial,
        b.classifier_rounds,
        b.surface_rounds,
        b.total()
    );
    if dry_run {
        return Ok(());
    }
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("output path `{}` has no file name", out.display())))?
        .to_string();
    let mut log = Vec::new();
    let result = gpemu::emulator::train_two_step_logged(sim.as_ref(), &cfg, &mut log);
    std::fs::create_dir_all(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir })?;
    let mut w = create(&dir.join(format!("{stem}_audit.csv")))?;
    write_audit(&mut w, &log)?;
    w.flush()?;
    let em = result?;
    let manifest = em.save(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir }, &stem)?;
    let used = em.budget();
    println!(
        "simulator calls: initial {} + classifier rounds {} + surface rounds {} = {}",
        used.initial,
        used.classifier_rounds,
        used.surface_rounds,
        used.total()
    );
    println!(
        "classifier points {}, surface points {}; manifest {}",
        em.classifier_samples().len(),
        em.surface_data().len(),
        manifest.display()
    );
    Ok(())
}

fn load_model(keys: &mut Keys) -> Result<TwoStepEmulator> {
    TwoStepEmulator::load(Path::new(&keys.req_str("model")?))
}

fn optional_simulator(keys: &mut Keys, dim: usize) -> Result<Option<Box<dyn Simulator>>> {
    match keys.str("simulator") {
        None => Ok(None),
        Some(s) => {
            let sim = simulator(&s)?;
            if sim.dim() != dim {
                return Err(Error::Input(format!(
                    "simulator has dimension {}, model expects {dim}",
                    sim.dim()
                )));
            }
            Ok(Some(sim))
        }
    }
}

fn check_points(xs: &[InputPoint], dim: usize) -> Result<()> {
    match xs.first() {
        Some(x) if x.dim() != dim => Err(Error::Input(format!(
            "inputs have dimension {}, model expects {dim}",
            x.dim()
        ))),
        _ => Ok(()),
    }
}

pub fn predict(mut keys: Keys) -> Result<()> {
    let em = load_model(&mut keys)?;
    let inputs = keys.req_str("inputs")?;
    let out = PathBuf::from(keys.req_str("out")?);
    let fallback: Option<f64> = keys.get("fallback")?;
    let sim = optional_simulator(&mut keys, em.dim())?;
    keys.finish()?;
    let xs = read_points(open(&inputs)?, &inputs)?;
    check_points(&xs, em.dim())?;
    let preds = em.predict(&xs, fallback, sim.as_deref())?;

    let mut w = csv::Writer::from_writer(create(&out)?);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    let mut header: Vec<String> = (1..=em.dim()).map(|i| format!("R_{i}")).collect();
    header.extend(
        ["label", "prob_1", "prob_2", "prob_3", "certainty", "mean", "variance", "fallback"].map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for (x, p) in xs.iter().zip(&preds) {
        let mut row: Vec<String> = x.coords().iter().map(|c| format!("{c}")).collect();
        row.push(p.label.to_string());
        row.extend(p.probs.iter().map(|q| format!("{q}")));
        row.push(format!("{}", p.certainty));
        match p.prediction {
            Some(g) => {
                row.push(format!("{}", g.mean));
                row.push(format!("{}", g.variance));
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        row.push(u8::from(p.fallback).to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    let n_fallback = preds.iter().filter(|p| p.fallback).count();
    println!("wrote {} predictions to {} ({n_fallback} from the simulator)", preds.len(), out.display());
    Ok(())
}

pub fn propagate(mut keys: Keys) -> Result<()> {
    let em = load_model(&mut keys)?;
    let out = PathBuf::from(keys.req_str("out")?);
    let fallback: Option<f64> = keys.get("fallback")?;
    let sim = optional_simulator(&mut keys, em.dim())?;
    let samples = keys.str("samples");
    let hill = keys.str("hill");
    let xs = match (samples, hill) {
        (Some(p), None) => {
            keys.finish()?;
            read_points(open(&p)?, &p)?
        }
        (None, Some(p)) => {
            let concentration: f64 = keys.req("concentration")?;
            let channel: usize = keys.get_or("channel", 1)?;
            let other: f64 = keys.get_or("other", 1.0)?;
            keys.finish()?;
            if channel == 0 {
                return Err(Error::Config("channel is 1-based".into()));
            }
            let hs = read_hill_samples(open(&p)?, &p)?;
            hill_inputs(&hs, concentration, em.dim(), channel - 1, other)?
        }
        _ => return Err(Error::Config("give exactly one of `samples` or `hill`".into())),
    };
    check_points(&xs, em.dim())?;
    let prop = propagate_samples(&em, &xs, fallback, sim.as_deref())?;
    let mut w = create(&out)?;
    prop.distribution.write_csv(&mut w)?;
    w.flush()?;
    let tally_path = sibling(&out, "_tally.csv");
    let mut w = create(&tally_path)?;
    writeln!(w, "region,count")?;
    for (k, n) in prop.tally.iter().enumerate() {
        writeln!(w, "{},{n}", k + 1)?;
    }
    writeln!(w, "fallback,{}", prop.fallback)?;
    w.flush()?;
    println!(
        "propagated {} samples: region 1 = {}, region 2 = {}, region 3 = {}; N_AP = {}; mean {:.4} ms",
        xs.len(),
        prop.tally[0],
        prop.tally[1],
        prop.tally[2],
        prop.n_ap(),
        prop.distribution.mean()
    );
    Ok(())
}

fn test_set(sim: &dyn Simulator, n: usize, seed: u64) -> Result<Vec<Sample>> {
    match sim.pool() {
        Some(pool) => {
            let xs: Vec<InputPoint> = pool.into_iter().take(n).collect();
            active::simulate(sim, &xs)
        }
        None => active::simulate(sim, &sample_inputs(n, sim.dim(), seed, SamplingScheme::Uniform)?),
    }
}

pub fn benchmark(mut keys: Keys) -> Result<()> {
    let sim = simulator(&keys.req_str("simulator")?)?;
    let dim = sim.dim();
    let out = PathBuf::from(keys.req_str("out")?);
    let seed = keys.get_or("seed", 0u64)?;
    let strategies: Vec<Strategy> = keys.list("strategies")?.unwrap_or_else(|| {
        vec![
            Strategy::RandomClassifier,
            Strategy::ActiveClassifier,
            Strategy::RandomSurface,
            Strategy::ActiveSurface,
        ]
    });
    let budgets: Vec<usize> = keys
        .list("budgets")?
        .ok_or_else(|| Error::Config("missing required key `budgets`".into()))?;
    let repeats = keys.get_or("repeats", 10usize)?;
    let test_n = keys.get_or("test_n", 20_000usize)?;
    let test_seed = keys.get_or("test_seed", seed.wrapping_add(1_000_003))?;
    let n1 = keys.get_or("n1", 10usize)?;
    let pso = pso(&mut keys, Some(10))?;
    let c = classifier_keys(&mut keys, dim, seed)?;
    let surface_n1 = keys.get_or("surface_n1", 11usize)?;
    let candidates = keys.get_or("candidates", 10_000usize)?;
    let surface_settings = surface_keys(&mut keys, dim, seed)?;
    let filter_n = keys.get_or("filter_n", 500usize)?;
    let swarm_sizes: Option<Vec<usize>> = keys.list("swarm_sizes")?;
    let swarm_budget: Option<usize> = keys.get("swarm_budget")?;
    keys.finish()?;

    let test = test_set(sim.as_ref(), test_n, test_seed)?;
    let classifier = ClassifierAlConfig {
        n1,
        rounds: 0,
        pso,
        seed,
        corners: false,
        kernels: c.kernels,
        hyper: c.hyper,
        sparse: c.sparse,
        ep: c.ep,
    };
    classifier.validate()?;
    let filter = if strategies.iter().any(|s| s.is_surface()) {
        let cfg = ClassifierAlConfig {
            n1: filter_n,
            ..classifier.clone()
        };
        let initial = active::initial_design(sim.as_ref(), filter_n, seed.wrapping_add(7_919), false)?;
        let data = classification_data(&initial)?;
        let kernels = active::classifier_kernels(&data, &cfg)?;
        Some(OvrClassifier::fit(&data, &kernels, &cfg.sparse.mode_for(data.len()), cfg.ep)?)
    } else {
        None
    };
    let setup = CurveSetup {
        sim: sim.as_ref(),
        test: &test,
        classifier: classifier.clone(),
        surface_n1,
        surface: SurfaceAlConfig {
            rounds: 0,
            candidates,
            seed,
        },
        surface_settings,
        filter: filter.as_ref(),
    };
    let mut rows = Vec::new();
    for s in &strategies {
        rows.extend(learning_curve(*s, &budgets, repeats, seed, &setup)?);
    }
    let mut w = create(&out)?;
    write_curve(&mut w, &rows)?;
    w.flush()?;
    for r in &rows {
        println!("{} budget {}: {:.4} ± {:.4}", r.strategy, r.budget, r.mean, r.std);
    }

    if let Some(sizes) = swarm_sizes {
        let budget = swarm_budget.unwrap_or_else(|| budgets.iter().copied().max().unwrap_or(0));
        let xs: Vec<InputPoint> = test.iter().map(|s| s.x.clone()).collect();
        let path = sibling(&out, "_swarm.csv");
        let mut w = create(&path)?;
        writeln!(w, "swarm_size,rounds,budget,boundary_error,cap_hits,wall_time_s")?;
        for size in sizes {
            let cfg = ClassifierAlConfig {
                rounds: budget.saturating_sub(n1).div_ceil(size.max(1)),
                pso: PsoSettings {
                    swarm_size: size,
                    ..classifier.pso.clone()
                },
                ..classifier.clone()
            };
            cfg.validate()?;
            let start = Instant::now();
            let run = active::active_learn_classifier(sim.as_ref(), &cfg)?;
            let secs = start.elapsed().as_secs_f64();
            let labels: Vec<u8> = run.classifier.predict(&xs)?.into_iter().map(|p| p.label).collect();
            let err = gpemu::emulator::misclassification_rate(&test, &labels)?;
            writeln!(
                w,
                "{size},{},{},{err},{},{secs:.3}",
                cfg.rounds,
                run.samples.len(),
                run.cap_hits
            )?;
            println!("swarm {size}: {} rounds, boundary error {err:.4}%, {secs:.1} s", cfg.rounds);
        }
        w.flush()?;
    }
    Ok(())
}

