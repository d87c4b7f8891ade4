//! Acceptance run: one pass/fail line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,3,9` runs a subset; `ACCEPTANCE_STRICT=1` turns any
//! failing criterion into a nonzero exit.

use bcsac_cli::config::{AblationAxis, AblateConfig, ExperimentConfig};
use bcsac_cli::pipeline::{self, EvalTarget, ReportRow};
use bcsac_core::dynamics::{forward_step, inverse_action, Action, EgoState, VehicleGeometry, ACCEL_MAX, ACCEL_MIN, STEER_LIMIT};
use bcsac_core::envsim::{reward_from_distances, PreparedScenario, RewardConfig, RewardMode, OBS_DIM};
use bcsac_core::learners::{stream_rng, DemoDataset, TrainConfig, DEMO_STREAM, INIT_STREAM};
use bcsac_core::neural::losses::{actor_loss, critic_loss, cross_entropy, nll_loss};
use bcsac_core::neural::{
    clamp_unit, observation_batch, standard_normal, unit_batch, Adam, CriticPair, GaussianPolicy, Mlp, NetworkBundle,
};
use bcsac_core::runtime::{run_training, Method, RunConfig};
use bcsac_core::scenario::{generate_scenario, Bucket, Template};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (u8, &'static str, fn() -> Outcome);

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c1_round_trip() -> Outcome {
    let start = Instant::now();
    let g = VehicleGeometry::default();
    let dt = 1.0 / 15.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s = EgoState::new(
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(-PI..PI),
            rng.random_range(0.5..30.0),
        );
        let a = Action::new(
            rng.random_range(-0.99 * STEER_LIMIT..0.99 * STEER_LIMIT),
            rng.random_range(0.99 * ACCEL_MIN..0.99 * ACCEL_MAX),
        );
        let next = forward_step(&s, &a, &g, dt)?;
        let sol = inverse_action(&s, &next, &g, dt)?;
        worst = worst.max((sol.action.steer - a.steer).abs()).max((sol.action.accel - a.accel).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst < 1e-3 && secs < 10.0, format!("max component error {worst:.2e}, {secs:.2} s")))
}

/// Largest relative error between `grad` and central differences of `loss`.
fn fd_error(params: &Mlp, grad: &Mlp, loss: impl Fn(&Mlp) -> f64) -> f64 {
    let h = 1e-5;
    let analytic: Vec<f64> = grad.params().collect();
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-8);
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let mut p = params.clone();
        *p.params_mut().nth(k).unwrap() += h;
        let up = loss(&p);
        *p.params_mut().nth(k).unwrap() -= 2.0 * h;
        let down = loss(&p);
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-2 * scale));
    }
    worst
}

fn c2_gradients() -> Outcome {
    let start = Instant::now();
    let obs_dim = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Array2::from_shape_fn((8, obs_dim), |_| rng.random_range(-1.5..1.5));
    let policy = GaussianPolicy { net: Mlp::new(&[obs_dim, 12, 12, 4], 1.0, &mut rng) };
    let critics = CriticPair::new(obs_dim, &[12, 12], &mut rng);
    let zero = critics.q1.zeros_like();
    let eps = standard_normal(8, &mut rng);
    let mut errors = BTreeMap::new();
    let mut sizes = vec![policy.net.num_params(), critics.q1.num_params()];

    let r = actor_loss(&policy, &zero, &zero, &x, &eps, 1.0);
    errors.insert("log-prob", fd_error(&policy.net, &r.grad, |p| {
        actor_loss(&GaussianPolicy { net: p.clone() }, &zero, &zero, &x, &eps, 1.0).loss
    }));
    let xa = ndarray::concatenate(ndarray::Axis(1), &[x.view(), Array2::from_shape_fn((8, 2), |_| rng.random_range(-0.9..0.9)).view()])?;
    let target = Array1::from_shape_fn(8, |_| rng.random_range(-3.0..1.0));
    for (name, q) in [("critic q1", &critics.q1), ("critic q2", &critics.q2)] {
        let (_, g) = critic_loss(q, &xa, &target);
        errors.insert(name, fd_error(q, &g, |p| critic_loss(p, &xa, &target).0));
    }
    let y = Array2::from_shape_fn((8, 2), |_| rng.random_range(-0.95..0.95));
    let (_, g) = nll_loss(&policy, &x, &y);
    errors.insert("imitation nll", fd_error(&policy.net, &g, |p| nll_loss(&GaussianPolicy { net: p.clone() }, &x, &y).0));
    let bc = Mlp::new(&[obs_dim, 10, 40], 1.0, &mut rng);
    sizes.push(bc.num_params());
    let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..40)).collect();
    let (_, g) = cross_entropy(&bc, &x, &labels);
    errors.insert("bc cross-entropy", fd_error(&bc, &g, |p| cross_entropy(p, &x, &labels).0));

    let worst = errors.values().copied().fold(0.0, f64::max);
    let max_params = *sizes.iter().max().unwrap();
    let secs = start.elapsed().as_secs_f64();
    let detail: Vec<String> = errors.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Ok((
        worst < 1e-4 && max_params <= 1000 && secs < 60.0,
        format!("{} (largest net {max_params} params, {secs:.2} s)", detail.join(", ")),
    ))
}

fn c3_rewards() -> Outcome {
    let dense = RewardConfig::default();
    let binary = RewardConfig { mode: RewardMode::Binary, ..dense };
    let cases: [(&str, f64, f64); 9] = [
        ("collision d=3", reward_from_distances(Some(3.0), -5.0, 0.0, &dense).r_collision, 0.0),
        ("collision d=0.4", reward_from_distances(Some(0.4), -5.0, 0.0, &dense).r_collision, -0.6),
        ("off-road at edge", reward_from_distances(None, 0.0, 0.0, &dense).r_offroad, -1.0),
        ("off-road floor", reward_from_distances(None, 3.0, 0.0, &dense).r_offroad, -2.0),
        ("off-road inside", reward_from_distances(None, -5.0, 0.0, &dense).r_offroad, 0.0),
        ("dense sum", reward_from_distances(Some(0.4), 0.0, 0.0, &dense).total, -1.6),
        ("binary collision", reward_from_distances(Some(0.0), -3.0, 0.0, &binary).total, -1.0),
        ("binary off-road", reward_from_distances(Some(5.0), 0.2, 0.0, &binary).total, -1.0),
        ("binary clean", reward_from_distances(Some(0.3), -0.2, 0.0, &binary).total, 0.0),
    ];
    let wrong: Vec<String> = cases.iter().filter(|c| c.1 != c.2).map(|c| format!("{}: {} != {}", c.0, c.1, c.2)).collect();
    Ok((wrong.is_empty(), if wrong.is_empty() { "9 of 9 exact".into() } else { wrong.join("; ") }))
}

fn small_suite(n: usize) -> Vec<Arc<PreparedScenario>> {
    (0..n)
        .map(|i| {
            let t = Template::ALL[i % Template::ALL.len()];
            PreparedScenario::new(generate_scenario(t, 500 + i as u64, 0, &format!("acc{i}")).unwrap())
        })
        .collect()
}

fn small_run(method: Method, budget: u64, train: TrainConfig) -> RunConfig {
    RunConfig { method, step_budget: budget, seed: 11, workers: 1, train, ..RunConfig::default() }
}

fn small_train() -> TrainConfig {
    TrainConfig {
        hidden: vec![16, 16],
        warmup: 256,
        replay_capacity: 20_000,
        rl_batch_size: 32,
        bc_batch_size: 64,
        ..TrainConfig::default()
    }
}

fn c4_degenerate_weights() -> Outcome {
    let preps = small_suite(5);
    let demos = Arc::new(DemoDataset::from_scenarios(&preps)?);
    let zero = TrainConfig { lambda: 0.0, ..small_train() };
    let sac = run_training(&small_run(Method::Sac, 1600, zero.clone()), &preps, &demos)?;
    let bcsac = run_training(&small_run(Method::BcSac, 1600, zero), &preps, &demos)?;
    let same = serde_json::to_string(&sac.bundle)? == serde_json::to_string(&bcsac.bundle)?;

    // RL disabled: the trained actor must equal a plain loop of Gaussian
    // likelihood steps with the same initialization and demo draws.
    let train = TrainConfig { rl_enabled: false, lambda: 1.0, ..small_train() };
    let steps = 300;
    let run = small_run(Method::BcSac, steps, train.clone());
    let out = run_training(&run, &preps, &demos)?;
    let NetworkBundle::Continuous { actor, .. } = &out.bundle else {
        return Ok((false, "RL-disabled run did not produce a continuous actor".into()));
    };
    let mut oracle = GaussianPolicy::new(OBS_DIM, &train.hidden, &mut stream_rng(run.seed, INIT_STREAM));
    let mut opt = Adam::new(&oracle.net, train.actor_lr);
    let mut rng = stream_rng(run.seed, DEMO_STREAM);
    for _ in 0..steps {
        let batch = demos.sample(train.bc_batch_size, &mut rng)?;
        let obs = observation_batch(batch.iter().map(|d| &d.obs));
        let y = unit_batch(batch.iter().map(|d| &d.action)).mapv(clamp_unit);
        let (_, grad) = nll_loss(&oracle, &obs, &y);
        opt.step_with_lr(&mut oracle.net, &grad, train.imitation_lr);
    }
    let matches = actor.net == oracle.net;
    Ok((
        same && matches && out.counters.env_steps == 0,
        format!(
            "lambda=0 vs SAC bitwise {}, RL-disabled vs continuous BC bitwise {}, env steps {}",
            same, matches, out.counters.env_steps
        ),
    ))
}

fn c5_replay_accounting() -> Outcome {
    let preps = small_suite(10);
    let demos = Arc::new(DemoDataset::from_scenarios(&preps)?);
    let train = TrainConfig { replay_capacity: 100_000, warmup: 2000, ..small_train() };
    let out = run_training(&small_run(Method::BcSac, 50_000, train), &preps, &demos)?;
    let c = out.counters;
    let ratio = c.sample_to_insert();
    let ok = (ratio - 8.0).abs() / 8.0 <= 0.05 && c.rl_steps == 8 * c.il_steps && c.rl_steps == 50_000;
    Ok((ok, format!("sample-to-insert {ratio:.3}, RL {} : IL {}", c.rl_steps, c.il_steps)))
}

/// The shared experiment for criteria 6 to 8.
struct Experiment {
    cfg: ExperimentConfig,
    auroc: Option<f64>,
    rows: BTreeMap<Method, Vec<ReportRow>>,
}

fn row(rows: &[ReportRow], bucket: Bucket) -> &ReportRow {
    rows.iter().find(|r| r.eval_bucket == bucket).expect("bucket evaluated")
}

fn failures(r: &ReportRow) -> Vec<f64> {
    r.per_seed.iter().map(|m| m.failure_rate).collect()
}

fn experiment(dir: &Path) -> Result<Experiment, Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig {
        out_dir: dir.to_path_buf(),
        eval_buckets: vec![Bucket::Top10, Bucket::All],
        eval_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..ExperimentConfig::default()
    };
    let g = pipeline::generate(&cfg)?;
    println!("  suite: {} train / {} test scenarios, seeds {:?}, budget {}", g.train, g.test, cfg.seeds, cfg.step_budget);
    let score = pipeline::score(&cfg)?;
    let mut rows = BTreeMap::new();
    for method in Method::ALL {
        let t = Instant::now();
        pipeline::train_method(&cfg, method)?;
        rows.insert(method, pipeline::eval(&cfg, EvalTarget::Trained(method))?);
        println!("  {method}: trained and evaluated in {:.0} s", t.elapsed().as_secs_f64());
    }
    Ok(Experiment { cfg, auroc: score.auroc, rows })
}

fn c6_main_result(e: &Experiment) -> Outcome {
    let (bc, sac, bcsac) = (&e.rows[&Method::Bc], &e.rows[&Method::Sac], &e.rows[&Method::BcSac]);
    let fail_bcsac = median(failures(row(bcsac, Bucket::Top10)));
    let fail_bc = median(failures(row(bc, Bucket::Top10)));
    let prog_bcsac = row(bcsac, Bucket::All).progress_ratio.mean;
    let prog_sac = row(sac, Bucket::All).progress_ratio.mean;
    let l1_bcsac = row(bcsac, Bucket::All).action_l1.mean;
    let l1_sac = row(sac, Bucket::All).action_l1.mean;
    let (a, b, c) = (fail_bcsac < fail_bc, prog_bcsac - prog_sac >= 10.0, l1_bcsac < l1_sac);
    Ok((
        a && b && c,
        format!(
            "(a) top10 failure median BC-SAC {fail_bcsac:.1} vs BC {fail_bc:.1} [{}]; \
             (b) progress BC-SAC {prog_bcsac:.1} vs SAC {prog_sac:.1} [{}]; \
             (c) action L1 BC-SAC {l1_bcsac:.3} vs SAC {l1_sac:.3} [{}]",
            pass(a),
            pass(b),
            pass(c)
        ),
    ))
}

fn c7_ablations(e: &Experiment) -> Outcome {
    let sweep = |axis: AblationAxis, points: Vec<f64>| -> Result<BTreeMap<String, f64>, Box<dyn std::error::Error>> {
        let cfg = ExperimentConfig {
            eval_buckets: vec![Bucket::All],
            ablate: AblateConfig { axes: vec![axis], points },
            ..e.cfg.clone()
        };
        Ok(pipeline::ablate(&cfg)?.into_iter().map(|a| (a.label, median(failures(&a.row)))).collect())
    };
    let modes = sweep(AblationAxis::RewardMode, Vec::new())?;
    let weights = sweep(AblationAxis::CollisionWeight, vec![0.0, 1.0, 2.0])?;
    let (dense, binary) = (modes["dense"], modes["binary"]);
    let (off_only, balanced, coll_only) = (weights["0.0000"], weights["1.0000"], weights["2.0000"]);
    let a = dense <= binary;
    let b = coll_only > balanced && off_only > balanced;
    Ok((
        a && b,
        format!(
            "failure medians: dense {dense:.1} vs binary {binary:.1} [{}]; \
             collision-only {coll_only:.1}, off-road-only {off_only:.1} vs balanced {balanced:.1} [{}]",
            pass(a),
            pass(b)
        ),
    ))
}

fn c8_difficulty(e: &Experiment) -> Outcome {
    let bc = &e.rows[&Method::Bc];
    let (top10, all) = (row(bc, Bucket::Top10).failure_rate.mean, row(bc, Bucket::All).failure_rate.mean);
    let a = e.auroc.is_some_and(|v| v > 0.7);
    let b = top10 >= all;
    let auroc = e.auroc.map_or("undefined".to_string(), |v| format!("{v:.3}"));
    Ok((
        a && b,
        format!("held-out AUROC {auroc} [{}]; BC failure top10 {top10:.1} vs all {all:.1} [{}]", pass(a), pass(b)),
    ))
}

fn csv_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn c9_determinism() -> Outcome {
    let run = |dir: &Path| -> Result<(), Box<dyn std::error::Error>> {
        let mut cfg = ExperimentConfig {
            out_dir: dir.to_path_buf(),
            scenarios_per_template: 4,
            probe_budget: 200,
            step_budget: 400,
            seeds: vec![0, 1],
            eval_buckets: vec![Bucket::Top10, Bucket::All],
            ablate: AblateConfig { axes: vec![AblationAxis::RewardMode], points: Vec::new() },
            ..ExperimentConfig::default()
        };
        cfg.train = TrainConfig { hidden: vec![16, 16], warmup: 128, rl_batch_size: 32, bc_batch_size: 64, ..cfg.train };
        pipeline::generate(&cfg)?;
        pipeline::demos(&cfg)?;
        pipeline::score(&cfg)?;
        for m in Method::ALL {
            pipeline::train_method(&cfg, m)?;
            pipeline::eval(&cfg, EvalTarget::Trained(m))?;
        }
        pipeline::eval(&cfg, EvalTarget::Expert)?;
        pipeline::ablate(&cfg)?;
        pipeline::report(&cfg)?;
        Ok(())
    };
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    run(a.path())?;
    run(b.path())?;
    let files = csv_files(a.path());
    let same_list = files == csv_files(b.path());
    let differing: Vec<String> = files
        .iter()
        .filter(|f| fs::read(a.path().join(f)).ok() != fs::read(b.path().join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    Ok((
        same_list && differing.is_empty() && !files.is_empty(),
        if differing.is_empty() { format!("{} CSV files byte-identical", files.len()) } else { format!("differ: {}", differing.join(", ")) },
    ))
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn main() {
    let only: Option<Vec<u8>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |n: u8| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut results: Vec<(u8, bool)> = Vec::new();
    let mut report = |n: u8, name: &str, start: Instant, outcome: Outcome| {
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("criterion {n} {name}: {} ({:.1} s) {detail}", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
        results.push((n, ok));
    };

    let simple: [Criterion; 5] = [
        (1, "dynamics round-trip", c1_round_trip),
        (2, "gradient oracle", c2_gradients),
        (3, "reward table", c3_rewards),
        (4, "degenerate weights", c4_degenerate_weights),
        (5, "replay accounting", c5_replay_accounting),
    ];
    for (n, name, f) in simple {
        if wanted(n) {
            let t = Instant::now();
            report(n, name, t, f());
        }
    }

    if wanted(6) || wanted(7) || wanted(8) {
        let t = Instant::now();
        let dir = tempfile::tempdir().expect("temp dir");
        match experiment(dir.path()) {
            Ok(e) => {
                if wanted(6) {
                    report(6, "main result", t, c6_main_result(&e));
                }
                if wanted(8) {
                    report(8, "difficulty pipeline", t, c8_difficulty(&e));
                }
                if wanted(7) {
                    let t7 = Instant::now();
                    report(7, "ablations", t7, c7_ablations(&e));
                }
            }
            Err(err) => {
                for (n, name) in [(6, "main result"), (7, "ablations"), (8, "difficulty pipeline")] {
                    if wanted(n) {
                        report(n, name, t, Err(err.to_string().into()));
                    }
                }
            }
        }
    }
    if wanted(9) {
        let t = Instant::now();
        report(9, "determinism", t, c9_determinism());
    }

    results.sort();
    let passed = results.iter().filter(|r| r.1).count();
    let failed: Vec<String> = results.iter().filter(|r| !r.1).map(|r| r.0.to_string()).collect();
    println!("acceptance: {passed}/{} criteria passed{}", results.len(), if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(", ")) });
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
