//! The experiment stages behind each command.

use crate::config::{AblationPoint, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::layout::*;
use bcsac_core::difficulty::{auroc, fit_difficulty_model, label_from, scenario_features, write_scores, DifficultyModel, ScoreRecord};
use bcsac_core::dynamics::Action;
use bcsac_core::envsim::{failure_rate, route_progress_ratio, PreparedScenario, RewardConfig};
use bcsac_core::learners::{demo_records, read_demos, write_demos, DemoDataset, DemoRecord, ProgressRecord};
use bcsac_core::neural::{load_checkpoint, save_checkpoint, DiscreteActionTable, NetworkBundle};
use bcsac_core::runtime::{evaluate, evaluate_expert, run_training, EvalEpisode, Method, RunConfig, RunCounters, Trainer};
use bcsac_core::scenario::{generate_suite, load_scenarios, save_scenarios, split_dataset, Bucket, DatasetSplit, Template};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Scenarios and the train/test split, as written by `generate` (and `score`).
pub struct Data {
    pub preps: BTreeMap<String, Arc<PreparedScenario>>,
    pub split: DatasetSplit,
}

fn require(path: &Path, what: &'static str, hint: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing { what, path: path.display().to_string(), hint })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(fs::File::create(&tmp)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    drop(w);
    fs::rename(tmp, path)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}

impl Data {
    pub fn load(layout: &Layout) -> Result<Self> {
        let hint = "run `bcsac generate` first";
        require(&layout.scenarios(), "scenario file", hint)?;
        require(&layout.split(), "split file", hint)?;
        let preps = load_scenarios(layout.scenarios())?
            .into_iter()
            .map(|s| (s.id.clone(), PreparedScenario::new(s)))
            .collect();
        Ok(Self { preps, split: read_json(&layout.split())? })
    }

    pub fn select(&self, ids: &[String]) -> Result<Vec<Arc<PreparedScenario>>> {
        ids.iter()
            .map(|id| {
                self.preps.get(id).cloned().ok_or_else(|| CliError::Config(format!("split refers to unknown scenario {id}")))
            })
            .collect()
    }

    fn bucket_ids(&self, bucket: Bucket, test: bool) -> Result<Vec<String>> {
        if bucket != Bucket::All && self.split.scores.is_empty() {
            return Err(CliError::Missing {
                what: "difficulty scores",
                path: "split.json".into(),
                hint: "run `bcsac score` before using top-k buckets",
            });
        }
        Ok(if test { self.split.bucket_test(bucket)? } else { self.split.bucket_train(bucket)? })
    }

    pub fn train_ids(&self, bucket: Bucket) -> Result<Vec<String>> {
        self.bucket_ids(bucket, false)
    }

    pub fn test_ids(&self, bucket: Bucket) -> Result<Vec<String>> {
        self.bucket_ids(bucket, true)
    }
}

pub fn load_demo_records(layout: &Layout) -> Result<Vec<DemoRecord>> {
    require(&layout.demos(), "demo file", "run `bcsac generate` or `bcsac demos` first")?;
    Ok(read_demos(BufReader::new(fs::File::open(layout.demos())?))?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoSummary {
    pub transitions: usize,
    pub infeasible: usize,
    pub infeasible_fraction: f64,
    /// (template, infeasible, transitions)
    pub per_template: Vec<(Template, usize, usize)>,
}

fn demo_summary(preps: &[Arc<PreparedScenario>], records: &[DemoRecord]) -> DemoSummary {
    let template: BTreeMap<&str, Template> = preps.iter().map(|p| (p.scenario.id.as_str(), p.scenario.tags.template)).collect();
    let mut per: BTreeMap<Template, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = per.entry(template[r.scenario_id.as_str()]).or_default();
        e.0 += r.infeasible as usize;
        e.1 += 1;
    }
    let infeasible = records.iter().filter(|r| r.infeasible).count();
    DemoSummary {
        transitions: records.len(),
        infeasible,
        infeasible_fraction: if records.is_empty() { 0.0 } else { infeasible as f64 / records.len() as f64 },
        per_template: per.into_iter().map(|(t, (i, n))| (t, i, n)).collect(),
    }
}

fn write_demo_file(layout: &Layout, preps: &[Arc<PreparedScenario>]) -> Result<DemoSummary> {
    let records = demo_records(preps)?;
    let tmp = layout.demos().with_extension("tmp");
    write_demos(BufWriter::new(fs::File::create(&tmp)?), &records)?;
    fs::rename(tmp, layout.demos())?;
    Ok(demo_summary(preps, &records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub scenarios: usize,
    pub per_template: Vec<(Template, usize)>,
    pub train: usize,
    pub test: usize,
    pub demos: DemoSummary,
}

/// Writes the scenario suite, its family-level split, and expert demos.
pub fn generate(cfg: &ExperimentConfig) -> Result<GenerateSummary> {
    let layout = Layout::new(&cfg.out_dir);
    fs::create_dir_all(&layout.root)?;
    let mix: BTreeMap<Template, usize> = Template::ALL.iter().map(|&t| (t, cfg.scenarios_per_template)).collect();
    let suite = generate_suite(&mix, cfg.seed)?;
    let split = split_dataset(&suite, cfg.test_fraction, cfg.seed)?;
    save_scenarios(layout.scenarios(), &suite)?;
    write_json(&layout.split(), &split)?;
    let preps: Vec<_> = suite.iter().cloned().map(PreparedScenario::new).collect();
    let demos = write_demo_file(&layout, &preps)?;
    Ok(GenerateSummary {
        scenarios: suite.len(),
        per_template: mix.into_iter().collect(),
        train: split.train.len(),
        test: split.test.len(),
        demos,
    })
}

/// Recomputes the demo file from the scenario file.
pub fn demos(cfg: &ExperimentConfig) -> Result<DemoSummary> {
    let layout = Layout::new(&cfg.out_dir);
    let data = Data::load(&layout)?;
    let preps: Vec<_> = data.preps.values().cloned().collect();
    write_demo_file(&layout, &preps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub train_labels: usize,
    pub train_positives: usize,
    pub test_labels: usize,
    pub test_positives: usize,
    /// Held-out AUROC; absent when the test labels have a single class.
    pub auroc: Option<f64>,
    pub model: DifficultyModel,
}

/// Trains the behavior-cloning probe, labels every scenario by resimulation,
/// fits the difficulty model on training labels, and scores all scenarios.
pub fn score(cfg: &ExperimentConfig) -> Result<ScoreSummary> {
    let layout = Layout::new(&cfg.out_dir);
    let mut data = Data::load(&layout)?;
    let records = load_demo_records(&layout)?;
    let train = data.select(&data.split.train)?;
    let test = data.select(&data.split.test)?;
    let probe = RunConfig { method: Method::Bc, step_budget: cfg.probe_budget, ..cfg.run_config(Method::Bc, cfg.seed) };
    let (bundle, _) = train_run(&probe, Bucket::All, &train, &records, &layout.probe(), cfg.checkpoint_interval)?;

    let label = |preps: &[Arc<PreparedScenario>]| -> Result<Vec<bool>> {
        let episodes = evaluate(&bundle, preps, &RewardConfig::default(), cfg.eval_threads)?;
        Ok(episodes
            .iter()
            .map(|e| label_from(&e.result.scenario_id, e.result.collision, e.result.min_separation).positive)
            .collect())
    };
    let train_labels = label(&train)?;
    let test_labels = label(&test)?;
    let features = |preps: &[Arc<PreparedScenario>]| -> Vec<Vec<f64>> {
        preps.iter().map(|p| scenario_features(&p.scenario).to_vec()).collect()
    };
    let model = fit_difficulty_model(&features(&train), &train_labels)?;
    let test_scores: Vec<f64> = test.iter().map(|p| model.score(&p.scenario)).collect();

    let labels: BTreeMap<&str, bool> = train
        .iter()
        .zip(&train_labels)
        .chain(test.iter().zip(&test_labels))
        .map(|(p, &l)| (p.scenario.id.as_str(), l))
        .collect();
    let mut records_out = Vec::with_capacity(data.preps.len());
    let mut scores = BTreeMap::new();
    for (id, prep) in &data.preps {
        let score = model.score(&prep.scenario);
        scores.insert(id.clone(), score);
        records_out.push(ScoreRecord { scenario_id: id.clone(), score, label: labels.get(id.as_str()).copied() });
    }
    data.split.scores = scores;
    let tmp = layout.scores().with_extension("tmp");
    write_scores(BufWriter::new(fs::File::create(&tmp)?), &records_out)?;
    fs::rename(tmp, layout.scores())?;
    write_json(&layout.split(), &data.split)?;
    write_json(&layout.difficulty_model(), &model)?;
    Ok(ScoreSummary {
        train_labels: train_labels.len(),
        train_positives: train_labels.iter().filter(|&&l| l).count(),
        test_labels: test_labels.len(),
        test_positives: test_labels.iter().filter(|&&l| l).count(),
        auroc: auroc(&test_scores, &test_labels),
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunRecord {
    run: RunConfig,
    train_bucket: Bucket,
    train_scenarios: Vec<String>,
    counters: Option<RunCounters>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub method: Method,
    pub bucket: Bucket,
    pub seed: u64,
    pub dir: PathBuf,
    pub counters: RunCounters,
    /// A finished run with the same configuration was found and reused.
    pub cached: bool,
    pub resumed: bool,
}

fn write_progress(path: &Path, progress: &[ProgressRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "critic_loss", "actor_loss", "il_loss", "entropy", "replay_ratio"])?;
    for p in progress {
        w.write_record([
            p.step.to_string(),
            format!("{:.6}", p.critic_loss),
            format!("{:.6}", p.actor_loss),
            format!("{:.6}", p.il_loss),
            format!("{:.6}", p.entropy),
            format!("{:.4}", p.replay_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains (or resumes, or reuses) one run in `dir`.
pub fn train_run(
    run: &RunConfig,
    bucket: Bucket,
    preps: &[Arc<PreparedScenario>],
    records: &[DemoRecord],
    dir: &Path,
    checkpoint_interval: u64,
) -> Result<(NetworkBundle, TrainOutcome)> {
    let mut record = RunRecord {
        run: run.clone(),
        train_bucket: bucket,
        train_scenarios: preps.iter().map(|p| p.scenario.id.clone()).collect(),
        counters: None,
    };
    let outcome = |counters, cached, resumed| TrainOutcome {
        method: run.method,
        bucket,
        seed: run.seed,
        dir: dir.to_path_buf(),
        counters,
        cached,
        resumed,
    };
    let bundle_path = dir.join(BUNDLE_FILE);
    let run_path = dir.join(RUN_FILE);
    if bundle_path.exists() && run_path.exists() {
        if let Ok(saved) = read_json::<RunRecord>(&run_path) {
            if let Some(counters) = saved.counters {
                if (RunRecord { counters: None, ..saved }) == record {
                    return Ok((load_checkpoint(&bundle_path)?, outcome(counters, true, false)));
                }
            }
        }
    }
    fs::create_dir_all(dir)?;
    let demos = Arc::new(if run.uses_demos() {
        DemoDataset::from_records(preps, records)?
    } else {
        DemoDataset::default()
    });
    let state = dir.join(STATE_DIR);
    let (output, resumed) = if run.threaded && run.uses_environment() {
        (run_training(run, preps, &demos)?, false)
    } else {
        let resumed = Trainer::has_checkpoint(&state);
        let mut trainer = if resumed {
            Trainer::resume(&state, run.step_budget, preps.to_vec(), Arc::clone(&demos))?
        } else {
            Trainer::new(run.clone(), preps.to_vec(), Arc::clone(&demos))?
        };
        if trainer.config().train != run.train || trainer.config().method != run.method || trainer.config().seed != run.seed {
            return Err(CliError::Config(format!("checkpoint in {} belongs to a different run", state.display())));
        }
        while trainer.budget_steps() < run.step_budget {
            let next = match trainer.budget_steps().checked_div(checkpoint_interval) {
                Some(done) => (done + 1) * checkpoint_interval,
                None => run.step_budget,
            };
            trainer.run_until(next)?;
            if checkpoint_interval > 0 && trainer.budget_steps() < run.step_budget {
                trainer.save(&state)?;
            }
        }
        (trainer.into_output(), resumed)
    };
    save_checkpoint(&bundle_path, &output.bundle)?;
    write_progress(&dir.join(PROGRESS_FILE), &output.progress)?;
    record.counters = Some(output.counters);
    write_json(&run_path, &record)?;
    if state.exists() {
        fs::remove_dir_all(&state)?;
    }
    Ok((output.bundle, outcome(output.counters, false, resumed)))
}

/// Trains the configured method on the configured bucket, once per seed.
pub fn train(cfg: &ExperimentConfig) -> Result<Vec<TrainOutcome>> {
    train_method(cfg, cfg.method)
}

pub fn train_method(cfg: &ExperimentConfig, method: Method) -> Result<Vec<TrainOutcome>> {
    let layout = Layout::new(&cfg.out_dir);
    let data = Data::load(&layout)?;
    let preps = data.select(&data.train_ids(cfg.train_bucket)?)?;
    let run0 = cfg.run_config(method, cfg.seeds[0]);
    let records = if run0.uses_demos() { load_demo_records(&layout)? } else { Vec::new() };
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let run = cfg.run_config(method, seed);
        let dir = layout.run_dir(method, cfg.train_bucket, seed);
        out.push(train_run(&run, cfg.train_bucket, &preps, &records, &dir, cfg.checkpoint_interval)?.1);
    }
    Ok(out)
}

/// Closed-loop metrics of one policy on one bucket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedMetrics {
    pub seed: Option<u64>,
    pub scenarios: usize,
    pub failure_rate: f64,
    pub collision_rate: f64,
    pub offroad_rate: f64,
    pub progress_ratio: f64,
    pub action_l1: f64,
}

fn demo_histogram(ids: &[String], records: &[DemoRecord]) -> Vec<f64> {
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let actions: Vec<Action> = records
        .iter()
        .filter(|r| wanted.contains(r.scenario_id.as_str()) && !r.infeasible)
        .map(|r| Action::new(r.steer, r.accel))
        .filter(Action::in_bounds)
        .collect();
    DiscreteActionTable::histogram(&actions)
}

pub fn episode_metrics(seed: Option<u64>, episodes: &[EvalEpisode], demo_hist: &[f64]) -> Result<SeedMetrics> {
    let results: Vec<_> = episodes.iter().map(|e| e.result.clone()).collect();
    let n = results.len().max(1) as f64;
    let hist = DiscreteActionTable::histogram(episodes.iter().flat_map(|e| e.actions.iter()));
    Ok(SeedMetrics {
        seed,
        scenarios: results.len(),
        failure_rate: failure_rate(&results)?,
        collision_rate: 100.0 * results.iter().filter(|r| r.collision).count() as f64 / n,
        offroad_rate: 100.0 * results.iter().filter(|r| r.offroad).count() as f64 / n,
        progress_ratio: route_progress_ratio(&results)?,
        action_l1: DiscreteActionTable::histogram_l1(&hist, demo_hist),
    })
}

/// A policy to evaluate: trained bundles or the open-loop expert.
#[derive(Debug, Clone)]
pub enum Policy<'a> {
    Bundle(&'a NetworkBundle),
    Expert,
}

pub fn evaluate_on(
    policy: Policy<'_>,
    seed: Option<u64>,
    ids: &[String],
    data: &Data,
    records: &[DemoRecord],
    reward: &RewardConfig,
    threads: usize,
) -> Result<SeedMetrics> {
    let preps = data.select(ids)?;
    let episodes = match policy {
        Policy::Bundle(b) => evaluate(b, &preps, reward, threads)?,
        Policy::Expert => evaluate_expert(&preps, reward, threads)?,
    };
    episode_metrics(seed, &episodes, &demo_histogram(ids, records))
}

/// Mean and, with at least two samples, sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { mean, std }
    }

    fn cells(&self) -> [String; 2] {
        [fmt4(self.mean), self.std.map(fmt4).unwrap_or_default()]
    }
}

pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub train_bucket: String,
    pub eval_bucket: Bucket,
    pub scenarios: usize,
    pub seeds: usize,
    pub failure_rate: Stat,
    pub progress_ratio: Stat,
    pub action_l1: Stat,
    pub per_seed: Vec<SeedMetrics>,
}

impl ReportRow {
    fn from_seeds(method: &str, train_bucket: &str, eval_bucket: Bucket, per_seed: Vec<SeedMetrics>) -> Self {
        let col = |f: fn(&SeedMetrics) -> f64| Stat::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        Self {
            method: method.into(),
            train_bucket: train_bucket.into(),
            eval_bucket,
            scenarios: per_seed.first().map_or(0, |m| m.scenarios),
            seeds: per_seed.len(),
            failure_rate: col(|m| m.failure_rate),
            progress_ratio: col(|m| m.progress_ratio),
            action_l1: col(|m| m.action_l1),
            per_seed,
        }
    }
}

pub const REPORT_HEADER: [&str; 11] = [
    "method",
    "train_bucket",
    "eval_bucket",
    "scenarios",
    "seeds",
    "failure_rate_mean",
    "failure_rate_std",
    "progress_ratio_mean",
    "progress_ratio_std",
    "action_l1_mean",
    "action_l1_std",
];

pub const SEED_HEADER: [&str; 10] = [
    "method",
    "train_bucket",
    "eval_bucket",
    "seed",
    "scenarios",
    "failure_rate",
    "collision_rate",
    "offroad_rate",
    "progress_ratio",
    "action_l1",
];

fn seed_cells(m: &SeedMetrics) -> Vec<String> {
    vec![
        m.seed.map(|s| s.to_string()).unwrap_or_default(),
        m.scenarios.to_string(),
        fmt4(m.failure_rate),
        fmt4(m.collision_rate),
        fmt4(m.offroad_rate),
        fmt4(m.progress_ratio),
        fmt4(m.action_l1),
    ]
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seeds: &'a [u64],
    notes: BTreeMap<&'static str, &'static str>,
    config: &'a ExperimentConfig,
}

fn write_meta(csv: &Path, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    let notes = BTreeMap::from([
        ("failure_rate", "percent of episodes with a collision or off-road event"),
        ("progress_ratio", "mean over scenarios of ego route progress / expert route progress, percent"),
        ("action_l1", "L1 distance between 31x7 action histograms of policy and demonstrations"),
        ("std", "sample standard deviation over seeds; empty with fewer than two seeds"),
    ]);
    let meta = Meta { tool: "bcsac", version: env!("CARGO_PKG_VERSION"), command, seeds: &cfg.seeds, notes, config: cfg };
    write_json(&meta_path(csv), &meta)
}

fn write_report_csv(path: &Path, seeds_path: &Path, rows: &[ReportRow], lead: &[&str], mut lead_cells: impl FnMut(bool) -> Vec<String>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(lead.iter().copied().chain(REPORT_HEADER))?;
    for r in rows {
        let mut cells = lead_cells(false);
        cells.extend([r.method.clone(), r.train_bucket.clone(), r.eval_bucket.to_string(), r.scenarios.to_string(), r.seeds.to_string()]);
        cells.extend(r.failure_rate.cells());
        cells.extend(r.progress_ratio.cells());
        cells.extend(r.action_l1.cells());
        w.write_record(&cells)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(seeds_path)?;
    w.write_record(lead.iter().copied().chain(SEED_HEADER))?;
    for r in rows {
        for m in &r.per_seed {
            let mut cells = lead_cells(true);
            cells.extend([r.method.clone(), r.train_bucket.clone(), r.eval_bucket.to_string()]);
            cells.extend(seed_cells(m));
            w.write_record(&cells)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// What `eval` should load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTarget {
    Trained(Method),
    Expert,
}

/// Evaluates trained checkpoints (one per seed) or the expert on every
/// requested bucket and writes the CSV plus its sidecar.
pub fn eval(cfg: &ExperimentConfig, target: EvalTarget) -> Result<Vec<ReportRow>> {
    let layout = Layout::new(&cfg.out_dir);
    let data = Data::load(&layout)?;
    let records = load_demo_records(&layout)?;
    let (name, method, train_bucket, bundles) = match target {
        EvalTarget::Expert => ("expert".to_string(), "expert".to_string(), "-".to_string(), Vec::new()),
        EvalTarget::Trained(m) => {
            let mut bundles = Vec::new();
            for &seed in &cfg.seeds {
                let path = layout.run_dir(m, cfg.train_bucket, seed).join(BUNDLE_FILE);
                require(&path, "checkpoint", "run `bcsac train` with the same method, bucket and seeds first")?;
                bundles.push((seed, load_checkpoint::<NetworkBundle>(&path)?));
            }
            (format!("{m}-{}", cfg.train_bucket), m.to_string(), cfg.train_bucket.to_string(), bundles)
        }
    };
    let mut rows = Vec::new();
    for &bucket in &cfg.eval_buckets {
        let ids = data.test_ids(bucket)?;
        let per_seed = if bundles.is_empty() {
            vec![evaluate_on(Policy::Expert, None, &ids, &data, &records, &cfg.reward, cfg.eval_threads)?]
        } else {
            bundles
                .iter()
                .map(|(seed, b)| evaluate_on(Policy::Bundle(b), Some(*seed), &ids, &data, &records, &cfg.reward, cfg.eval_threads))
                .collect::<Result<_>>()?
        };
        rows.push(ReportRow::from_seeds(&method, &train_bucket, bucket, per_seed));
    }
    let path = layout.eval_csv(&name);
    write_report_csv(&path, &layout.eval_seeds_csv(&name), &rows, &[], |_| Vec::new())?;
    write_meta(&path, "eval", cfg)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub value: f64,
    pub row: ReportRow,
}

/// Trains and evaluates every point of a sweep `point`, one run per seed.
pub fn run_point(
    cfg: &ExperimentConfig,
    data: &Data,
    records: &[DemoRecord],
    point: &AblationPoint,
    dir: &Path,
) -> Result<Vec<ReportRow>> {
    let preps = data.select(&data.train_ids(cfg.train_bucket)?)?;
    let mut bundles = Vec::new();
    for &seed in &cfg.seeds {
        let run = RunConfig { reward: point.reward, train: point.train.clone(), ..cfg.run_config(cfg.method, seed) };
        let run_dir = run_dir_in(dir, cfg.method, cfg.train_bucket, seed);
        bundles.push((seed, train_run(&run, cfg.train_bucket, &preps, records, &run_dir, cfg.checkpoint_interval)?.0));
    }
    cfg.eval_buckets
        .iter()
        .map(|&bucket| {
            let ids = data.test_ids(bucket)?;
            let per_seed = bundles
                .iter()
                .map(|(seed, b)| evaluate_on(Policy::Bundle(b), Some(*seed), &ids, data, records, &point.reward, cfg.eval_threads))
                .collect::<Result<_>>()?;
            Ok(ReportRow::from_seeds(cfg.method.name(), cfg.train_bucket.name(), bucket, per_seed))
        })
        .collect()
}

/// Runs the configured one-axis sweep and writes one row per point and bucket.
pub fn ablate(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    let axis = cfg.ablate.axis()?;
    let points = cfg.ablate.expand(&cfg.reward, &cfg.train)?;
    let layout = Layout::new(&cfg.out_dir);
    let data = Data::load(&layout)?;
    let records = load_demo_records(&layout)?;
    let mut out = Vec::new();
    for p in &points {
        // A point equal to the base configuration shares the main runs.
        let dir = if p.reward == cfg.reward && p.train == cfg.train {
            layout.root.join("runs")
        } else {
            layout.ablation_dir(axis.name(), &p.label)
        };
        for row in run_point(cfg, &data, &records, p, &dir)? {
            out.push(AblationRow { label: p.label.clone(), value: p.value, row });
        }
    }
    let path = layout.ablation_csv(axis.name());
    write_ablation(&path, &layout.ablation_seeds_csv(axis.name()), &out, axis.name())?;
    write_meta(&path, "ablate", cfg)?;
    Ok(out)
}

fn write_ablation(path: &Path, seeds_path: &Path, rows: &[AblationRow], axis: &str) -> Result<()> {
    let reports: Vec<ReportRow> = rows.iter().map(|a| a.row.clone()).collect();
    let mut labels = rows.iter().map(|a| a.label.clone());
    let mut seed_labels = rows.iter().flat_map(|a| std::iter::repeat_n(a.label.clone(), a.row.per_seed.len()));
    write_report_csv(path, seeds_path, &reports, &["axis", "point"], |seeds| {
        let label = if seeds { seed_labels.next() } else { labels.next() };
        vec![axis.to_string(), label.expect("one label per row")]
    })
}

/// Assembles every evaluation CSV into one table: failure rate per eval
/// bucket and progress ratio on All, one row per (method, train bucket).
pub fn report(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let layout = Layout::new(&cfg.out_dir);
    let dir = layout.root.join("eval");
    require(&dir, "evaluation results", "run `bcsac eval` first")?;
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && !p.to_string_lossy().ends_with(".seeds.csv"))
        .collect();
    files.sort();
    let mut table: BTreeMap<(String, String), BTreeMap<Bucket, (String, String)>> = BTreeMap::new();
    for f in &files {
        let mut r = csv::Reader::from_path(f)?;
        for rec in r.records() {
            let rec = rec?;
            let bucket: Bucket = rec[2].parse().map_err(CliError::Config)?;
            let cell = |m: &str, s: &str| if s.is_empty() { m.to_string() } else { format!("{m} ± {s}") };
            table
                .entry((rec[0].to_string(), rec[1].to_string()))
                .or_default()
                .insert(bucket, (cell(&rec[5], &rec[6]), cell(&rec[7], &rec[8])));
        }
    }
    let order = [Bucket::Top1, Bucket::Top10, Bucket::Top50, Bucket::All];
    let present: Vec<Bucket> = order.into_iter().filter(|b| table.values().any(|m| m.contains_key(b))).collect();
    let path = layout.report_csv();
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["method".to_string(), "train_bucket".to_string()];
    header.extend(present.iter().map(|b| format!("failure_rate_{b}")));
    header.push("progress_ratio_all".into());
    w.write_record(&header)?;
    for ((method, bucket), cols) in &table {
        let mut row = vec![method.clone(), bucket.clone()];
        row.extend(present.iter().map(|b| cols.get(b).map(|c| c.0.clone()).unwrap_or_default()));
        row.push(cols.get(&Bucket::All).map(|c| c.1.clone()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    write_meta(&path, "report", cfg)?;
    Ok(path)
}

