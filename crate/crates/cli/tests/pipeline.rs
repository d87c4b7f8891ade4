use bcsac_cli::config::ExperimentConfig;
use bcsac_cli::error::CliError;
use bcsac_cli::layout::{Layout, BUNDLE_FILE};
use bcsac_cli::pipeline::{self, Data, EvalTarget};
use bcsac_core::runtime::Method;
use bcsac_core::scenario::{Bucket, Template};
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        out_dir: dir.to_path_buf(),
        scenarios_per_template: 4,
        probe_budget: 60,
        step_budget: 160,
        seeds: vec![0],
        ..ExperimentConfig::default()
    };
    cfg.train.hidden = vec![16, 16];
    cfg.train.warmup = 64;
    cfg.train.rl_batch_size = 16;
    cfg.train.bc_batch_size = 32;
    cfg.validate().unwrap();
    cfg
}

fn prepared(dir: &Path) -> ExperimentConfig {
    let cfg = tiny(dir);
    pipeline::generate(&cfg).unwrap();
    pipeline::score(&cfg).unwrap();
    cfg
}

#[test]
fn generate_writes_the_configured_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { scenarios_per_template: 8, ..tiny(tmp.path()) };
    let s = pipeline::generate(&cfg).unwrap();
    assert_eq!(s.scenarios, 8 * Template::ALL.len());
    assert_eq!(s.train + s.test, s.scenarios);
    assert!(s.test > 0 && s.train > s.test);
    assert!(s.per_template.iter().all(|&(_, n)| n == 8));
    assert_eq!(s.demos.per_template.iter().map(|p| p.2).sum::<usize>(), s.demos.transitions);
    let data = Data::load(&Layout::new(tmp.path())).unwrap();
    assert_eq!(data.preps.len(), s.scenarios);
}

#[test]
fn same_seed_writes_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline::generate(&tiny(a.path())).unwrap();
    pipeline::generate(&tiny(b.path())).unwrap();
    for f in ["scenarios.jsonl", "split.json", "demos.jsonl"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn expert_evaluates_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { eval_buckets: vec![Bucket::All], ..tiny(tmp.path()) };
    pipeline::generate(&cfg).unwrap();
    let rows = pipeline::eval(&cfg, EvalTarget::Expert).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!(r.failure_rate.mean, 0.0);
    assert_eq!(r.action_l1.mean, 0.0);
    assert!((r.progress_ratio.mean - 100.0).abs() < 1e-2, "{}", r.progress_ratio.mean);
    assert_eq!(r.failure_rate.std, None);
}

#[test]
fn buckets_nest_after_scoring() {
    let tmp = tempfile::tempdir().unwrap();
    prepared(tmp.path());
    let data = Data::load(&Layout::new(tmp.path())).unwrap();
    let set = |b| data.test_ids(b).unwrap().into_iter().collect::<BTreeSet<_>>();
    let (t1, t10, t50, all) = (set(Bucket::Top1), set(Bucket::Top10), set(Bucket::Top50), set(Bucket::All));
    assert!(!t1.is_empty());
    assert!(t1.is_subset(&t10) && t10.is_subset(&t50) && t50.is_subset(&all));
    assert_eq!(data.split.scores.len(), data.preps.len());
}

#[test]
fn behavior_cloning_never_steps_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = prepared(tmp.path());
    let out = pipeline::train_method(&cfg, Method::Bc).unwrap();
    assert_eq!(out[0].counters.env_steps, 0);
    assert_eq!(out[0].counters.bc_steps, cfg.step_budget);
    assert!(out[0].dir.join(BUNDLE_FILE).exists());
}

#[test]
fn finished_runs_are_reused_and_checkpointing_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { method: Method::Sac, ..prepared(tmp.path()) };
    let first = pipeline::train(&cfg).unwrap();
    assert!(!first[0].cached);
    let again = pipeline::train(&cfg).unwrap();
    assert!(again[0].cached);
    assert_eq!(again[0].counters, first[0].counters);
    let plain = fs::read(first[0].dir.join(BUNDLE_FILE)).unwrap();

    let other = tempfile::tempdir().unwrap();
    for f in ["scenarios.jsonl", "split.json", "demos.jsonl"] {
        fs::copy(tmp.path().join(f), other.path().join(f)).unwrap();
    }
    let chk = ExperimentConfig { out_dir: other.path().to_path_buf(), checkpoint_interval: 40, ..cfg };
    let out = pipeline::train(&chk).unwrap();
    assert_eq!(out[0].counters, first[0].counters);
    assert_eq!(fs::read(out[0].dir.join(BUNDLE_FILE)).unwrap(), plain);
}

#[test]
fn missing_inputs_name_the_command_to_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    let err = pipeline::train(&cfg).unwrap_err();
    assert!(matches!(err, CliError::Missing { .. }));
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("bcsac generate"));

    pipeline::generate(&cfg).unwrap();
    let top = ExperimentConfig { train_bucket: Bucket::Top10, ..cfg };
    let err = pipeline::train(&top).unwrap_err();
    assert!(err.to_string().contains("bcsac score"), "{err}");
}

#[test]
fn ablation_writes_one_row_per_point_and_bucket() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = prepared(tmp.path());
    cfg.eval_buckets = vec![Bucket::All, Bucket::Top10];
    cfg.ablate = toml::from_str("axes = [\"reward-mode\"]\npoints = []").unwrap();
    let rows = pipeline::ablate(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    let text = fs::read_to_string(Layout::new(tmp.path()).ablation_csv("reward-mode")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(1).unwrap().starts_with("reward-mode,dense,"));
}

fn bcsac(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bcsac")).args(args).output().unwrap()
}

#[test]
fn binary_reports_errors_on_one_line_with_kind_and_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = bcsac(&["train", "--out-dir", dir, "--set", "train.no_such_field=1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: kind=config message=\""), "{err}");

    let out = bcsac(&["eval", "--out-dir", dir]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: kind=missing-input"));
}

#[test]
fn report_collects_evaluations() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = prepared(tmp.path());
    cfg.seeds = vec![0, 1];
    cfg.eval_buckets = vec![Bucket::Top10, Bucket::All];
    pipeline::train_method(&cfg, Method::Bc).unwrap();
    pipeline::eval(&cfg, EvalTarget::Trained(Method::Bc)).unwrap();
    pipeline::eval(&cfg, EvalTarget::Expert).unwrap();
    let path = pipeline::report(&cfg).unwrap();
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,train_bucket,failure_rate_top10,failure_rate_all,progress_ratio_all");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("bc,all,") && lines[1].contains(" ± "));
    assert!(lines[2].starts_with("expert,-,0.0000,0.0000,"));
}
