use bcsac_cli::config::ExperimentConfig;
use bcsac_cli::error::{CliError, Result};
use bcsac_cli::pipeline::{self, fmt4, EvalTarget, ReportRow};
use bcsac_core::runtime::Method;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bcsac", version, about = "Imitation plus RL driving-policy experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<String>,
    /// Method: bc, sac or bc-sac.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Training bucket: top1, top10, top50 or all.
    #[arg(long, global = true)]
    train_bucket: Option<String>,
    /// Environment-step (or gradient-step) budget per run.
    #[arg(long, global = true)]
    step_budget: Option<u64>,
    /// Comma-separated training seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Master seed for generation, the split and scoring.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Any config field as `key=value`; dotted keys reach nested tables.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenarios, the train/test split, and expert demos.
    Generate,
    /// Recompute expert demos from the scenario file.
    Demos,
    /// Label scenarios with a behavior-cloning probe and fit the difficulty model.
    Score,
    /// Train the configured method once per seed.
    Train,
    /// Evaluate trained checkpoints or the expert on the test buckets.
    Eval {
        /// `trained` (default) or `expert`.
        #[arg(long, default_value = "trained")]
        checkpoint: String,
    },
    /// Run the configured one-axis sweep.
    Ablate,
    /// Collect evaluation results into report.csv.
    Report,
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        if let Some(v) = &self.out_dir {
            out.push(("out_dir".into(), quote(v)));
        }
        if let Some(v) = &self.method {
            out.push(("method".into(), quote(v)));
        }
        if let Some(v) = &self.train_bucket {
            out.push(("train_bucket".into(), quote(v)));
        }
        if let Some(v) = self.step_budget {
            out.push(("step_budget".into(), v.to_string()));
        }
        if let Some(v) = &self.seeds {
            let list: Vec<String> = v.iter().map(u64::to_string).collect();
            out.push(("seeds".into(), format!("[{}]", list.join(", "))));
        }
        if let Some(v) = self.seed {
            out.push(("seed".into(), v.to_string()));
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{kv}`")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn print_rows(rows: &[ReportRow]) {
    for r in rows {
        let stat = |s: &pipeline::Stat| match s.std {
            Some(sd) => format!("{} ± {}", fmt4(s.mean), fmt4(sd)),
            None => fmt4(s.mean),
        };
        println!(
            "{} trained on {} | eval {} ({} scenarios, {} seeds): failure {} %, progress {} %, action L1 {}",
            r.method,
            r.train_bucket,
            r.eval_bucket,
            r.scenarios,
            r.seeds,
            stat(&r.failure_rate),
            stat(&r.progress_ratio),
            stat(&r.action_l1)
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ExperimentConfig::from_file(cli.common.config.as_deref(), &cli.common.overrides()?)?;
    match cli.command {
        Command::Generate => {
            let s = pipeline::generate(&cfg)?;
            println!("scenarios: {} ({} train, {} test)", s.scenarios, s.train, s.test);
            for (t, n) in &s.per_template {
                println!("  {t}: {n}");
            }
            println!(
                "demo transitions: {} ({} infeasible, {:.2} %)",
                s.demos.transitions,
                s.demos.infeasible,
                100.0 * s.demos.infeasible_fraction
            );
        }
        Command::Demos => {
            let s = pipeline::demos(&cfg)?;
            println!("demo transitions: {} ({} infeasible, {:.2} %)", s.transitions, s.infeasible, 100.0 * s.infeasible_fraction);
            for (t, i, n) in &s.per_template {
                println!("  {t}: {i} of {n} infeasible");
            }
        }
        Command::Score => {
            let s = pipeline::score(&cfg)?;
            println!("train labels: {} positive of {}", s.train_positives, s.train_labels);
            println!("test labels: {} positive of {}", s.test_positives, s.test_labels);
            match s.auroc {
                Some(a) => println!("held-out AUROC: {a:.4}"),
                None => println!("held-out AUROC: undefined (single-class test labels)"),
            }
        }
        Command::Train => {
            for o in pipeline::train(&cfg)? {
                let how = if o.cached { "reused" } else if o.resumed { "resumed" } else { "trained" };
                println!(
                    "{} seed {} on {}: {how}, {} env steps, {} RL updates, {} IL steps, {} BC steps -> {}",
                    o.method,
                    o.seed,
                    o.bucket,
                    o.counters.env_steps,
                    o.counters.rl_steps,
                    o.counters.il_steps,
                    o.counters.bc_steps,
                    o.dir.display()
                );
            }
        }
        Command::Eval { checkpoint } => {
            let target = match checkpoint.as_str() {
                "expert" => EvalTarget::Expert,
                "trained" => EvalTarget::Trained(cfg.method),
                other => match other.parse::<Method>() {
                    Ok(m) => EvalTarget::Trained(m),
                    Err(_) => return Err(CliError::Config(format!("--checkpoint expects trained, expert or a method, got `{other}`"))),
                },
            };
            print_rows(&pipeline::eval(&cfg, target)?);
        }
        Command::Ablate => {
            for a in pipeline::ablate(&cfg)? {
                print!("[{} = {}] ", cfg.ablate.axis()?, a.label);
                print_rows(std::slice::from_ref(&a.row));
            }
        }
        Command::Report => println!("{}", pipeline::report(&cfg)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
