use bcsac_core::runtime::Method;
use bcsac_core::scenario::Bucket;
use std::path::{Path, PathBuf};

/// File locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn scenarios(&self) -> PathBuf {
        self.root.join("scenarios.jsonl")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }

    pub fn demos(&self) -> PathBuf {
        self.root.join("demos.jsonl")
    }

    pub fn scores(&self) -> PathBuf {
        self.root.join("scores.jsonl")
    }

    pub fn difficulty_model(&self) -> PathBuf {
        self.root.join("difficulty.json")
    }

    pub fn probe(&self) -> PathBuf {
        self.root.join("probe")
    }

    pub fn run_dir(&self, method: Method, bucket: Bucket, seed: u64) -> PathBuf {
        run_dir_in(&self.root.join("runs"), method, bucket, seed)
    }

    pub fn ablation_dir(&self, axis: &str, label: &str) -> PathBuf {
        self.root.join("ablate").join(axis).join(label)
    }

    pub fn eval_csv(&self, name: &str) -> PathBuf {
        self.root.join("eval").join(format!("{name}.csv"))
    }

    pub fn eval_seeds_csv(&self, name: &str) -> PathBuf {
        self.root.join("eval").join(format!("{name}.seeds.csv"))
    }

    pub fn ablation_csv(&self, axis: &str) -> PathBuf {
        self.root.join(format!("ablate-{axis}.csv"))
    }

    pub fn ablation_seeds_csv(&self, axis: &str) -> PathBuf {
        self.root.join(format!("ablate-{axis}.seeds.csv"))
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }
}

pub fn run_dir_in(base: &Path, method: Method, bucket: Bucket, seed: u64) -> PathBuf {
    base.join(format!("{method}-{bucket}-seed{seed}"))
}

pub const BUNDLE_FILE: &str = "bundle.json";
pub const PROGRESS_FILE: &str = "progress.csv";
pub const RUN_FILE: &str = "run.json";
pub const STATE_DIR: &str = "state";

/// Sidecar path `x.meta.json` for `x.csv`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}
