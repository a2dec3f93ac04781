#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use hpolens_core::converters::{ingest_records, write_tabular, TrialRecord};
use hpolens_core::run_model::{ConfigurationSpace, Hyperparameter, Objective, Run, TrialStatus};
use hpolens_core::synthetic::mixed_run;
use hpolens_service::api::AppState;
use hpolens_service::cache::DiskCache;
use hpolens_service::jobs::JobQueue;
use hpolens_service::registry::Registry;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub state: Arc<AppState>,
}

impl Fixture {
    pub fn runs_dir(&self) -> PathBuf {
        self.dir.path().join("runs")
    }

    pub fn run_dir(&self, handle: &str) -> PathBuf {
        self.runs_dir().join(handle)
    }
}

/// A run whose only trial crashed, so every analysis has nothing to select.
pub fn crashed_run(name: &str) -> Run {
    let space = ConfigurationSpace::new(vec![Hyperparameter::float("x", 0.0, 1.0, 0.5)]);
    let record = TrialRecord {
        config: [("x".to_string(), 0.5.into())].into(),
        budget: 1.0,
        seed: None,
        objectives: [("loss".to_string(), None)].into(),
        status: TrialStatus::Crashed,
        start: 0.0,
        end: Some(1.0),
    };
    ingest_records(name, space, vec![Objective::minimize("loss")], vec![1.0], vec![record]).unwrap()
}

pub fn write_runs(root: &Path) {
    write_tabular(&mixed_run("alpha", 8, 80, 1).unwrap(), &root.join("alpha")).unwrap();
    write_tabular(&mixed_run("beta", 8, 60, 2).unwrap(), &root.join("beta")).unwrap();
    write_tabular(&crashed_run("broken"), &root.join("broken")).unwrap();
}

/// Runs directory with `alpha`, `beta` and `broken`, a disk cache and a
/// queue with `workers` threads.
pub fn fixture(workers: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    std::fs::create_dir(&runs).unwrap();
    write_runs(&runs);
    let registry = Arc::new(Registry::open(&runs).unwrap());
    let cache = DiskCache::open(dir.path().join("cache")).unwrap();
    let state = Arc::new(AppState {
        registry,
        jobs: Arc::new(JobQueue::new(workers, Some(cache))),
        assets_dir: None,
    });
    Fixture { dir, state }
}
