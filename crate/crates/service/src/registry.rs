//! Runs found under the runs directory, named groups of runs, and the
//! background refresher that picks up new trials.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use hpolens_core::converters::{detect_format, Format, RunSource};
use hpolens_core::run_model::{group_runs, Run, TrialStatus};

use crate::error::RequestError;
use crate::plugins::RunRef;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub id: String,
    pub name: String,
    pub members: Vec<String>,
}

struct Slot {
    run: Arc<Run>,
    changed_since_load: bool,
}

#[derive(Default)]
struct Inner {
    runs: BTreeMap<String, Slot>,
    groups: BTreeMap<String, Group>,
    next_group: u64,
}

pub struct Registry {
    runs_dir: PathBuf,
    inner: RwLock<Inner>,
    sources: Mutex<BTreeMap<String, RunSource>>,
    failed: Mutex<BTreeSet<String>>,
}

/// A run is live while it has running trials or after its files changed.
fn is_live(slot: &Slot) -> bool {
    slot.changed_since_load || slot.run.trials().iter().any(|t| t.status == TrialStatus::Running)
}

impl Registry {
    /// Opens `runs_dir` and loads every run directory inside it.
    pub fn open(runs_dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let runs_dir = runs_dir.into();
        if !runs_dir.is_dir() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("runs directory {} does not exist", runs_dir.display()),
            ));
        }
        let registry = Self {
            runs_dir,
            inner: RwLock::new(Inner::default()),
            sources: Mutex::new(BTreeMap::new()),
            failed: Mutex::new(BTreeSet::new()),
        };
        registry.scan();
        Ok(registry)
    }

    pub fn runs_dir(&self) -> &Path {
        &self.runs_dir
    }

    fn candidates(&self) -> Vec<(String, PathBuf)> {
        let Ok(entries) = std::fs::read_dir(&self.runs_dir) else {
            return Vec::new();
        };
        let mut out: Vec<(String, PathBuf)> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| Some((e.file_name().into_string().ok()?, e.path())))
            .filter(|(name, _)| !name.starts_with('.'))
            .collect();
        out.sort();
        out
    }

    /// Loads run directories that are not registered yet; returns their
    /// handles.
    pub fn scan(&self) -> Vec<String> {
        let known: BTreeSet<String> = self.sources.lock().expect("sources lock").keys().cloned().collect();
        let mut added = Vec::new();
        for (handle, path) in self.candidates() {
            if known.contains(&handle) || !matches!(detect_format(&path), Ok(Format::Tabular)) {
                continue;
            }
            match RunSource::open(&path) {
                Ok((source, run)) => {
                    self.failed.lock().expect("failed lock").remove(&handle);
                    self.sources.lock().expect("sources lock").insert(handle.clone(), source);
                    self.inner.write().expect("registry lock").runs.insert(
                        handle.clone(),
                        Slot {
                            run: Arc::new(run),
                            changed_since_load: false,
                        },
                    );
                    tracing::info!("loaded run {handle}");
                    added.push(handle);
                }
                Err(e) => {
                    if self.failed.lock().expect("failed lock").insert(handle.clone()) {
                        tracing::warn!("could not load {}: {e}", path.display());
                    }
                }
            }
        }
        added
    }

    /// Re-reads every registered run and scans for new ones. Returns the
    /// handles whose content changed.
    pub fn refresh(&self) -> Vec<String> {
        let mut changed = Vec::new();
        {
            let mut sources = self.sources.lock().expect("sources lock");
            for (handle, source) in sources.iter_mut() {
                let Some(current) = self.get(handle) else { continue };
                match source.refresh(&current) {
                    Ok((run, true)) => {
                        let mut inner = self.inner.write().expect("registry lock");
                        if let Some(slot) = inner.runs.get_mut(handle) {
                            slot.run = run;
                            slot.changed_since_load = true;
                        }
                        changed.push(handle.clone());
                    }
                    Ok((_, false)) => {}
                    Err(e) => tracing::warn!("refresh of {handle} failed: {e}"),
                }
            }
        }
        self.scan();
        changed
    }

    pub fn get(&self, handle: &str) -> Option<Arc<Run>> {
        self.inner.read().expect("registry lock").runs.get(handle).map(|s| s.run.clone())
    }

    /// `(handle, run, live)` for every registered run, sorted by handle.
    pub fn list(&self) -> Vec<(String, Arc<Run>, bool)> {
        self.inner
            .read()
            .expect("registry lock")
            .runs
            .iter()
            .map(|(h, s)| (h.clone(), s.run.clone(), is_live(s)))
            .collect()
    }

    pub fn group(&self, id: &str) -> Option<Group> {
        self.inner.read().expect("registry lock").groups.get(id).cloned()
    }

    /// Registers a named group of runs with compatible objectives.
    pub fn create_group(&self, name: &str, run_ids: &[String]) -> Result<Group, RequestError> {
        let (refs, _) = self.resolve(run_ids)?;
        group_runs(name, refs.iter().map(|r| r.run.clone()).collect())
            .map_err(|e| RequestError::from(e).field("run_ids"))?;
        let mut inner = self.inner.write().expect("registry lock");
        inner.next_group += 1;
        let group = Group {
            id: format!("group-{}", inner.next_group),
            name: name.to_string(),
            members: refs.into_iter().map(|r| r.handle).collect(),
        };
        inner.groups.insert(group.id.clone(), group.clone());
        Ok(group)
    }

    /// Expands run handles and group ids into runs. The flag reports whether
    /// a group id was among them.
    pub fn resolve(&self, ids: &[String]) -> Result<(Vec<RunRef>, bool), RequestError> {
        if ids.is_empty() {
            return Err(RequestError::new("invalid_request", "run_ids must not be empty").field("run_ids"));
        }
        let inner = self.inner.read().expect("registry lock");
        let mut out = Vec::new();
        let mut saw_group = false;
        for id in ids {
            let handles: Vec<String> = match inner.groups.get(id) {
                Some(g) => {
                    saw_group = true;
                    g.members.clone()
                }
                None => vec![id.clone()],
            };
            for h in handles {
                let slot = inner.runs.get(&h).ok_or_else(|| {
                    RequestError::new("unknown_run", format!("unknown run `{h}`")).field("run_ids")
                })?;
                out.push(RunRef {
                    handle: h,
                    run: slot.run.clone(),
                });
            }
        }
        Ok((out, saw_group))
    }

    /// Polls the runs directory every `interval` on a background thread.
    pub fn spawn_refresher(self: &Arc<Self>, interval: Duration) -> Refresher {
        let (stop, rx) = mpsc::channel::<()>();
        let registry = self.clone();
        let handle = std::thread::Builder::new()
            .name("hpolens-refresher".into())
            .spawn(move || loop {
                match rx.recv_timeout(interval) {
                    Err(RecvTimeoutError::Timeout) => {
                        for h in registry.refresh() {
                            tracing::info!("run {h} updated");
                        }
                    }
                    _ => return,
                }
            })
            .expect("spawn refresher");
        Refresher {
            stop: Some(stop),
            handle: Some(handle),
        }
    }
}

/// Stops the refresher thread when dropped.
pub struct Refresher {
    stop: Option<Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Refresher {
    fn drop(&mut self) {
        drop(self.stop.take());
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
