//! Asynchronous analysis jobs: FIFO worker pool, deduplication of identical
//! in-flight jobs and the persistent result cache.

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::cache::DiskCache;
use crate::plugins::{JobSpec, Plugin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Finished,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Finished | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobError {
    pub code: String,
    pub message: String,
}

/// Snapshot of a job.
#[derive(Debug, Clone)]
pub struct JobView {
    pub id: String,
    pub plugin: Plugin,
    pub state: JobState,
    /// Payload bytes of a finished job.
    pub result: Option<Arc<Vec<u8>>>,
    pub error: Option<JobError>,
    /// Whether the payload came from the cache without computing.
    pub cached: bool,
}

struct Job {
    spec: Arc<JobSpec>,
    key: String,
    state: JobState,
    result: Option<Arc<Vec<u8>>>,
    error: Option<JobError>,
    cached: bool,
}

#[derive(Default)]
struct State {
    jobs: HashMap<String, Job>,
    queue: VecDeque<String>,
    inflight: HashMap<String, String>,
    next: u64,
    shutdown: bool,
}

struct Shared {
    state: Mutex<State>,
    work: Condvar,
    done: Condvar,
    cache: Option<DiskCache>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct JobQueue {
    shared: Arc<Shared>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

fn view(id: &str, job: &Job) -> JobView {
    JobView {
        id: id.to_string(),
        plugin: job.spec.plugin,
        state: job.state,
        result: job.result.clone(),
        error: job.error.clone(),
        cached: job.cached,
    }
}

impl JobQueue {
    /// Starts `workers` worker threads. With zero workers jobs stay queued.
    pub fn new(workers: usize, cache: Option<DiskCache>) -> Self {
        let shared = Arc::new(Shared {
            state: Mutex::new(State::default()),
            work: Condvar::new(),
            done: Condvar::new(),
            cache,
        });
        let handles = (0..workers)
            .map(|i| {
                let shared = shared.clone();
                std::thread::Builder::new()
                    .name(format!("hpolens-worker-{i}"))
                    .spawn(move || worker(shared))
                    .expect("spawn worker")
            })
            .collect();
        Self {
            shared,
            workers: Mutex::new(handles),
        }
    }

    /// Submits a job and returns its id. A cached result yields a finished
    /// job at once; an identical queued or running job is reused.
    pub fn submit(&self, spec: JobSpec) -> String {
        let key = spec.cache_key();
        if let Some(id) = self.shared.lock().inflight.get(&key) {
            return id.clone();
        }
        let cached = self.shared.cache.as_ref().and_then(|c| c.get(&key));

        let mut st = self.shared.lock();
        if let Some(id) = st.inflight.get(&key) {
            return id.clone();
        }
        st.next += 1;
        let id = format!("job-{}", st.next);
        let job = match cached {
            Some(bytes) => Job {
                spec: Arc::new(spec),
                key,
                state: JobState::Finished,
                result: Some(Arc::new(bytes)),
                error: None,
                cached: true,
            },
            None => {
                st.inflight.insert(key.clone(), id.clone());
                st.queue.push_back(id.clone());
                self.shared.work.notify_one();
                Job {
                    spec: Arc::new(spec),
                    key,
                    state: JobState::Queued,
                    result: None,
                    error: None,
                    cached: false,
                }
            }
        };
        st.jobs.insert(id.clone(), job);
        id
    }

    pub fn status(&self, id: &str) -> Option<JobView> {
        let st = self.shared.lock();
        st.jobs.get(id).map(|j| view(id, j))
    }

    /// Blocks until the job reaches a terminal state or `timeout` passes.
    pub fn wait(&self, id: &str, timeout: Duration) -> Option<JobView> {
        let deadline = Instant::now() + timeout;
        let mut st = self.shared.lock();
        loop {
            let job = st.jobs.get(id)?;
            let now = Instant::now();
            if job.state.is_terminal() || now >= deadline {
                return Some(view(id, job));
            }
            st = self
                .shared
                .done
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    pub fn queued(&self) -> usize {
        self.shared.lock().queue.len()
    }

    /// Stops the workers after their current job.
    pub fn shutdown(&self) {
        self.shared.lock().shutdown = true;
        self.shared.work.notify_all();
        let handles: Vec<_> = self.workers.lock().unwrap_or_else(|e| e.into_inner()).drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }
}

impl Drop for JobQueue {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn worker(shared: Arc<Shared>) {
    loop {
        let (id, spec) = {
            let mut st = shared.lock();
            loop {
                if st.shutdown {
                    return;
                }
                if let Some(id) = st.queue.pop_front() {
                    let job = st.jobs.get_mut(&id).expect("queued jobs exist");
                    job.state = JobState::Running;
                    break (id, job.spec.clone());
                }
                st = shared.work.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        };

        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| spec.payload()));
        let outcome = match outcome {
            Ok(Ok(bytes)) => Ok(bytes),
            Ok(Err(e)) => Err(JobError {
                code: e.code().to_string(),
                message: e.to_string(),
            }),
            Err(panic) => Err(JobError {
                code: "internal".to_string(),
                message: panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "analysis panicked".to_string()),
            }),
        };
        let key = spec.cache_key();
        if let (Ok(bytes), Some(cache)) = (&outcome, &shared.cache) {
            if let Err(e) = cache.put(&key, bytes) {
                tracing::warn!("could not write cache entry for {id}: {e}");
            }
        }
        tracing::info!(
            "{id} ({}) {} in {:?}",
            spec.plugin,
            if outcome.is_ok() { "finished" } else { "failed" },
            started.elapsed()
        );

        let mut st = shared.lock();
        let job = st.jobs.get_mut(&id).expect("running jobs exist");
        match outcome {
            Ok(bytes) => {
                job.state = JobState::Finished;
                job.result = Some(Arc::new(bytes));
            }
            Err(e) => {
                job.state = JobState::Failed;
                job.error = Some(e);
            }
        }
        let key = job.key.clone();
        st.inflight.remove(&key);
        shared.done.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plugins::{prepare, RunRef};
    use hpolens_core::synthetic::mixed_run;
    use serde_json::Map;

    fn spec(plugin: &str) -> JobSpec {
        let run = Arc::new(mixed_run("j", 6, 60, 0).unwrap());
        prepare(
            plugin,
            vec![RunRef {
                handle: "j".into(),
                run,
            }],
            false,
            &Map::new(),
        )
        .unwrap()
    }

    #[test]
    fn identical_queued_jobs_share_an_id() {
        let q = JobQueue::new(0, None);
        let a = q.submit(spec("pdp"));
        let b = q.submit(spec("pdp"));
        let c = q.submit(spec("footprint"));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(q.status(&a).unwrap().state, JobState::Queued);
        assert_eq!(q.queued(), 2);
    }

    #[test]
    fn finished_jobs_are_served_from_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let q = JobQueue::new(1, Some(DiskCache::open(dir.path()).unwrap()));
        let first = q.submit(spec("budget_correlation"));
        let done = q.wait(&first, Duration::from_secs(30)).unwrap();
        assert_eq!(done.state, JobState::Finished);
        let second = q.submit(spec("budget_correlation"));
        assert_ne!(first, second);
        let hit = q.status(&second).unwrap();
        assert!(hit.cached);
        assert_eq!(hit.result.unwrap(), done.result.unwrap());
    }

    #[test]
    fn failures_carry_the_cause() {
        use hpolens_core::converters::{ingest_records, TrialRecord};
        use hpolens_core::run_model::{Hyperparameter, ConfigurationSpace, Objective, TrialStatus};
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
        let run = ingest_records("f", space, vec![Objective::minimize("loss")], vec![1.0], vec![record]).unwrap();
        let spec = prepare(
            "footprint",
            vec![RunRef {
                handle: "f".into(),
                run: Arc::new(run),
            }],
            false,
            &Map::new(),
        )
        .unwrap();
        let q = JobQueue::new(1, None);
        let id = q.submit(spec);
        let v = q.wait(&id, Duration::from_secs(30)).unwrap();
        assert_eq!(v.state, JobState::Failed);
        assert_eq!(v.error.unwrap().code, "empty_selection");
    }
}
