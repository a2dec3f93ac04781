//! Submitting analyses to the job queue: deduplication of identical jobs and
//! byte-identical answers from the disk cache.
//!
//!     cargo run -p hpolens-service --example job_queue

use std::sync::Arc;
use std::time::{Duration, Instant};

use hpolens_core::synthetic::mixed_run;
use hpolens_service::cache::DiskCache;
use hpolens_service::jobs::JobQueue;
use hpolens_service::plugins::{prepare, JobSpec, RunRef};
use serde_json::{json, Map, Value};

fn spec(run: &Arc<hpolens_core::run_model::Run>, plugin: &str, params: Value) -> JobSpec {
    let raw: Map<String, Value> = params.as_object().cloned().unwrap_or_default();
    let runs = vec![RunRef { handle: "demo".into(), run: run.clone() }];
    prepare(plugin, runs, false, &raw).expect("valid job")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let run = Arc::new(mixed_run("demo", 12, 400, 0)?);
    let cache_dir = tempfile::tempdir()?;
    let queue = JobQueue::new(2, Some(DiskCache::open(cache_dir.path())?));

    let footprint = json!({"border_cap": 50, "n_support": 100});
    let a = queue.submit(spec(&run, "footprint", footprint.clone()));
    let b = queue.submit(spec(&run, "footprint", footprint.clone()));
    let c = queue.submit(spec(&run, "importances", json!({"method": "lpi"})));
    println!("submitted {a}, {b} (same job), {c}");

    for id in [&a, &c] {
        let t = Instant::now();
        let v = queue.wait(id, Duration::from_secs(120)).expect("known job");
        let size = v.result.as_ref().map_or(0, |r| r.len());
        println!("{id} {:?} {:?} after {:?}, {size} bytes", v.plugin.as_str(), v.state, t.elapsed());
    }

    let again = queue.submit(spec(&run, "footprint", footprint));
    let hit = queue.status(&again).expect("known job");
    let first = queue.status(&a).expect("known job");
    println!(
        "resubmitted as {again}: {:?}, cached={}, identical bytes={}",
        hit.state,
        hit.cached,
        hit.result == first.result
    );
    println!("{} entries in {}", DiskCache::open(cache_dir.path())?.len(), cache_dir.path().display());
    Ok(())
}
