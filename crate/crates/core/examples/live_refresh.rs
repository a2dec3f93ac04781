//! Follows a run whose trial log is still growing.
//!
//!     cargo run --example live_refresh

use std::io::Write;
use std::sync::Arc;

use hpolens_core::converters::{write_tabular, RunSource, TRIALS_FILE};
use hpolens_core::run_model::Run;
use hpolens_core::synthetic::mixed_run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let full = mixed_run("live", 6, 120, 3)?;
    let dir = tempfile::tempdir()?;

    // start with the first 20 trials on disk
    let head = Run::new(
        full.name(),
        full.space().clone(),
        full.objectives().to_vec(),
        full.budgets().to_vec(),
        full.configs().clone(),
        full.trials()[..20].to_vec(),
        full.meta().clone(),
    );
    write_tabular(&head, dir.path())?;
    let (mut source, run) = RunSource::open(dir.path())?;
    let mut run = Arc::new(run);
    println!("loaded {} trials", run.trials().len());

    let log = dir.path().join(TRIALS_FILE);
    for chunk in full.trials()[20..].chunks(25) {
        let mut f = std::fs::OpenOptions::new().append(true).open(&log)?;
        for t in chunk {
            writeln!(f, "{}", serde_json::to_string(t)?)?;
        }
        drop(f);
        let (next, changed) = source.refresh(&run)?;
        println!("refresh: changed={changed}, {} trials, content id {}", next.trials().len(), &next.id()[..12]);
        run = next;
    }
    let (_, changed) = source.refresh(&run)?;
    println!("idle refresh: changed={changed}");
    assert_eq!(*run, full);
    Ok(())
}
