//! Writes a synthetic run in the tabular format, loads it back and prints
//! what the loader found.
//!
//!     cargo run --example load_and_validate [RUN_DIR]

use std::path::PathBuf;

use hpolens_core::converters::{detect_format, load_tabular, write_tabular, Format};
use hpolens_core::run_model::{status_counts, validate_run, BudgetFilter};
use hpolens_core::synthetic::mixed_run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let dir = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let dir = tmp.path().join("demo");
            write_tabular(&mixed_run("demo", 8, 200, 0)?, &dir)?;
            dir
        }
    };
    if detect_format(&dir)? != Format::Tabular {
        return Err(format!("{} is not a run directory", dir.display()).into());
    }
    let run = load_tabular(&dir)?;
    let optimizer = if run.optimizer().is_empty() { "unknown optimizer" } else { run.optimizer() };
    println!("run `{}` ({optimizer}), content id {}", run.name(), run.id());
    println!("  {} hyperparameters, {} configs, {} trials", run.space().len(), run.configs().len(), run.trials().len());
    for o in run.objectives() {
        println!("  objective {} ({:?})", o.name, o.direction);
    }
    println!("  budgets {:?}", run.budgets());
    for (status, n) in status_counts(&run, BudgetFilter::All)? {
        println!("  {:<14} {n}", status.as_str());
    }
    let problems = validate_run(&run);
    println!("{} validation problems", problems.len());
    for v in problems {
        println!("  {v}");
    }
    Ok(())
}
