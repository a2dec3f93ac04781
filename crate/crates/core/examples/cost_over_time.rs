//! Best-so-far trajectories for a single run and for a group of seeds.
//!
//!     cargo run --example cost_over_time

use std::sync::Arc;

use hpolens_core::objective_analysis::{cost_over_time, XAxis};
use hpolens_core::run_model::{group_runs, BudgetSelect};
use hpolens_core::synthetic::mixed_run;

fn main() -> hpolens_core::Result<()> {
    let runs: Vec<_> = (0..3).map(|s| mixed_run(&format!("seed{s}"), 8, 150, s).map(Arc::new)).collect::<Result<_, _>>()?;

    let single = cost_over_time(&*runs[0], "loss", BudgetSelect::Highest, XAxis::Trials)?;
    println!("single run, {} improvements", single.xs.len());
    for (x, y) in single.xs.iter().zip(&single.ys).take(10) {
        println!("  trial {x:>4}  loss {y:.4}");
    }

    let group = group_runs("three seeds", runs)?;
    let t = cost_over_time(&group, "loss", BudgetSelect::Highest, XAxis::Time)?;
    let std = t.std.unwrap_or_default();
    println!("group mean over {} time points", t.xs.len());
    for i in (0..t.xs.len()).step_by((t.xs.len() / 8).max(1)) {
        println!("  t={:>8.1}s  {:.4} +- {:.4}", t.xs[i], t.ys[i], std[i]);
    }
    Ok(())
}
