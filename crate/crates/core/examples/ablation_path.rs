//! Greedy path from the default configuration to the incumbent.
//!
//!     cargo run --example ablation_path

use hpolens_core::hp_analysis::ablation_path;
use hpolens_core::run_model::{BudgetSelect, HpValue};
use hpolens_core::surrogate::ForestParams;
use hpolens_core::synthetic::mixed_run;

fn short(v: &HpValue) -> String {
    match v {
        HpValue::Float(f) if f.abs() < 1e-2 && *f != 0.0 => format!("{f:.2e}"),
        HpValue::Float(f) => format!("{f:.4}"),
        other => other.to_string(),
    }
}

fn main() -> hpolens_core::Result<()> {
    let run = mixed_run("ablation", 8, 400, 2)?;
    let path = ablation_path(&run, "loss", BudgetSelect::Highest, &ForestParams::default())?;
    println!("{:<10} {:>14} {:>10}", "change", "to", "predicted");
    println!("{:<10} {:>14} {:>10.4}", "(default)", "", path.origin_prediction);
    for step in &path.steps {
        println!("{:<10} {:>14} {:>10.4}", step.name, short(&step.value), step.prediction);
    }
    Ok(())
}
