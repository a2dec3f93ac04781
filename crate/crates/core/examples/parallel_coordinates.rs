//! Parallel-coordinates data: axes ordered by importance, one line per
//! configuration.
//!
//!     cargo run --example parallel_coordinates

use hpolens_core::hp_analysis::parallel_coordinates;
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
    let run = mixed_run("pc", 6, 200, 5)?;
    let data = parallel_coordinates(&run, "loss", BudgetSelect::Highest, None, 10, &ForestParams::default())?;
    let header: Vec<String> = data.axes.iter().map(|a| format!("{:>10}", a.name)).collect();
    println!("{:<8}{}", "config", header.join(""));
    let importances: Vec<String> = data
        .axes
        .iter()
        .map(|a| a.importance.map_or(format!("{:>10}", ""), |i| format!("{i:>10.3}")))
        .collect();
    println!("{:<8}{}", "imp", importances.join(""));
    for line in &data.lines {
        let cells: Vec<String> = line
            .values
            .iter()
            .map(|v| match v {
                Some(v) => format!("{:>10}", short(v)),
                None => format!("{:>10}", "-"),
            })
            .collect();
        println!("{:<8}{}", line.config_id, cells.join(""));
    }
    Ok(())
}
