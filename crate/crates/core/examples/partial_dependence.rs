//! Partial dependence of the loss on one hyperparameter.
//!
//!     cargo run --example partial_dependence [HP]

use hpolens_core::hp_analysis::{pdp, DEFAULT_GRID_SIZE, DEFAULT_PDP_SAMPLES};
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
    let hp = std::env::args().nth(1).unwrap_or_else(|| "hp01".into());
    let run = mixed_run("pdp", 6, 300, 4)?;
    let curve = pdp(
        &run,
        "loss",
        BudgetSelect::Highest,
        &hp,
        &ForestParams::default(),
        DEFAULT_GRID_SIZE,
        DEFAULT_PDP_SAMPLES,
        0,
    )?;
    let lo = curve.mean.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = curve.mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for ((v, m), s) in curve.display.iter().zip(&curve.mean).zip(&curve.std) {
        let bar = if hi > lo { ((m - lo) / (hi - lo) * 40.0).round() as usize } else { 0 };
        println!("{:>12} {m:>8.4} +- {s:<6.4} {}", short(v), "#".repeat(bar));
    }
    Ok(())
}
