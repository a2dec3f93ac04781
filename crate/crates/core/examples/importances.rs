//! Global (fANOVA) and local (LPI) hyperparameter importance.
//!
//!     cargo run --example importances

use hpolens_core::hp_analysis::{fanova, lpi, DEFAULT_GRID_SIZE};
use hpolens_core::run_model::BudgetSelect;
use hpolens_core::surrogate::ForestParams;
use hpolens_core::synthetic::unit_cube_run;

fn main() -> hpolens_core::Result<()> {
    // x1 dominates, x2 and x3 interact weakly, x4 is noise
    let run = unit_cube_run("imp", 4, 400, 0, |x| 4.0 * x[0] + x[1] * x[2])?;
    let params = ForestParams::default();
    let global = fanova(&run, "loss", BudgetSelect::Highest, &params)?;
    let local = lpi(&run, "loss", BudgetSelect::Highest, &params, DEFAULT_GRID_SIZE)?;

    println!("{:<6} {:>16} {:>16}", "hp", "fanova", "lpi");
    for e in global.ranked() {
        let l = local.entries.iter().find(|l| l.name == e.name).expect("same space");
        println!(
            "{:<6} {:>8.3} +- {:<5.3} {:>8.3} +- {:<5.3}",
            e.name, e.importance, e.spread, l.importance, l.spread
        );
    }
    Ok(())
}
