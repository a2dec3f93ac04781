//! Rank agreement of the objective between budgets.
//!
//!     cargo run --example budget_correlation

use hpolens_core::budget_analysis::budget_correlation;
use hpolens_core::synthetic::mixed_run;

fn main() -> hpolens_core::Result<()> {
    let run = mixed_run("bc", 6, 500, 7)?;
    let table = budget_correlation(&run, "loss")?;
    print!("{:>8}", "");
    for b in &table.budgets {
        print!("{b:>15}");
    }
    println!();
    for (b, row) in table.budgets.iter().zip(&table.matrix) {
        print!("{b:>8}");
        for cell in row {
            match cell.rho {
                Some(r) => print!("{:>8.3} (n={:<3})", r, cell.n_common),
                None => print!("{:>15}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
