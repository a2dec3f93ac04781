use std::time::Instant;

use hpolens_core::budget_analysis::budget_correlation;
use hpolens_core::footprint::compute_footprint;
use hpolens_core::hp_analysis::{ablation_path, fanova, lpi, parallel_coordinates, pdp};
use hpolens_core::objective_analysis::{cost_over_time, pareto_front, XAxis};
use hpolens_core::run_model::BudgetSelect;
use hpolens_core::surrogate::ForestParams;
use hpolens_core::synthetic::mixed_run;

fn main() -> hpolens_core::Result<()> {
    let t = Instant::now();
    let run = mixed_run("scale", 39, 1000, 0)?;
    println!("generate {:?}", t.elapsed());
    let p = ForestParams::default();
    let b = BudgetSelect::Highest;
    macro_rules! time {
        ($name:expr, $e:expr) => {{
            let t = Instant::now();
            let _ = $e?;
            println!("{:<22} {:?}", $name, t.elapsed());
        }};
    }
    time!("footprint", compute_footprint(&run, "loss", b, 50, 100, 0));
    time!("fanova", fanova(&run, "loss", b, &p));
    time!("lpi", lpi(&run, "loss", b, &p, 20));
    time!("ablation", ablation_path(&run, "loss", b, &p));
    time!("pdp", pdp(&run, "loss", b, "hp00", &p, 20, 50, 0));
    time!("parallel_coordinates", parallel_coordinates(&run, "loss", b, None, 200, &p));
    time!("cost_over_time", cost_over_time(&run, "loss", b, XAxis::Time));
    time!("pareto", pareto_front(&run, "loss", "cost", b));
    time!("budget_correlation", budget_correlation(&run, "loss"));
    Ok(())
}
