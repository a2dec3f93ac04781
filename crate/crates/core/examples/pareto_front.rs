//! Non-dominated configurations for two objectives.
//!
//!     cargo run --example pareto_front

use hpolens_core::objective_analysis::pareto_front;
use hpolens_core::run_model::BudgetSelect;
use hpolens_core::synthetic::mixed_run;

fn main() -> hpolens_core::Result<()> {
    let run = mixed_run("pareto", 8, 300, 1)?;
    let front = pareto_front(&run, "loss", "cost", BudgetSelect::Highest)?;
    let mut best: Vec<_> = front.frontier_points().collect();
    best.sort_by(|a, b| a.a.total_cmp(&b.a));
    println!("{} of {} configurations are non-dominated", best.len(), front.points.len());
    println!("{:>10} {:>10}  config", "loss", "cost");
    for p in best {
        println!("{:>10.4} {:>10.4}  {}", p.a, p.b, p.config_id);
    }
    Ok(())
}
