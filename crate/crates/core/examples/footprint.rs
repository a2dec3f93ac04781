//! Two-dimensional footprint of the evaluated configurations.
//!
//!     cargo run --example footprint

use std::collections::BTreeMap;

use hpolens_core::footprint::compute_footprint;
use hpolens_core::run_model::BudgetSelect;
use hpolens_core::synthetic::mixed_run;

fn main() -> hpolens_core::Result<()> {
    let run = mixed_run("footprint", 6, 150, 6)?;
    let fp = compute_footprint(&run, "loss", BudgetSelect::Highest, 50, 100, 0)?;
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    for p in &fp.points {
        *by_kind.entry(format!("{:?}", p.kind)).or_default() += 1;
    }
    println!("{} points, normalized stress {:.4}", fp.points.len(), fp.stress);
    for (kind, n) in by_kind {
        println!("  {kind:<14} {n}");
    }

    // coarse ascii scatter: evaluated points by value, borders as '+'
    let (w, h) = (60usize, 20usize);
    let xs = fp.points.iter().map(|p| p.x);
    let ys = fp.points.iter().map(|p| p.y);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let mut grid = vec![vec![' '; w]; h];
    for p in &fp.points {
        let c = (((p.x - x0) / (x1 - x0).max(1e-12)) * (w - 1) as f64) as usize;
        let r = (((p.y - y0) / (y1 - y0).max(1e-12)) * (h - 1) as f64) as usize;
        let glyph = match (p.kind, p.value) {
            (hpolens_core::footprint::PointKind::Incumbent, _) => '@',
            (hpolens_core::footprint::PointKind::Border, _) => '+',
            (hpolens_core::footprint::PointKind::RandomSupport, _) => '.',
            (_, Some(_)) => 'o',
            _ => '?',
        };
        if grid[r][c] != '@' {
            grid[r][c] = glyph;
        }
    }
    for row in grid {
        println!("|{}|", row.into_iter().collect::<String>());
    }
    Ok(())
}
