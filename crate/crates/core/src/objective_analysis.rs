//! Convergence trajectories and two-objective Pareto fronts.

use serde::{Deserialize, Serialize};

use crate::encoding::budget_label;
use crate::error::{Error, Result};
use crate::run_model::{BudgetSelect, Direction, Run, RunSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    /// Wallclock seconds, using the time each result became available.
    Time,
    /// 1-based position in the trial log.
    Trials,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub x_axis: XAxis,
    pub direction: Direction,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Population std across group members; absent for a single run.
    pub std: Option<Vec<f64>>,
}

/// Incumbent trajectory of one run, or `None` if nothing qualifies.
fn run_trajectory(
    run: &Run,
    objective: &str,
    budget: BudgetSelect,
    x_axis: XAxis,
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let direction = run.objective(objective)?.direction;
    let selected = run.selected_trial_indices(objective, budget);
    let trials = run.trials();
    let mut xs = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    match x_axis {
        XAxis::Trials => {
            let mut best: Option<f64> = None;
            for i in selected {
                let v = trials[i].value(objective).expect("selected");
                if best.map_or(true, |b| direction.better(v, b)) {
                    best = Some(v);
                }
                xs.push((i + 1) as f64);
                ys.push(best.expect("set above"));
            }
            let last = trials.len() as f64;
            if let (Some(&x), Some(&y)) = (xs.last(), ys.last()) {
                if last > x {
                    xs.push(last);
                    ys.push(y);
                }
            }
        }
        XAxis::Time => {
            let mut events: Vec<(f64, usize, f64)> = selected
                .into_iter()
                .filter_map(|i| {
                    let t = &trials[i];
                    t.end.map(|end| (end, i, t.value(objective).expect("selected")))
                })
                .collect();
            events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (end, _, v) in events {
                let improves = ys.last().map_or(true, |b| direction.better(v, *b));
                if !improves {
                    continue;
                }
                if xs.last() == Some(&end) {
                    *ys.last_mut().expect("non-empty") = v;
                } else {
                    xs.push(end);
                    ys.push(v);
                }
            }
            let last_end = trials
                .iter()
                .filter_map(|t| t.end)
                .fold(f64::NEG_INFINITY, f64::max);
            if let (Some(&x), Some(&y)) = (xs.last(), ys.last()) {
                if last_end > x {
                    xs.push(last_end);
                    ys.push(y);
                }
            }
        }
    }
    Ok((!xs.is_empty()).then_some((xs, ys)))
}

/// Step-function trajectory of the incumbent over time or trial count.
///
/// For groups, every member is evaluated on the union of the members'
/// x-values with last-value interpolation; `ys` is the mean and `std` the
/// population standard deviation across the members that already have an
/// incumbent at that x.
pub fn cost_over_time<R: RunSet + ?Sized>(
    runs: &R,
    objective: &str,
    budget: BudgetSelect,
    x_axis: XAxis,
) -> Result<Trajectory> {
    let members = runs.runs();
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidInput("no runs selected".into()))?;
    let direction = first.objective(objective)?.direction;
    if !runs.is_group() {
        first.check_budget(budget)?;
    }
    let mut curves = Vec::new();
    for run in &members {
        if let Some(curve) = run_trajectory(run, objective, budget, x_axis)? {
            curves.push(curve);
        }
    }
    if curves.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no successful trials for `{objective}` at budget {}",
            budget_label(budget)
        )));
    }
    if !runs.is_group() {
        let (xs, ys) = curves.pop().expect("one curve");
        return Ok(Trajectory {
            x_axis,
            direction,
            xs,
            ys,
            std: None,
        });
    }

    let mut grid: Vec<f64> = curves.iter().flat_map(|(xs, _)| xs.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut ys = Vec::with_capacity(grid.len());
    let mut std = Vec::with_capacity(grid.len());
    for &x in &grid {
        let values: Vec<f64> = curves
            .iter()
            .filter_map(|(cx, cy)| {
                let upto = cx.partition_point(|v| *v <= x);
                (upto > 0).then(|| cy[upto - 1])
            })
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        ys.push(mean);
        std.push(var.sqrt());
    }
    Ok(Trajectory {
        x_axis,
        direction,
        xs: grid,
        ys,
        std: Some(std),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub run_id: String,
    pub config_id: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoResult {
    pub objective_a: String,
    pub objective_b: String,
    pub points: Vec<ParetoPoint>,
    pub frontier: Vec<bool>,
}

impl ParetoResult {
    pub fn frontier_points(&self) -> impl Iterator<Item = &ParetoPoint> {
        self.points
            .iter()
            .zip(&self.frontier)
            .filter(|(_, f)| **f)
            .map(|(p, _)| p)
    }
}

/// Marks the non-dominated points. A point is dominated when another point
/// is at least as good in both coordinates and strictly better in one;
/// duplicates therefore never dominate each other.
pub fn non_dominated(points: &[(f64, f64)], directions: (Direction, Direction)) -> Vec<bool> {
    let flip = |d: Direction, v: f64| match d {
        Direction::Minimize => v,
        Direction::Maximize => -v,
    };
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(a, b)| (flip(directions.0, a), flip(directions.1, b)))
        .collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| pts[i].0.total_cmp(&pts[j].0).then(pts[i].1.total_cmp(&pts[j].1)));

    let mut flags = vec![false; pts.len()];
    let mut best_before = f64::INFINITY;
    let mut start = 0;
    while start < order.len() {
        let a = pts[order[start]].0;
        let mut end = start;
        while end < order.len() && pts[order[end]].0 == a {
            end += 1;
        }
        // sorted by b within the group, so the first entry holds the group minimum
        let group_min = pts[order[start]].1;
        for &i in &order[start..end] {
            let b = pts[i].1;
            flags[i] = b == group_min && b < best_before;
        }
        best_before = best_before.min(group_min);
        start = end;
    }
    flags
}

/// Pareto front over two objectives, using each configuration's best value
/// per objective at the selected budget.
pub fn pareto_front<R: RunSet + ?Sized>(
    runs: &R,
    objective_a: &str,
    objective_b: &str,
    budget: BudgetSelect,
) -> Result<ParetoResult> {
    if objective_a == objective_b {
        return Err(Error::InvalidInput(format!(
            "the two objectives must differ, both are `{objective_a}`"
        )));
    }
    let members = runs.runs();
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidInput("no runs selected".into()))?;
    let directions = (
        first.objective(objective_a)?.direction,
        first.objective(objective_b)?.direction,
    );
    if !runs.is_group() {
        first.check_budget(budget)?;
    }
    let mut points = Vec::new();
    for run in members {
        let best_a = run.best_per_config(objective_a, budget)?;
        let best_b = run.best_per_config(objective_b, budget)?;
        let lookup: std::collections::HashMap<&str, f64> =
            best_b.iter().map(|(c, v, _)| (*c, *v)).collect();
        for (config_id, a, _) in best_a {
            if let Some(&b) = lookup.get(config_id) {
                points.push(ParetoPoint {
                    run_id: run.id().to_string(),
                    config_id: config_id.to_string(),
                    a,
                    b,
                });
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no configuration has successful values for both `{objective_a}` and `{objective_b}` at budget {}",
            budget_label(budget)
        )));
    }
    let coords: Vec<(f64, f64)> = points.iter().map(|p| (p.a, p.b)).collect();
    let frontier = non_dominated(&coords, directions);
    Ok(ParetoResult {
        objective_a: objective_a.to_string(),
        objective_b: objective_b.to_string(),
        points,
        frontier,
    })
}
