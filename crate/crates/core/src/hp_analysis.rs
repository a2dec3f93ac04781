//! Hyperparameter-centric analyses built on the forest surrogate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::encoding::{columns, encode_config, encode_run, sample_config, Column, INACTIVE};
use crate::error::{Error, Result};
use crate::run_model::{
    incumbent, BudgetSelect, Config, ConfigurationSpace, Direction, HpValue, Run, TrialStatus,
};
use crate::surrogate::{
    fit, marginal_cells, mean_and_variance, tree_marginal, tree_total_variance, Forest,
    ForestParams, Surrogate,
};

pub const DEFAULT_GRID_SIZE: usize = 20;
pub const DEFAULT_PDP_SAMPLES: usize = 50;
pub const DEFAULT_MAX_LINES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    Fanova,
    Lpi,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceEntry {
    pub name: String,
    pub importance: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    pub objective: String,
    pub budget: BudgetSelect,
    /// One entry per hyperparameter, in space order.
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceReport {
    pub fn importance(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.importance)
    }

    /// Entries sorted by importance, highest first; ties keep space order.
    pub fn ranked(&self) -> Vec<&ImportanceEntry> {
        let mut out: Vec<&ImportanceEntry> = self.entries.iter().collect();
        out.sort_by(|a, b| b.importance.total_cmp(&a.importance));
        out
    }
}

fn population_std(values: &[f64]) -> f64 {
    mean_and_variance(values).1.sqrt()
}

fn success_matrix(
    run: &Run,
    objective: &str,
    budget: BudgetSelect,
    needed: usize,
) -> Result<crate::encoding::EncodedMatrix> {
    let matrix = match encode_run(run, objective, budget, &[TrialStatus::Success]) {
        Ok(m) => m,
        Err(Error::EmptySelection(_)) => return Err(Error::InsufficientData { needed, got: 0 }),
        Err(e) => return Err(e),
    };
    if matrix.n_rows() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: matrix.n_rows(),
        });
    }
    Ok(matrix)
}

fn fit_run(run: &Run, objective: &str, budget: BudgetSelect, params: &ForestParams) -> Result<Forest> {
    fit(&success_matrix(run, objective, budget, 2)?, params)
}

/// First-order variance shares per dimension, as (importance, spread).
///
/// For every tree the variance of its single-dimension marginal is divided
/// by the tree's total variance over the box; trees without variance are
/// skipped.
pub fn fanova_from_forest(forest: &Forest) -> Vec<(f64, f64)> {
    let kinds = forest.dims();
    let d = kinds.len();
    let per_tree: Vec<Option<Vec<f64>>> = forest
        .trees()
        .par_iter()
        .map(|tree| {
            let (_, total) = tree_total_variance(tree, kinds);
            if total <= 0.0 {
                return None;
            }
            let shares = (0..d)
                .map(|u| {
                    let cells = marginal_cells(tree, kinds[u], u);
                    let values: Vec<(f64, f64)> = cells
                        .iter()
                        .map(|(w, rep)| {
                            let m = tree_marginal(tree, kinds, &[u], &[*rep])
                                .expect("cell representatives lie in the box");
                            (*w, m)
                        })
                        .collect();
                    let mean: f64 = values.iter().map(|(w, m)| w * m).sum();
                    let var: f64 = values.iter().map(|(w, m)| w * (m - mean).powi(2)).sum();
                    (var / total).clamp(0.0, 1.0)
                })
                .collect();
            Some(shares)
        })
        .collect();
    let used: Vec<Vec<f64>> = per_tree.into_iter().flatten().collect();
    (0..d)
        .map(|u| {
            if used.is_empty() {
                return (0.0, 0.0);
            }
            let column: Vec<f64> = used.iter().map(|s| s[u]).collect();
            let (mean, var) = mean_and_variance(&column);
            (mean, var.sqrt())
        })
        .collect()
}

fn report(
    method: ImportanceMethod,
    objective: &str,
    budget: BudgetSelect,
    space: &ConfigurationSpace,
    values: Vec<(f64, f64)>,
) -> ImportanceReport {
    ImportanceReport {
        method,
        objective: objective.to_string(),
        budget,
        entries: space
            .iter()
            .zip(values)
            .map(|(hp, (importance, spread))| ImportanceEntry {
                name: hp.name.clone(),
                importance,
                spread,
            })
            .collect(),
    }
}

/// Global importance from the functional ANOVA decomposition of a forest
/// fitted on the successful trials.
pub fn fanova(
    run: &Run,
    objective: &str,
    budget: BudgetSelect,
    params: &ForestParams,
) -> Result<ImportanceReport> {
    let needed = 2.max(run.space().len() + 1);
    let matrix = success_matrix(run, objective, budget, needed)?;
    let forest = fit(&matrix, params)?;
    Ok(report(
        ImportanceMethod::Fanova,
        objective,
        budget,
        run.space(),
        fanova_from_forest(&forest),
    ))
}

/// Local importance around `center`: each dimension is swept over its grid
/// with the others held fixed. Dimensions inactive at `center` get zero.
pub fn lpi_from_surrogate<S: Surrogate + ?Sized>(
    surrogate: &S,
    columns: &[Column],
    center: &[f64],
    grid_size: usize,
) -> Result<Vec<(f64, f64)>> {
    if center.len() != surrogate.n_dims() || columns.len() != center.len() {
        return Err(Error::DimensionMismatch {
            expected: surrogate.n_dims(),
            got: center.len(),
        });
    }
    // variance over the grid of the ensemble mean, and of each member
    let sweeps: Vec<(f64, Vec<f64>)> = columns
        .par_iter()
        .enumerate()
        .map(|(u, column)| {
            if center[u] == INACTIVE {
                return (0.0, Vec::new());
            }
            let members: Vec<Vec<f64>> = column
                .grid(grid_size)
                .into_iter()
                .map(|g| {
                    let mut x = center.to_vec();
                    x[u] = g;
                    surrogate.member_predictions(&x)
                })
                .collect();
            let means: Vec<f64> = members.iter().map(|m| mean_and_variance(m).0).collect();
            let n_members = members.first().map_or(0, Vec::len);
            let per_member = (0..n_members)
                .map(|t| {
                    let along: Vec<f64> = members.iter().map(|m| m[t]).collect();
                    mean_and_variance(&along).1
                })
                .collect();
            (mean_and_variance(&means).1, per_member)
        })
        .collect();

    let total: f64 = sweeps.iter().map(|(v, _)| v).sum();
    let n_members = sweeps.iter().map(|(_, m)| m.len()).max().unwrap_or(0);
    let member_totals: Vec<f64> = (0..n_members)
        .map(|t| sweeps.iter().filter_map(|(_, m)| m.get(t)).sum())
        .collect();
    Ok(sweeps
        .iter()
        .map(|(v, members)| {
            let importance = if total > 0.0 { v / total } else { 0.0 };
            let shares: Vec<f64> = member_totals
                .iter()
                .enumerate()
                .filter(|(_, tot)| **tot > 0.0)
                .map(|(t, tot)| members.get(t).copied().unwrap_or(0.0) / tot)
                .collect();
            (importance, population_std(&shares))
        })
        .collect())
}

fn incumbent_config<'a>(run: &'a Run, objective: &str, budget: BudgetSelect) -> Result<&'a Config> {
    let inc = incumbent(run, objective, budget)?.ok_or_else(|| {
        Error::NoIncumbent(format!("run `{}` has no successful trial for `{objective}`", run.name()))
    })?;
    run.config(&inc.config_id)
        .ok_or_else(|| Error::InvalidInput(format!("unknown config `{}`", inc.config_id)))
}

/// Local parameter importance at the incumbent.
pub fn lpi(
    run: &Run,
    objective: &str,
    budget: BudgetSelect,
    params: &ForestParams,
    grid_size: usize,
) -> Result<ImportanceReport> {
    run.objective(objective)?;
    run.check_budget(budget)?;
    let target = incumbent_config(run, objective, budget)?;
    let forest = fit_run(run, objective, budget, params)?;
    let cols = columns(run.space());
    let center = encode_config(run.space(), target)?;
    let values = lpi_from_surrogate(&forest, &cols, &center, grid_size)?;
    Ok(report(ImportanceMethod::Lpi, objective, budget, run.space(), values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationStep {
    pub name: String,
    pub value: HpValue,
    /// Predicted objective after the step.
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationPath {
    pub origin: Config,
    pub target: Config,
    pub origin_prediction: f64,
    pub steps: Vec<AblationStep>,
}

fn predict_config<S: Surrogate + ?Sized>(
    surrogate: &S,
    space: &ConfigurationSpace,
    config: &Config,
) -> Result<f64> {
    Ok(surrogate.predict(&encode_config(space, config)?)?.0)
}

fn apply_step(space: &ConfigurationSpace, current: &Config, target: &Config, name: &str) -> Config {
    let mut next = current.clone();
    next.insert(name.to_string(), target[name].clone());
    space.complete_activation(&mut next, |hp| {
        target.get(&hp.name).cloned().unwrap_or_else(|| hp.default.clone())
    });
    next
}

/// Greedy path from `origin` to `target`: every step switches the single
/// hyperparameter whose target value gives the best prediction. Children
/// activated by a switched parent take their target value (or default)
/// within the same step.
pub fn ablation_with<S: Surrogate + ?Sized>(
    surrogate: &S,
    space: &ConfigurationSpace,
    direction: Direction,
    origin: &Config,
    target: &Config,
) -> Result<AblationPath> {
    let origin_prediction = predict_config(surrogate, space, origin)?;
    let mut current = origin.clone();
    let mut steps = Vec::new();
    loop {
        let candidates: Vec<&str> = space
            .iter()
            .map(|hp| hp.name.as_str())
            .filter(|name| match (current.get(*name), target.get(*name)) {
                (Some(a), Some(b)) => a != b,
                _ => false,
            })
            .collect();
        if candidates.is_empty() {
            break;
        }
        let mut best: Option<(Config, &str, f64)> = None;
        for name in candidates {
            let next = apply_step(space, &current, target, name);
            let p = predict_config(surrogate, space, &next)?;
            if best.as_ref().map_or(true, |(_, _, b)| direction.better(p, *b)) {
                best = Some((next, name, p));
            }
        }
        let (next, name, prediction) = best.expect("candidates are non-empty");
        steps.push(AblationStep {
            name: name.to_string(),
            value: target[name].clone(),
            prediction,
        });
        current = next;
    }
    Ok(AblationPath {
        origin: origin.clone(),
        target: target.clone(),
        origin_prediction,
        steps,
    })
}

/// Ablation from the space default to the incumbent.
pub fn ablation_path(
    run: &Run,
    objective: &str,
    budget: BudgetSelect,
    params: &ForestParams,
) -> Result<AblationPath> {
    let direction = run.objective(objective)?.direction;
    run.check_budget(budget)?;
    let target = incumbent_config(run, objective, budget)?;
    let forest = fit_run(run, objective, budget, params)?;
    ablation_with(&forest, run.space(), direction, &run.space().default_config(), target)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdpCurve {
    pub hp: String,
    /// Encoded grid values.
    pub grid: Vec<f64>,
    /// Grid values in the hyperparameter's own units.
    pub display: Vec<HpValue>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Partial dependence of `surrogate` on one hyperparameter, averaged over
/// `n_samples` random valid configurations.
pub fn pdp_with<S: Surrogate + ?Sized>(
    surrogate: &S,
    space: &ConfigurationSpace,
    hp: &str,
    grid_size: usize,
    n_samples: usize,
    seed: u64,
) -> Result<PdpCurve> {
    let u = space
        .index_of(hp)
        .ok_or_else(|| Error::UnknownHyperparameter(hp.to_string()))?;
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    let cols = columns(space);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| encode_config(space, &sample_config(space, &mut rng)))
        .collect::<Result<_>>()?;
    let grid = cols[u].grid(grid_size);
    let (mean, std): (Vec<f64>, Vec<f64>) = grid
        .par_iter()
        .map(|g| {
            let mut mean = 0.0;
            let mut std = 0.0;
            for s in &samples {
                let mut x = s.clone();
                x[u] = *g;
                let (m, v) = mean_and_variance(&surrogate.member_predictions(&x));
                mean += m;
                std += v.sqrt();
            }
            (mean / n_samples as f64, std / n_samples as f64)
        })
        .unzip();
    Ok(PdpCurve {
        hp: hp.to_string(),
        display: grid.iter().map(|g| cols[u].decode(*g)).collect(),
        grid,
        mean,
        std,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn pdp(
    run: &Run,
    objective: &str,
    budget: BudgetSelect,
    hp: &str,
    params: &ForestParams,
    grid_size: usize,
    n_samples: usize,
    seed: u64,
) -> Result<PdpCurve> {
    if run.space().get(hp).is_none() {
        return Err(Error::UnknownHyperparameter(hp.to_string()));
    }
    let forest = fit_run(run, objective, budget, params)?;
    pdp_with(&forest, run.space(), hp, grid_size, n_samples, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Hyperparameter,
    Objective,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub kind: AxisKind,
    /// fANOVA importance used for the ordering, when available.
    pub importance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Line {
    pub config_id: String,
    /// One value per axis; `None` where the hyperparameter is inactive.
    pub values: Vec<Option<HpValue>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParallelCoordsData {
    pub axes: Vec<Axis>,
    pub lines: Vec<Line>,
}

/// Lines for the best `max_lines` configurations, with hyperparameter axes
/// ordered by fANOVA importance and the objective last.
pub fn parallel_coordinates(
    run: &Run,
    objective: &str,
    budget: BudgetSelect,
    hp_subset: Option<&[String]>,
    max_lines: usize,
    params: &ForestParams,
) -> Result<ParallelCoordsData> {
    let direction = run.objective(objective)?.direction;
    run.check_budget(budget)?;
    let mut best = run.best_per_config(objective, budget)?;
    if best.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no configurations with a value for `{objective}`"
        )));
    }
    if let Some(subset) = hp_subset {
        if let Some(unknown) = subset.iter().find(|n| run.space().get(n).is_none()) {
            return Err(Error::UnknownHyperparameter(unknown.clone()));
        }
    }
    best.sort_by(|a, b| direction.cmp_best_first(a.1, b.1));
    best.truncate(max_lines);

    let importances = match fanova(run, objective, budget, params) {
        Ok(r) => Some(r),
        Err(Error::InsufficientData { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut order: Vec<(usize, Option<f64>)> = run
        .space()
        .iter()
        .enumerate()
        .filter(|(_, hp)| hp_subset.map_or(true, |s| s.contains(&hp.name)))
        .map(|(i, _)| (i, importances.as_ref().map(|r| r.entries[i].importance)))
        .collect();
    order.sort_by(|a, b| b.1.unwrap_or(0.0).total_cmp(&a.1.unwrap_or(0.0)));

    let hps: Vec<_> = run.space().iter().collect();
    let mut axes: Vec<Axis> = order
        .iter()
        .map(|(i, imp)| Axis {
            name: hps[*i].name.clone(),
            kind: AxisKind::Hyperparameter,
            importance: *imp,
        })
        .collect();
    axes.push(Axis {
        name: objective.to_string(),
        kind: AxisKind::Objective,
        importance: None,
    });
    let lines = best
        .iter()
        .map(|(config_id, value, _)| {
            let config = run.config(config_id).expect("selected configs exist");
            let mut values: Vec<Option<HpValue>> = order
                .iter()
                .map(|(i, _)| config.get(&hps[*i].name).cloned())
                .collect();
            values.push(Some(HpValue::Float(*value)));
            Line {
                config_id: config_id.to_string(),
                values,
            }
        })
        .collect();
    Ok(ParallelCoordsData { axes, lines })
}
