//! Rank correlation of results across fidelity levels.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::run_model::{BudgetSelect, Run};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationCell {
    /// Spearman's rho, or `None` when undefined.
    pub rho: Option<f64>,
    pub n_common: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetCorrelation {
    pub objective: String,
    pub budgets: Vec<f64>,
    pub matrix: Vec<Vec<CorrelationCell>>,
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` with fewer than two pairs or when either side has no variance.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise Spearman correlation of per-configuration results between every
/// pair of budgets. Each configuration contributes its best successful value
/// at a budget.
pub fn budget_correlation(run: &Run, objective: &str) -> Result<BudgetCorrelation> {
    run.objective(objective)?;
    let budgets = run.budgets().to_vec();
    if budgets.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "budget correlation needs at least two budgets, run `{}` has {}",
            run.name(),
            budgets.len()
        )));
    }
    let per_budget: Vec<BTreeMap<&str, f64>> = budgets
        .iter()
        .map(|b| {
            run.best_per_config(objective, BudgetSelect::At(*b))
                .map(|v| v.into_iter().map(|(c, val, _)| (c, val)).collect())
        })
        .collect::<Result<_>>()?;

    let k = budgets.len();
    let empty = CorrelationCell {
        rho: None,
        n_common: 0,
    };
    let mut matrix = vec![vec![empty; k]; k];
    for i in 0..k {
        for j in i..k {
            let (xs, ys): (Vec<f64>, Vec<f64>) = per_budget[i]
                .iter()
                .filter_map(|(c, v)| per_budget[j].get(c).map(|w| (*v, *w)))
                .unzip();
            let n_common = xs.len();
            let rho = if i == j {
                (n_common >= 2).then_some(1.0)
            } else {
                spearman(&xs, &ys)
            };
            let cell = CorrelationCell { rho, n_common };
            matrix[i][j] = cell;
            matrix[j][i] = cell;
        }
    }
    Ok(BudgetCorrelation {
        objective: objective.to_string(),
        budgets,
        matrix,
    })
}
