//! Run overview and configuration payloads.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use hpolens_core::encoding::encode_config;
use hpolens_core::run_model::{incumbent, status_counts, BudgetFilter, BudgetSelect, Run, Trial, TrialStatus};
use hpolens_core::{Error, Result};

fn counts_json(counts: &BTreeMap<TrialStatus, usize>) -> Value {
    counts
        .iter()
        .map(|(s, n)| (s.as_str().to_string(), Value::from(*n)))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn incumbents(run: &Run) -> Result<Vec<(String, Option<hpolens_core::run_model::Incumbent>)>> {
    run.objectives()
        .iter()
        .map(|o| Ok((o.name.clone(), incumbent(run, &o.name, BudgetSelect::Highest)?)))
        .collect()
}

/// Short description used by the run listing.
pub fn descriptor(handle: &str, run: &Run, live: bool) -> Value {
    json!({
        "id": handle,
        "content_id": run.id(),
        "name": run.name(),
        "objectives": run.objectives(),
        "budgets": run.budgets(),
        "n_trials": run.trials().len(),
        "live": live,
    })
}

/// Optimizer, space summary, status counts per budget, best configuration
/// per objective and run duration.
pub fn overview(handle: &str, run: &Run) -> Result<Value> {
    let mut status = vec![json!({
        "budget": "all",
        "counts": counts_json(&status_counts(run, BudgetFilter::All)?),
    })];
    for b in run.budgets() {
        status.push(json!({
            "budget": b,
            "counts": counts_json(&status_counts(run, BudgetFilter::At(*b))?),
        }));
    }
    let best: Vec<Value> = incumbents(run)?
        .into_iter()
        .map(|(objective, inc)| match inc {
            Some(i) => json!({
                "objective": objective,
                "config_id": i.config_id,
                "value": i.value,
                "budget": i.budget,
            }),
            None => json!({ "objective": objective, "config_id": null }),
        })
        .collect();
    let n_conditional = run.space().iter().filter(|h| h.condition.is_some()).count();
    Ok(json!({
        "id": handle,
        "content_id": run.id(),
        "name": run.name(),
        "optimizer": run.optimizer(),
        "meta": run.meta(),
        "space": {
            "n_hyperparameters": run.space().len(),
            "n_conditional": n_conditional,
            "hyperparameters": run.space(),
        },
        "objectives": run.objectives(),
        "budgets": run.budgets(),
        "n_configs": run.configs().len(),
        "n_trials": run.trials().len(),
        "status": status,
        "best": best,
        "duration": run.duration(),
    }))
}

fn best_values(run: &Run, trials: &[&Trial]) -> Value {
    run.objectives()
        .iter()
        .map(|o| {
            let best = trials
                .iter()
                .filter(|t| t.status == TrialStatus::Success)
                .filter_map(|t| t.value(&o.name))
                .fold(None, |acc: Option<f64>, v| match acc {
                    Some(b) if !o.direction.better(v, b) => Some(b),
                    _ => Some(v),
                });
            (o.name.clone(), json!(best))
        })
        .collect::<serde_json::Map<_, _>>()
        .into()
}

/// Values, encoding, per-budget results and incumbent status of one
/// configuration.
pub fn config_detail(handle: &str, run: &Run, config_id: &str) -> Result<Value> {
    let config = run
        .config(config_id)
        .ok_or_else(|| Error::InvalidInput(format!("unknown configuration `{config_id}`")))?;
    let trials: Vec<&Trial> = run.trials().iter().filter(|t| t.config_id == config_id).collect();
    let incumbent_for: Vec<String> = incumbents(run)?
        .into_iter()
        .filter(|(_, inc)| inc.as_ref().is_some_and(|i| i.config_id == config_id))
        .map(|(o, _)| o)
        .collect();
    let budgets: Vec<Value> = run
        .budgets()
        .iter()
        .filter_map(|b| {
            let at: Vec<&Trial> = trials.iter().copied().filter(|t| t.budget == *b).collect();
            if at.is_empty() {
                return None;
            }
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for t in &at {
                *counts.entry(t.status.as_str()).or_default() += 1;
            }
            Some(json!({
                "budget": b,
                "n_trials": at.len(),
                "statuses": counts,
                "objectives": best_values(run, &at),
            }))
        })
        .collect();
    Ok(json!({
        "run_id": handle,
        "config_id": config_id,
        "values": config,
        "encoded": encode_config(run.space(), config)?,
        "incumbent": !incumbent_for.is_empty(),
        "incumbent_for": incumbent_for,
        "budgets": budgets,
        "trials": trials,
    }))
}

/// Every configuration with its values and best result per objective.
pub fn config_table(handle: &str, run: &Run) -> Result<Value> {
    let rows: Vec<Value> = run
        .configs()
        .iter()
        .map(|(id, config)| {
            let trials: Vec<&Trial> = run.trials().iter().filter(|t| &t.config_id == id).collect();
            json!({
                "config_id": id,
                "values": config,
                "n_trials": trials.len(),
                "best": best_values(run, &trials),
            })
        })
        .collect();
    let names: Vec<&str> = run.objectives().iter().map(|o| o.name.as_str()).collect();
    Ok(json!({
        "run_id": handle,
        "objectives": names,
        "configs": rows,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hpolens_core::synthetic::mixed_run;

    #[test]
    fn status_table_sums_to_trial_count() {
        let run = mixed_run("o", 6, 80, 2).unwrap();
        let v = overview("o", &run).unwrap();
        let total: u64 = v["status"][0]["counts"]
            .as_object()
            .unwrap()
            .values()
            .map(|n| n.as_u64().unwrap())
            .sum();
        assert_eq!(total, 80);
    }

    #[test]
    fn incumbent_config_is_flagged() {
        let run = mixed_run("o", 6, 80, 2).unwrap();
        let inc = incumbent(&run, "loss", BudgetSelect::Highest).unwrap().unwrap();
        let v = config_detail("o", &run, &inc.config_id).unwrap();
        assert_eq!(v["incumbent"], true);
        // the first configuration is evaluated at budgets 1, 3 and 9
        let first = config_detail("o", &run, "c1").unwrap();
        assert_eq!(first["budgets"].as_array().unwrap().len(), 3);
    }
}
