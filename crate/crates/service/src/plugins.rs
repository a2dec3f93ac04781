//! Analysis plugins: parameter schemas, dispatch and payload encoding.
//!
//! The HTTP API and the `analyze` command both go through [`prepare`] and
//! [`JobSpec::payload`], so equal inputs give byte-identical payloads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{Map, Value};

use hpolens_core::budget_analysis::budget_correlation;
use hpolens_core::footprint::compute_footprint;
use hpolens_core::hp_analysis::{ablation_path, fanova, lpi, parallel_coordinates, pdp};
use hpolens_core::objective_analysis::{cost_over_time, pareto_front, XAxis};
use hpolens_core::run_model::{group_runs, BudgetSelect, Run};
use hpolens_core::surrogate::ForestParams;

use crate::error::RequestError;
use crate::overview::{config_detail, config_table, overview};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Plugin {
    Overview,
    Configurations,
    Footprint,
    CostOverTime,
    ParetoFront,
    ParallelCoordinates,
    Pdp,
    Importances,
    AblationPath,
    BudgetCorrelation,
}

impl Plugin {
    pub const ALL: [Plugin; 10] = [
        Plugin::Overview,
        Plugin::Configurations,
        Plugin::Footprint,
        Plugin::CostOverTime,
        Plugin::ParetoFront,
        Plugin::ParallelCoordinates,
        Plugin::Pdp,
        Plugin::Importances,
        Plugin::AblationPath,
        Plugin::BudgetCorrelation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Plugin::Overview => "overview",
            Plugin::Configurations => "configurations",
            Plugin::Footprint => "footprint",
            Plugin::CostOverTime => "cost_over_time",
            Plugin::ParetoFront => "pareto_front",
            Plugin::ParallelCoordinates => "parallel_coordinates",
            Plugin::Pdp => "pdp",
            Plugin::Importances => "importances",
            Plugin::AblationPath => "ablation_path",
            Plugin::BudgetCorrelation => "budget_correlation",
        }
    }

    /// Plugins that accept several runs (treated as a group).
    pub fn accepts_many_runs(self) -> bool {
        matches!(self, Plugin::CostOverTime | Plugin::ParetoFront)
    }

    pub fn params(self) -> Vec<ParamSpec> {
        use ParamKind::*;
        let objective = ParamSpec::new("objective", Objective);
        let budget = ParamSpec::new("budget", Budget);
        let seed = ParamSpec::new("seed", Seed);
        let forest = [
            ParamSpec::new("n_trees", Count { default: 16, min: 1 }),
            ParamSpec::new("max_depth", Count { default: 64, min: 1 }),
            ParamSpec::new("min_samples_leaf", Count { default: 1, min: 1 }),
            ParamSpec::new("bootstrap", Flag { default: true }),
            ParamSpec::new("max_features_ratio", Ratio { default: 5.0 / 6.0 }),
            seed,
        ];
        let mut out = match self {
            Plugin::Overview => vec![],
            Plugin::Configurations => vec![ParamSpec::new("config_id", ConfigId)],
            Plugin::Footprint => vec![
                objective,
                budget,
                ParamSpec::new("border_cap", Count { default: 50, min: 0 }),
                ParamSpec::new("n_support", Count { default: 100, min: 0 }),
                seed,
            ],
            Plugin::CostOverTime => vec![
                objective,
                budget,
                ParamSpec::new(
                    "x_axis",
                    Choice {
                        default: "time",
                        options: &["time", "trials"],
                    },
                ),
            ],
            Plugin::ParetoFront => vec![
                ParamSpec::new("objective_a", Objective),
                ParamSpec::new("objective_b", SecondObjective),
                budget,
            ],
            Plugin::ParallelCoordinates => vec![
                objective,
                budget,
                ParamSpec::new("hps", Hyperparameters),
                ParamSpec::new("max_lines", Count { default: 200, min: 1 }),
            ],
            Plugin::Pdp => vec![
                objective,
                budget,
                ParamSpec::new("hp", Hyperparameter),
                ParamSpec::new("grid_size", Count { default: 20, min: 1 }),
                ParamSpec::new("n_samples", Count { default: 50, min: 1 }),
            ],
            Plugin::Importances => vec![
                objective,
                budget,
                ParamSpec::new(
                    "method",
                    Choice {
                        default: "fanova",
                        options: &["fanova", "lpi"],
                    },
                ),
                ParamSpec::new("grid_size", Count { default: 20, min: 1 }),
            ],
            Plugin::AblationPath => vec![objective, budget],
            Plugin::BudgetCorrelation => vec![objective],
        };
        if matches!(
            self,
            Plugin::ParallelCoordinates | Plugin::Pdp | Plugin::Importances | Plugin::AblationPath
        ) {
            out.extend(forest);
        }
        out
    }
}

impl fmt::Display for Plugin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Plugin {
    type Err = RequestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Plugin::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = Plugin::ALL.iter().map(|p| p.as_str()).collect();
            RequestError::new(
                "unknown_plugin",
                format!("unknown plugin `{s}`; valid plugins: {}", valid.join(", ")),
            )
            .field("plugin")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKind {
    /// Objective shared by every selected run; defaults to the first one.
    Objective,
    /// Objective other than `objective_a`; defaults to the first such one.
    SecondObjective,
    /// A declared budget or `"highest"` (the default).
    Budget,
    /// Hyperparameter name; defaults to the first one.
    Hyperparameter,
    /// Optional list of hyperparameter names.
    Hyperparameters,
    /// Optional configuration id.
    ConfigId,
    Count { default: u64, min: u64 },
    Ratio { default: f64 },
    Flag { default: bool },
    Seed,
    Choice {
        default: &'static str,
        options: &'static [&'static str],
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
}

impl ParamSpec {
    const fn new(name: &'static str, kind: ParamKind) -> Self {
        Self { name, kind }
    }
}

/// Validated parameters with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Params(BTreeMap<String, Value>);

impl Params {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name).filter(|v| !v.is_null())
    }

    fn str(&self, name: &str) -> &str {
        self.0[name].as_str().expect("validated string")
    }

    fn u64(&self, name: &str) -> u64 {
        self.0[name].as_u64().expect("validated integer")
    }

    fn usize(&self, name: &str) -> usize {
        self.u64(name) as usize
    }

    pub fn budget(&self) -> BudgetSelect {
        match self.0.get("budget").and_then(Value::as_f64) {
            Some(b) => BudgetSelect::At(b),
            None => BudgetSelect::Highest,
        }
    }

    pub fn forest(&self) -> ForestParams {
        ForestParams {
            n_trees: self.usize("n_trees"),
            max_depth: self.usize("max_depth"),
            min_samples_leaf: self.usize("min_samples_leaf"),
            bootstrap: self.0["bootstrap"].as_bool().expect("validated flag"),
            max_features_ratio: self.0["max_features_ratio"].as_f64().expect("validated ratio"),
            seed: self.u64("seed"),
        }
    }

    pub fn as_map(&self) -> &BTreeMap<String, Value> {
        &self.0
    }
}

fn invalid(field: &str, message: impl Into<String>) -> RequestError {
    RequestError::new("invalid_param", message).field(field)
}

fn resolve_one(
    spec: &ParamSpec,
    raw: Option<&Value>,
    runs: &[Arc<Run>],
    done: &BTreeMap<String, Value>,
) -> Result<Value, RequestError> {
    let name = spec.name;
    let first = &runs[0];
    let shared_objective = |o: &str| -> Result<(), RequestError> {
        for run in runs {
            if run.objective(o).is_err() {
                return Err(invalid(name, format!("run `{}` has no objective `{o}`", run.name())));
            }
        }
        Ok(())
    };
    let want_str = |v: &Value| -> Result<String, RequestError> {
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| invalid(name, format!("`{name}` must be a string, got {v}")))
    };
    Ok(match spec.kind {
        ParamKind::Objective => {
            let o = match raw {
                Some(v) => want_str(v)?,
                None => first.objectives()[0].name.clone(),
            };
            shared_objective(&o)?;
            Value::from(o)
        }
        ParamKind::SecondObjective => {
            let a = done.get("objective_a").and_then(Value::as_str).unwrap_or_default();
            let o = match raw {
                Some(v) => want_str(v)?,
                None => first
                    .objectives()
                    .iter()
                    .map(|o| o.name.clone())
                    .find(|o| o != a)
                    .ok_or_else(|| {
                        invalid(name, format!("run `{}` has a single objective", first.name()))
                    })?,
            };
            if o == a {
                return Err(invalid(name, "objective_b must differ from objective_a"));
            }
            shared_objective(&o)?;
            Value::from(o)
        }
        ParamKind::Budget => match raw {
            None => Value::from("highest"),
            Some(Value::String(s)) if s == "highest" => Value::from("highest"),
            Some(v) => {
                let b = v
                    .as_f64()
                    .ok_or_else(|| invalid(name, format!("budget must be a number or \"highest\", got {v}")))?;
                for run in runs {
                    if !run.budgets().contains(&b) {
                        return Err(invalid(
                            name,
                            format!("run `{}` has no budget {b}; budgets: {:?}", run.name(), run.budgets()),
                        ));
                    }
                }
                Value::from(b)
            }
        },
        ParamKind::Hyperparameter => {
            let hp = match raw {
                Some(v) => want_str(v)?,
                None => first
                    .space()
                    .iter()
                    .next()
                    .map(|h| h.name.clone())
                    .ok_or_else(|| invalid(name, "the configuration space is empty"))?,
            };
            if first.space().get(&hp).is_none() {
                return Err(invalid(name, format!("unknown hyperparameter `{hp}`")));
            }
            Value::from(hp)
        }
        ParamKind::Hyperparameters => match raw {
            None => Value::Null,
            Some(Value::Array(items)) => {
                let mut names = Vec::new();
                for item in items {
                    let hp = want_str(item)?;
                    if first.space().get(&hp).is_none() {
                        return Err(invalid(name, format!("unknown hyperparameter `{hp}`")));
                    }
                    names.push(hp);
                }
                // space order, without duplicates
                let ordered: Vec<Value> = first
                    .space()
                    .iter()
                    .filter(|h| names.contains(&h.name))
                    .map(|h| Value::from(h.name.clone()))
                    .collect();
                Value::Array(ordered)
            }
            Some(v) => return Err(invalid(name, format!("`{name}` must be a list of names, got {v}"))),
        },
        ParamKind::ConfigId => match raw {
            None => Value::Null,
            Some(v) => {
                let id = want_str(v)?;
                if first.config(&id).is_none() {
                    return Err(invalid(name, format!("unknown configuration `{id}`")));
                }
                Value::from(id)
            }
        },
        ParamKind::Count { default, min } => {
            let n = match raw {
                None => default,
                Some(v) => v
                    .as_u64()
                    .ok_or_else(|| invalid(name, format!("`{name}` must be a non-negative integer, got {v}")))?,
            };
            if n < min {
                return Err(invalid(name, format!("`{name}` must be at least {min}")));
            }
            Value::from(n)
        }
        ParamKind::Ratio { default } => {
            let r = match raw {
                None => default,
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| invalid(name, format!("`{name}` must be a number, got {v}")))?,
            };
            if !(r > 0.0 && r <= 1.0) {
                return Err(invalid(name, format!("`{name}` must lie in (0, 1]")));
            }
            Value::from(r)
        }
        ParamKind::Flag { default } => match raw {
            None => Value::from(default),
            Some(Value::Bool(b)) => Value::from(*b),
            Some(v) => return Err(invalid(name, format!("`{name}` must be true or false, got {v}"))),
        },
        ParamKind::Seed => match raw {
            None => Value::from(0u64),
            Some(v) => Value::from(
                v.as_u64()
                    .ok_or_else(|| invalid(name, format!("`{name}` must be a non-negative integer, got {v}")))?,
            ),
        },
        ParamKind::Choice { default, options } => {
            let c = match raw {
                None => default.to_string(),
                Some(v) => want_str(v)?,
            };
            if !options.contains(&c.as_str()) {
                return Err(invalid(
                    name,
                    format!("`{name}` must be one of {}, got `{c}`", options.join(", ")),
                ));
            }
            Value::from(c)
        }
    })
}

/// Checks `raw` against the plugin's schema and fills in defaults.
pub fn resolve_params(
    plugin: Plugin,
    raw: &Map<String, Value>,
    runs: &[Arc<Run>],
) -> Result<Params, RequestError> {
    if runs.is_empty() {
        return Err(RequestError::new("invalid_request", "no runs selected").field("run_ids"));
    }
    let specs = plugin.params();
    if let Some(unknown) = raw.keys().find(|k| !specs.iter().any(|s| s.name == k.as_str())) {
        let valid: Vec<&str> = specs.iter().map(|s| s.name).collect();
        let listing = if valid.is_empty() {
            "it takes no parameters".to_string()
        } else {
            format!("valid parameters: {}", valid.join(", "))
        };
        return Err(RequestError::new(
            "unknown_param",
            format!("unknown parameter `{unknown}` for plugin `{plugin}`; {listing}"),
        )
        .field(unknown));
    }
    let mut out = BTreeMap::new();
    for spec in &specs {
        let raw_value = raw.get(spec.name).filter(|v| !v.is_null());
        let v = resolve_one(spec, raw_value, runs, &out)?;
        out.insert(spec.name.to_string(), v);
    }
    Ok(Params(out))
}

/// A run selected for a job, under the name it is addressed by.
#[derive(Debug, Clone)]
pub struct RunRef {
    pub handle: String,
    pub run: Arc<Run>,
}

/// Everything needed to compute (and cache) one analysis.
#[derive(Debug, Clone)]
pub struct JobSpec {
    pub plugin: Plugin,
    pub params: Params,
    /// Sorted by handle, without duplicates.
    pub runs: Vec<RunRef>,
    /// Whether the runs are analysed as a group.
    pub group: bool,
}

#[derive(Serialize)]
struct RunStamp<'a> {
    id: &'a str,
    content_id: &'a str,
}

#[derive(Serialize)]
struct Envelope<'a> {
    plugin: Plugin,
    params: &'a Params,
    runs: Vec<RunStamp<'a>>,
    group: bool,
    result: Value,
}

/// Builds a job from a plugin name, selected runs and raw parameters.
pub fn prepare(
    plugin: &str,
    mut runs: Vec<RunRef>,
    group: bool,
    raw: &Map<String, Value>,
) -> Result<JobSpec, RequestError> {
    let plugin: Plugin = plugin.parse()?;
    runs.sort_by(|a, b| a.handle.cmp(&b.handle));
    runs.dedup_by(|a, b| a.handle == b.handle);
    if runs.len() > 1 && !plugin.accepts_many_runs() {
        return Err(RequestError::new(
            "invalid_request",
            format!("plugin `{plugin}` analyses a single run, got {}", runs.len()),
        )
        .field("run_ids"));
    }
    let arcs: Vec<Arc<Run>> = runs.iter().map(|r| r.run.clone()).collect();
    let params = resolve_params(plugin, raw, &arcs)?;
    let group = plugin.accepts_many_runs() && (group || runs.len() > 1);
    Ok(JobSpec {
        plugin,
        params,
        runs,
        group,
    })
}

impl JobSpec {
    /// Canonical identity of the job: plugin, parameters and the content of
    /// every run.
    pub fn cache_key(&self) -> String {
        let key = serde_json::json!({
            "plugin": self.plugin,
            "params": self.params,
            "runs": self.stamps(),
            "group": self.group,
        });
        serde_json::to_string(&key).expect("key serializes")
    }

    fn stamps(&self) -> Vec<RunStamp<'_>> {
        self.runs
            .iter()
            .map(|r| RunStamp {
                id: &r.handle,
                content_id: r.run.id(),
            })
            .collect()
    }

    /// Runs the plugin and returns the plugin result.
    pub fn compute(&self) -> hpolens_core::Result<Value> {
        let p = &self.params;
        let run = &self.runs[0].run;
        let handle = self.runs[0].handle.as_str();
        let budget = p.budget();
        let to_value = |v: serde_json::Result<Value>| v.expect("results serialize");
        Ok(match self.plugin {
            Plugin::Overview => overview(handle, run)?,
            Plugin::Configurations => match p.get("config_id").and_then(Value::as_str) {
                Some(id) => config_detail(handle, run, id)?,
                None => config_table(handle, run)?,
            },
            Plugin::Footprint => to_value(serde_json::to_value(compute_footprint(
                run,
                p.str("objective"),
                budget,
                p.usize("border_cap"),
                p.usize("n_support"),
                p.u64("seed"),
            )?)),
            Plugin::CostOverTime => {
                let axis = match p.str("x_axis") {
                    "trials" => XAxis::Trials,
                    _ => XAxis::Time,
                };
                let t = if self.group {
                    let g = group_runs("group", self.runs.iter().map(|r| r.run.clone()).collect())?;
                    cost_over_time(&g, p.str("objective"), budget, axis)?
                } else {
                    cost_over_time(&**run, p.str("objective"), budget, axis)?
                };
                to_value(serde_json::to_value(t))
            }
            Plugin::ParetoFront => {
                let (a, b) = (p.str("objective_a"), p.str("objective_b"));
                let r = if self.group {
                    let arcs: Vec<Arc<Run>> = self.runs.iter().map(|r| r.run.clone()).collect();
                    pareto_front(&arcs[..], a, b, budget)?
                } else {
                    pareto_front(&**run, a, b, budget)?
                };
                to_value(serde_json::to_value(r))
            }
            Plugin::ParallelCoordinates => {
                let hps: Option<Vec<String>> = p.get("hps").map(|v| {
                    v.as_array()
                        .expect("validated list")
                        .iter()
                        .map(|s| s.as_str().expect("validated name").to_string())
                        .collect()
                });
                to_value(serde_json::to_value(parallel_coordinates(
                    run,
                    p.str("objective"),
                    budget,
                    hps.as_deref(),
                    p.usize("max_lines"),
                    &p.forest(),
                )?))
            }
            Plugin::Pdp => to_value(serde_json::to_value(pdp(
                run,
                p.str("objective"),
                budget,
                p.str("hp"),
                &p.forest(),
                p.usize("grid_size"),
                p.usize("n_samples"),
                p.u64("seed"),
            )?)),
            Plugin::Importances => {
                let report = match p.str("method") {
                    "lpi" => lpi(run, p.str("objective"), budget, &p.forest(), p.usize("grid_size"))?,
                    _ => fanova(run, p.str("objective"), budget, &p.forest())?,
                };
                to_value(serde_json::to_value(report))
            }
            Plugin::AblationPath => to_value(serde_json::to_value(ablation_path(
                run,
                p.str("objective"),
                budget,
                &p.forest(),
            )?)),
            Plugin::BudgetCorrelation => {
                to_value(serde_json::to_value(budget_correlation(run, p.str("objective"))?))
            }
        })
    }

    /// Computes the result and wraps it in the payload envelope.
    pub fn payload(&self) -> hpolens_core::Result<Vec<u8>> {
        let envelope = Envelope {
            plugin: self.plugin,
            params: &self.params,
            runs: self.stamps(),
            group: self.group,
            result: self.compute()?,
        };
        Ok(serde_json::to_vec(&envelope).expect("payload serializes"))
    }
}
