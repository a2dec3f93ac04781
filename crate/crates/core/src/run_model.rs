//! Canonical in-memory model of optimization runs.
//!
//! A [`Run`] bundles a configuration space, the declared objectives and
//! budgets, the evaluated configurations and the trial log. Runs are
//! immutable once built; their `id` is a content hash so downstream caches
//! can key on it.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Violation};

/// A single hyperparameter value as it appears in a configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HpValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl HpValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            HpValue::Int(v) => Some(*v as f64),
            HpValue::Float(v) => Some(*v),
            HpValue::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            HpValue::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Stable textual key, used for deduplicating configurations.
    pub(crate) fn canonical_key(&self) -> String {
        match self {
            HpValue::Int(v) => format!("i{v}"),
            HpValue::Float(v) => format!("f{:016x}", v.to_bits()),
            HpValue::Str(s) => format!("s{s}"),
        }
    }
}

// Numeric values compare across Int/Float so that `5` and `5.0` match.
impl PartialEq for HpValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (HpValue::Str(a), HpValue::Str(b)) => a == b,
            (HpValue::Int(a), HpValue::Int(b)) => a == b,
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            },
        }
    }
}

impl fmt::Display for HpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HpValue::Int(v) => write!(f, "{v}"),
            HpValue::Float(v) => write!(f, "{v}"),
            HpValue::Str(s) => f.write_str(s),
        }
    }
}

impl From<f64> for HpValue {
    fn from(v: f64) -> Self {
        HpValue::Float(v)
    }
}

impl From<i64> for HpValue {
    fn from(v: i64) -> Self {
        HpValue::Int(v)
    }
}

impl From<&str> for HpValue {
    fn from(v: &str) -> Self {
        HpValue::Str(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HpKind {
    Float {
        lower: f64,
        upper: f64,
        #[serde(default)]
        log: bool,
    },
    #[serde(rename = "int")]
    Integer {
        lower: f64,
        upper: f64,
        #[serde(default)]
        log: bool,
    },
    Categorical {
        choices: Vec<String>,
    },
    Ordinal {
        choices: Vec<String>,
    },
    Constant,
}

impl HpKind {
    pub fn is_numeric(&self) -> bool {
        matches!(self, HpKind::Float { .. } | HpKind::Integer { .. })
    }

    pub fn choices(&self) -> Option<&[String]> {
        match self {
            HpKind::Categorical { choices } | HpKind::Ordinal { choices } => Some(choices),
            _ => None,
        }
    }
}

/// Single-parent activation condition: the child is active iff the parent is
/// active and its value is one of `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub values: Vec<HpValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameter {
    pub name: String,
    #[serde(flatten)]
    pub kind: HpKind,
    pub default: HpValue,
    pub condition: Option<Condition>,
}

impl Hyperparameter {
    pub fn float(name: &str, lower: f64, upper: f64, default: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: HpKind::Float {
                lower,
                upper,
                log: false,
            },
            default: HpValue::Float(default),
            condition: None,
        }
    }

    pub fn integer(name: &str, lower: i64, upper: i64, default: i64) -> Self {
        Self {
            name: name.to_string(),
            kind: HpKind::Integer {
                lower: lower as f64,
                upper: upper as f64,
                log: false,
            },
            default: HpValue::Int(default),
            condition: None,
        }
    }

    pub fn categorical(name: &str, choices: &[&str], default: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: HpKind::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
            default: HpValue::from(default),
            condition: None,
        }
    }

    pub fn ordinal(name: &str, choices: &[&str], default: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: HpKind::Ordinal {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
            default: HpValue::from(default),
            condition: None,
        }
    }

    pub fn constant(name: &str, value: impl Into<HpValue>) -> Self {
        Self {
            name: name.to_string(),
            kind: HpKind::Constant,
            default: value.into(),
            condition: None,
        }
    }

    /// Switches a numeric hyperparameter to log scale.
    pub fn log_scale(mut self) -> Self {
        match &mut self.kind {
            HpKind::Float { log, .. } | HpKind::Integer { log, .. } => *log = true,
            _ => {}
        }
        self
    }

    pub fn active_when(mut self, parent: &str, values: Vec<HpValue>) -> Self {
        self.condition = Some(Condition {
            parent: parent.to_string(),
            values,
        });
        self
    }

    /// Checks a value against the bounds or choices; returns a description
    /// of the problem if it does not fit.
    pub fn check_value(&self, value: &HpValue) -> std::result::Result<(), String> {
        match &self.kind {
            HpKind::Float { lower, upper, .. } => match value.as_f64() {
                Some(v) if v.is_finite() && v >= *lower && v <= *upper => Ok(()),
                Some(v) => Err(format!("value {v} outside [{lower}, {upper}]")),
                None => Err(format!("expected a number, got \"{value}\"")),
            },
            HpKind::Integer { lower, upper, .. } => match value.as_f64() {
                Some(v) if v.fract() != 0.0 => Err(format!("expected an integer, got {v}")),
                Some(v) if v >= *lower && v <= *upper => Ok(()),
                Some(v) => Err(format!("value {v} outside [{lower}, {upper}]")),
                None => Err(format!("expected an integer, got \"{value}\"")),
            },
            HpKind::Categorical { choices } | HpKind::Ordinal { choices } => match value {
                HpValue::Str(s) if choices.contains(s) => Ok(()),
                other => Err(format!("\"{other}\" is not one of {choices:?}")),
            },
            HpKind::Constant => {
                if *value == self.default {
                    Ok(())
                } else {
                    Err(format!("constant expects {}, got {value}", self.default))
                }
            }
        }
    }

    /// Index of a categorical/ordinal value within the choices.
    pub fn choice_index(&self, value: &HpValue) -> Option<usize> {
        let choices = self.kind.choices()?;
        let s = value.as_str()?;
        choices.iter().position(|c| c == s)
    }

    /// Coerces a value to the representation used by this kind (`Float` for
    /// float hyperparameters, `Int` for integral ones).
    pub fn coerce(&self, value: HpValue) -> HpValue {
        match (&self.kind, &value) {
            (HpKind::Float { .. }, HpValue::Int(v)) => HpValue::Float(*v as f64),
            (HpKind::Integer { .. }, HpValue::Float(v)) if v.fract() == 0.0 && v.abs() < 9e15 => {
                HpValue::Int(*v as i64)
            }
            _ => value,
        }
    }
}

pub type Config = BTreeMap<String, HpValue>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigurationSpace {
    pub hyperparameters: Vec<Hyperparameter>,
}

impl ConfigurationSpace {
    pub fn new(hyperparameters: Vec<Hyperparameter>) -> Self {
        Self { hyperparameters }
    }

    pub fn len(&self) -> usize {
        self.hyperparameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyperparameters.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Hyperparameter> {
        self.hyperparameters.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Hyperparameter> {
        self.hyperparameters.iter().find(|h| h.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.hyperparameters.iter().position(|h| h.name == name)
    }

    /// Whether `name` is active in `config`, following the condition chain.
    pub fn is_active(&self, name: &str, config: &Config) -> bool {
        let mut current = name;
        // bounded walk; cyclic spaces are rejected by validation
        for _ in 0..=self.len() {
            let Some(hp) = self.get(current) else {
                return false;
            };
            let Some(cond) = &hp.condition else {
                return true;
            };
            match config.get(&cond.parent) {
                Some(v) if cond.values.contains(v) => current = &cond.parent,
                _ => return false,
            }
        }
        false
    }

    /// Adds missing active hyperparameters (via `fill`) and removes inactive
    /// ones until the config is consistent with the conditions.
    pub fn complete_activation(
        &self,
        config: &mut Config,
        mut fill: impl FnMut(&Hyperparameter) -> HpValue,
    ) {
        for _ in 0..=self.len() {
            let mut changed = false;
            for hp in &self.hyperparameters {
                let active = self.is_active(&hp.name, config);
                let present = config.contains_key(&hp.name);
                if active && !present {
                    config.insert(hp.name.clone(), fill(hp));
                    changed = true;
                } else if !active && present {
                    config.remove(&hp.name);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// The configuration made of every active hyperparameter's default.
    pub fn default_config(&self) -> Config {
        let mut config = Config::new();
        self.complete_activation(&mut config, |hp| hp.default.clone());
        config
    }

    /// Stable 64-bit digest of the space, used to seed deterministic
    /// space-dependent sampling.
    pub fn digest(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("space serializes");
        let hash = Sha256::digest(&bytes);
        u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "min")]
    Minimize,
    #[serde(rename = "max")]
    Maximize,
}

impl Direction {
    /// True if `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }

    /// Orders values best-first.
    pub fn cmp_best_first(self, a: f64, b: f64) -> std::cmp::Ordering {
        match self {
            Direction::Minimize => a.total_cmp(&b),
            Direction::Maximize => b.total_cmp(&a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub name: String,
    pub direction: Direction,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Objective {
    pub fn minimize(name: &str) -> Self {
        Self {
            name: name.to_string(),
            direction: Direction::Minimize,
            lower: None,
            upper: None,
        }
    }

    pub fn maximize(name: &str) -> Self {
        Self {
            name: name.to_string(),
            direction: Direction::Maximize,
            lower: None,
            upper: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Success,
    Timeout,
    #[serde(rename = "memoryout")]
    MemoryOut,
    Crashed,
    Running,
    NotEvaluated,
}

impl TrialStatus {
    pub const ALL: [TrialStatus; 6] = [
        TrialStatus::Success,
        TrialStatus::Timeout,
        TrialStatus::MemoryOut,
        TrialStatus::Crashed,
        TrialStatus::Running,
        TrialStatus::NotEvaluated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Success => "success",
            TrialStatus::Timeout => "timeout",
            TrialStatus::MemoryOut => "memoryout",
            TrialStatus::Crashed => "crashed",
            TrialStatus::Running => "running",
            TrialStatus::NotEvaluated => "not_evaluated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub config_id: String,
    pub budget: f64,
    pub seed: Option<i64>,
    pub objectives: BTreeMap<String, Option<f64>>,
    pub status: TrialStatus,
    pub start: f64,
    pub end: Option<f64>,
}

impl Trial {
    /// The trial's finite value for `objective`, if any.
    pub fn value(&self, objective: &str) -> Option<f64> {
        self.objectives
            .get(objective)
            .copied()
            .flatten()
            .filter(|v| v.is_finite())
    }
}

/// Budget selector used by analyses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSelect {
    At(f64),
    /// Each configuration's own largest budget with a successful result.
    Highest,
}

impl Serialize for BudgetSelect {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BudgetSelect::At(b) => s.serialize_f64(*b),
            BudgetSelect::Highest => s.serialize_str("highest"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetFilter {
    All,
    At(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Incumbent {
    pub run_id: String,
    pub config_id: String,
    pub value: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Run {
    id: String,
    name: String,
    space: ConfigurationSpace,
    objectives: Vec<Objective>,
    budgets: Vec<f64>,
    configs: BTreeMap<String, Config>,
    trials: Vec<Trial>,
    meta: BTreeMap<String, String>,
}

impl Run {
    /// Builds a run without validating it. See [`Run::validated`].
    pub fn new(
        name: impl Into<String>,
        space: ConfigurationSpace,
        objectives: Vec<Objective>,
        budgets: Vec<f64>,
        configs: BTreeMap<String, Config>,
        trials: Vec<Trial>,
        meta: BTreeMap<String, String>,
    ) -> Self {
        let id = content_id(&space, &objectives, &budgets, &configs, &trials);
        Self {
            id,
            name: name.into(),
            space,
            objectives,
            budgets,
            configs,
            trials,
            meta,
        }
    }

    /// Builds a run and rejects it if any invariant is violated.
    pub fn validated(
        name: impl Into<String>,
        space: ConfigurationSpace,
        objectives: Vec<Objective>,
        budgets: Vec<f64>,
        configs: BTreeMap<String, Config>,
        trials: Vec<Trial>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let run = Self::new(name, space, objectives, budgets, configs, trials, meta);
        let violations = validate_run(&run);
        if violations.is_empty() {
            Ok(run)
        } else {
            Err(Error::Validation(violations))
        }
    }

    /// A new run with `extra` trials appended.
    pub fn with_appended(&self, extra: Vec<Trial>) -> Self {
        let mut trials = self.trials.clone();
        trials.extend(extra);
        Self::new(
            self.name.clone(),
            self.space.clone(),
            self.objectives.clone(),
            self.budgets.clone(),
            self.configs.clone(),
            trials,
            self.meta.clone(),
        )
    }

    /// Content hash over space, objectives, budgets, configs and trials.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &ConfigurationSpace {
        &self.space
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn configs(&self) -> &BTreeMap<String, Config> {
        &self.configs
    }

    pub fn config(&self, id: &str) -> Option<&Config> {
        self.configs.get(id)
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn optimizer(&self) -> &str {
        self.meta.get("optimizer").map(String::as_str).unwrap_or("")
    }

    pub fn objective(&self, name: &str) -> Result<&Objective> {
        self.objectives
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| Error::UnknownObjective(name.to_string()))
    }

    /// Errors if a fixed budget is not declared by the run.
    pub fn check_budget(&self, budget: BudgetSelect) -> Result<()> {
        match budget {
            BudgetSelect::At(b) if !self.budgets.contains(&b) => Err(Error::UnknownBudget(b)),
            _ => Ok(()),
        }
    }

    /// Successful trials with a finite value for `objective` at the selected
    /// budget, in log order.
    pub fn selected_trials(&self, objective: &str, budget: BudgetSelect) -> Vec<&Trial> {
        self.selected_trial_indices(objective, budget)
            .into_iter()
            .map(|i| &self.trials[i])
            .collect()
    }

    /// Positions in the trial log of [`Run::selected_trials`].
    pub fn selected_trial_indices(&self, objective: &str, budget: BudgetSelect) -> Vec<usize> {
        let ok = |t: &Trial| t.status == TrialStatus::Success && t.value(objective).is_some();
        match budget {
            BudgetSelect::At(b) => (0..self.trials.len())
                .filter(|&i| ok(&self.trials[i]) && self.trials[i].budget == b)
                .collect(),
            BudgetSelect::Highest => {
                let mut top: BTreeMap<&str, f64> = BTreeMap::new();
                for t in self.trials.iter().filter(|t| ok(t)) {
                    let e = top.entry(t.config_id.as_str()).or_insert(t.budget);
                    if t.budget > *e {
                        *e = t.budget;
                    }
                }
                (0..self.trials.len())
                    .filter(|&i| {
                        let t = &self.trials[i];
                        ok(t) && top.get(t.config_id.as_str()) == Some(&t.budget)
                    })
                    .collect()
            }
        }
    }

    /// Best value per configuration at the selected budget, ordered by
    /// config id. The trial that produced the value is returned alongside.
    pub fn best_per_config(
        &self,
        objective: &str,
        budget: BudgetSelect,
    ) -> Result<Vec<(&str, f64, &Trial)>> {
        let direction = self.objective(objective)?.direction;
        let mut best: BTreeMap<&str, (f64, &Trial)> = BTreeMap::new();
        for t in self.selected_trials(objective, budget) {
            let v = t.value(objective).expect("selected trials carry values");
            match best.get(t.config_id.as_str()) {
                Some((cur, prev)) if !direction.better(v, *cur) && !(v == *cur && earlier(t, prev)) => {}
                _ => {
                    best.insert(t.config_id.as_str(), (v, t));
                }
            }
        }
        Ok(best.into_iter().map(|(c, (v, t))| (c, v, t)).collect())
    }

    /// Wallclock span from the first start to the last end, if any trial ended.
    pub fn duration(&self) -> Option<f64> {
        let start = self.trials.iter().map(|t| t.start).fold(f64::INFINITY, f64::min);
        let end = self
            .trials
            .iter()
            .filter_map(|t| t.end)
            .fold(f64::NEG_INFINITY, f64::max);
        (start.is_finite() && end.is_finite()).then(|| end - start)
    }
}

fn earlier(a: &Trial, b: &Trial) -> bool {
    let ea = a.end.unwrap_or(f64::INFINITY);
    let eb = b.end.unwrap_or(f64::INFINITY);
    ea < eb
}

fn content_id(
    space: &ConfigurationSpace,
    objectives: &[Objective],
    budgets: &[f64],
    configs: &BTreeMap<String, Config>,
    trials: &[Trial],
) -> String {
    let bytes = serde_json::to_vec(&(space, objectives, budgets, configs, trials))
        .expect("run content serializes");
    let hash = Sha256::digest(&bytes);
    hex::encode(&hash[..16])
}

/// A named, non-empty collection of runs sharing objectives.
#[derive(Debug, Clone)]
pub struct RunGroup {
    name: String,
    members: Vec<Arc<Run>>,
}

impl RunGroup {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn members(&self) -> &[Arc<Run>] {
        &self.members
    }
}

/// Anything analyses can treat as "a run or a group of runs".
pub trait RunSet {
    fn runs(&self) -> Vec<&Run>;

    /// Whether results should be aggregated as a group even with a single
    /// member.
    fn is_group(&self) -> bool {
        true
    }
}

impl RunSet for Run {
    fn runs(&self) -> Vec<&Run> {
        vec![self]
    }

    fn is_group(&self) -> bool {
        false
    }
}

impl RunSet for RunGroup {
    fn runs(&self) -> Vec<&Run> {
        self.members.iter().map(|r| r.as_ref()).collect()
    }
}

impl RunSet for [Arc<Run>] {
    fn runs(&self) -> Vec<&Run> {
        self.iter().map(|r| r.as_ref()).collect()
    }
}

pub fn group_runs(name: impl Into<String>, runs: Vec<Arc<Run>>) -> Result<RunGroup> {
    let Some(first) = runs.first() else {
        return Err(Error::InvalidInput("a run group needs at least one run".into()));
    };
    let reference: Vec<(&str, Direction)> = first
        .objectives()
        .iter()
        .map(|o| (o.name.as_str(), o.direction))
        .collect();
    for run in &runs[1..] {
        let other: Vec<(&str, Direction)> = run
            .objectives()
            .iter()
            .map(|o| (o.name.as_str(), o.direction))
            .collect();
        if other.len() != reference.len() {
            return Err(Error::Incompatible(format!(
                "run `{}` declares {} objectives, run `{}` declares {}",
                first.name(),
                reference.len(),
                run.name(),
                other.len()
            )));
        }
        for ((na, da), (nb, db)) in reference.iter().zip(&other) {
            if na != nb {
                return Err(Error::Incompatible(format!(
                    "objective name mismatch: `{na}` in run `{}` vs `{nb}` in run `{}`",
                    first.name(),
                    run.name()
                )));
            }
            if da != db {
                return Err(Error::Incompatible(format!(
                    "direction mismatch for objective `{na}`: {da:?} in run `{}` vs {db:?} in run `{}`",
                    first.name(),
                    run.name()
                )));
            }
        }
    }
    Ok(RunGroup {
        name: name.into(),
        members: runs,
    })
}

/// Best successful trial for `objective` across the run set.
///
/// Ties are broken by earliest end time, then by config id, then by member
/// order.
pub fn incumbent<R: RunSet + ?Sized>(
    runs: &R,
    objective: &str,
    budget: BudgetSelect,
) -> Result<Option<Incumbent>> {
    let runs = runs.runs();
    let mut best: Option<(Incumbent, f64)> = None;
    for run in runs {
        let direction = run.objective(objective)?.direction;
        for t in run.selected_trials(objective, budget) {
            let v = t.value(objective).expect("selected");
            let end = t.end.unwrap_or(f64::INFINITY);
            let replace = match &best {
                None => true,
                Some((cur, cur_end)) => {
                    direction.better(v, cur.value)
                        || (v == cur.value
                            && (end < *cur_end || (end == *cur_end && t.config_id < cur.config_id)))
                }
            };
            if replace {
                best = Some((
                    Incumbent {
                        run_id: run.id().to_string(),
                        config_id: t.config_id.clone(),
                        value: v,
                        budget: t.budget,
                    },
                    end,
                ));
            }
        }
    }
    Ok(best.map(|(inc, _)| inc))
}

/// Counts trials per status; every status is present in the map.
pub fn status_counts(run: &Run, budget: BudgetFilter) -> Result<BTreeMap<TrialStatus, usize>> {
    if let BudgetFilter::At(b) = budget {
        if !run.budgets().contains(&b) {
            return Err(Error::UnknownBudget(b));
        }
    }
    let mut counts: BTreeMap<TrialStatus, usize> =
        TrialStatus::ALL.iter().map(|s| (*s, 0)).collect();
    for t in run.trials() {
        if let BudgetFilter::At(b) = budget {
            if t.budget != b {
                continue;
            }
        }
        *counts.entry(t.status).or_default() += 1;
    }
    Ok(counts)
}

/// Lists every broken invariant of `run`. An empty list means the run is
/// well-formed.
pub fn validate_run(run: &Run) -> Vec<Violation> {
    let mut out = Vec::new();
    validate_space(run.space(), &mut out);

    let mut seen = HashSet::new();
    for o in run.objectives() {
        if !seen.insert(o.name.as_str()) {
            out.push(Violation::new(format!("objective `{}`", o.name), "duplicate name"));
        }
        if let (Some(lo), Some(hi)) = (o.lower, o.upper) {
            if lo > hi {
                out.push(Violation::new(
                    format!("objective `{}`", o.name),
                    format!("lower bound {lo} exceeds upper bound {hi}"),
                ));
            }
        }
    }

    for w in run.budgets().windows(2) {
        if !(w[0] < w[1]) {
            out.push(Violation::new(
                "budgets",
                format!("not strictly increasing at {} -> {}", w[0], w[1]),
            ));
        }
    }
    for b in run.budgets() {
        if !b.is_finite() || *b < 0.0 {
            out.push(Violation::new("budgets", format!("invalid budget {b}")));
        }
    }

    for (cid, config) in run.configs() {
        let subject = format!("config `{cid}`");
        for key in config.keys() {
            if run.space().get(key).is_none() {
                out.push(Violation::new(
                    &subject,
                    format!("unknown hyperparameter `{key}`"),
                ));
            }
        }
        for hp in run.space().iter() {
            let active = run.space().is_active(&hp.name, config);
            match (config.get(&hp.name), active) {
                (Some(v), true) => {
                    if let Err(e) = hp.check_value(v) {
                        out.push(Violation::new(
                            &subject,
                            format!("hyperparameter `{}`: {e}", hp.name),
                        ));
                    }
                }
                (Some(_), false) => out.push(Violation::new(
                    &subject,
                    format!("hyperparameter `{}` is inactive but present", hp.name),
                )),
                (None, true) => out.push(Violation::new(
                    &subject,
                    format!("hyperparameter `{}` is active but missing", hp.name),
                )),
                (None, false) => {}
            }
        }
    }

    let declared: BTreeSet<&str> = run.objectives().iter().map(|o| o.name.as_str()).collect();
    for (i, t) in run.trials().iter().enumerate() {
        let subject = format!("trial {i} (config `{}`)", t.config_id);
        if !run.configs().contains_key(&t.config_id) {
            out.push(Violation::new(
                &subject,
                format!("unknown config_id `{}`", t.config_id),
            ));
        }
        if !run.budgets().contains(&t.budget) {
            out.push(Violation::new(
                &subject,
                format!("budget {} is not declared", t.budget),
            ));
        }
        for name in t.objectives.keys() {
            if !declared.contains(name.as_str()) {
                out.push(Violation::new(
                    &subject,
                    format!("undeclared objective `{name}`"),
                ));
            }
        }
        if t.status == TrialStatus::Success {
            for o in run.objectives() {
                if t.value(&o.name).is_none() {
                    out.push(Violation::new(
                        &subject,
                        format!("successful trial lacks a finite value for `{}`", o.name),
                    ));
                }
            }
        }
        if !t.start.is_finite() {
            out.push(Violation::new(&subject, "start time is not finite"));
        }
        if let Some(end) = t.end {
            if !(end >= t.start) {
                out.push(Violation::new(
                    &subject,
                    format!("end time {end} precedes start time {}", t.start),
                ));
            }
        }
    }
    out
}

fn validate_space(space: &ConfigurationSpace, out: &mut Vec<Violation>) {
    let mut names = HashSet::new();
    for hp in space.iter() {
        let subject = format!("hyperparameter `{}`", hp.name);
        if !names.insert(hp.name.as_str()) {
            out.push(Violation::new(&subject, "duplicate name"));
        }
        match &hp.kind {
            HpKind::Float { lower, upper, log } | HpKind::Integer { lower, upper, log } => {
                if !(lower < upper) {
                    out.push(Violation::new(
                        &subject,
                        format!("lower {lower} must be below upper {upper}"),
                    ));
                }
                if *log && !(*lower > 0.0) {
                    out.push(Violation::new(
                        &subject,
                        format!("log scale needs a positive lower bound, got {lower}"),
                    ));
                }
            }
            HpKind::Categorical { choices } | HpKind::Ordinal { choices } => {
                if choices.is_empty() {
                    out.push(Violation::new(&subject, "no choices"));
                }
                let unique: HashSet<&String> = choices.iter().collect();
                if unique.len() != choices.len() {
                    out.push(Violation::new(&subject, "duplicate choices"));
                }
            }
            HpKind::Constant => {}
        }
        if let Err(e) = hp.check_value(&hp.default) {
            out.push(Violation::new(&subject, format!("default: {e}")));
        }
        if let Some(cond) = &hp.condition {
            if cond.parent == hp.name {
                out.push(Violation::new(&subject, "condition refers to itself"));
            } else if space.get(&cond.parent).is_none() {
                out.push(Violation::new(
                    &subject,
                    format!("condition parent `{}` does not exist", cond.parent),
                ));
            }
        }
    }
    // cycle check along single-parent chains
    for hp in space.iter() {
        let mut current = hp;
        let mut steps = 0;
        while let Some(cond) = &current.condition {
            let Some(parent) = space.get(&cond.parent) else {
                break;
            };
            steps += 1;
            if parent.name == hp.name || steps > space.len() {
                out.push(Violation::new(
                    format!("hyperparameter `{}`", hp.name),
                    "condition graph contains a cycle",
                ));
                break;
            }
            current = parent;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> ConfigurationSpace {
        ConfigurationSpace::new(vec![
            Hyperparameter::float("lr", 0.0, 1.0, 0.5),
            Hyperparameter::categorical("opt", &["sgd", "adam"], "sgd"),
            Hyperparameter::float("momentum", 0.0, 1.0, 0.9)
                .active_when("opt", vec!["sgd".into()]),
        ])
    }

    fn cfg(pairs: &[(&str, HpValue)]) -> Config {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn trial(cid: &str, loss: Option<f64>, status: TrialStatus, end: f64) -> Trial {
        Trial {
            config_id: cid.into(),
            budget: 1.0,
            seed: Some(0),
            objectives: [("loss".to_string(), loss)].into(),
            status,
            start: end - 1.0,
            end: Some(end),
        }
    }

    fn run_with(trials: Vec<Trial>, direction: Direction) -> Run {
        let configs = [
            (
                "c1".to_string(),
                cfg(&[("lr", 0.1.into()), ("opt", "adam".into())]),
            ),
            (
                "c2".to_string(),
                cfg(&[
                    ("lr", 0.2.into()),
                    ("opt", "sgd".into()),
                    ("momentum", 0.5.into()),
                ]),
            ),
        ]
        .into();
        let objective = Objective {
            name: "loss".into(),
            direction,
            lower: None,
            upper: None,
        };
        Run::new("r", space(), vec![objective], vec![1.0], configs, trials, BTreeMap::new())
    }

    #[test]
    fn well_formed_run_has_no_violations() {
        let run = run_with(
            vec![
                trial("c1", Some(0.5), TrialStatus::Success, 1.0),
                trial("c2", Some(0.3), TrialStatus::Success, 2.0),
            ],
            Direction::Minimize,
        );
        assert_eq!(validate_run(&run), vec![]);
    }

    #[test]
    fn unknown_config_id_is_reported() {
        let run = run_with(
            vec![trial("c9", Some(0.5), TrialStatus::Success, 1.0)],
            Direction::Minimize,
        );
        let v = validate_run(&run);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("c9"));
    }

    #[test]
    fn out_of_bounds_value_is_reported() {
        let mut run = run_with(vec![], Direction::Minimize);
        run.configs
            .get_mut("c1")
            .unwrap()
            .insert("lr".into(), 10.0.into());
        let v = validate_run(&run);
        assert_eq!(v.len(), 1);
        assert!(v[0].detail.contains("outside"), "{}", v[0]);
    }

    #[test]
    fn inactive_and_missing_values_are_reported() {
        let mut run = run_with(vec![], Direction::Minimize);
        run.configs
            .get_mut("c1")
            .unwrap()
            .insert("momentum".into(), 0.3.into());
        run.configs.get_mut("c2").unwrap().remove("momentum");
        let v = validate_run(&run);
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn cyclic_conditions_are_reported() {
        let space = ConfigurationSpace::new(vec![
            Hyperparameter::categorical("a", &["x"], "x").active_when("b", vec!["x".into()]),
            Hyperparameter::categorical("b", &["x"], "x").active_when("a", vec!["x".into()]),
        ]);
        let run = Run::new("r", space, vec![], vec![], BTreeMap::new(), vec![], BTreeMap::new());
        let v = validate_run(&run);
        assert!(v.iter().any(|v| v.detail.contains("cycle")), "{v:?}");
    }

    #[test]
    fn success_without_value_is_reported() {
        let run = run_with(
            vec![trial("c1", None, TrialStatus::Success, 1.0)],
            Direction::Minimize,
        );
        assert_eq!(validate_run(&run).len(), 1);
        let crashed = run_with(
            vec![trial("c1", None, TrialStatus::Crashed, 1.0)],
            Direction::Minimize,
        );
        assert!(validate_run(&crashed).is_empty());
    }

    #[test]
    fn incumbent_respects_direction() {
        let trials = vec![
            trial("c1", Some(0.5), TrialStatus::Success, 1.0),
            trial("c2", Some(0.3), TrialStatus::Success, 2.0),
        ];
        let run = run_with(trials.clone(), Direction::Minimize);
        let inc = incumbent(&run, "loss", BudgetSelect::Highest).unwrap().unwrap();
        assert_eq!((inc.config_id.as_str(), inc.value), ("c2", 0.3));

        let run = run_with(trials, Direction::Maximize);
        let inc = incumbent(&run, "loss", BudgetSelect::Highest).unwrap().unwrap();
        assert_eq!((inc.config_id.as_str(), inc.value), ("c1", 0.5));
    }

    #[test]
    fn incumbent_absent_when_everything_crashed() {
        let run = run_with(
            vec![
                trial("c1", None, TrialStatus::Crashed, 1.0),
                trial("c2", None, TrialStatus::Crashed, 2.0),
            ],
            Direction::Minimize,
        );
        assert!(incumbent(&run, "loss", BudgetSelect::At(1.0)).unwrap().is_none());
    }

    #[test]
    fn incumbent_tie_break_prefers_earlier_end_then_id() {
        let run = run_with(
            vec![
                trial("c2", Some(0.3), TrialStatus::Success, 5.0),
                trial("c1", Some(0.3), TrialStatus::Success, 3.0),
            ],
            Direction::Minimize,
        );
        let inc = incumbent(&run, "loss", BudgetSelect::Highest).unwrap().unwrap();
        assert_eq!(inc.config_id, "c1");

        let run = run_with(
            vec![
                trial("c2", Some(0.3), TrialStatus::Success, 3.0),
                trial("c1", Some(0.3), TrialStatus::Success, 3.0),
            ],
            Direction::Minimize,
        );
        let inc = incumbent(&run, "loss", BudgetSelect::Highest).unwrap().unwrap();
        assert_eq!(inc.config_id, "c1");
    }

    #[test]
    fn incumbent_unknown_objective_errors() {
        let run = run_with(vec![], Direction::Minimize);
        let err = incumbent(&run, "acc", BudgetSelect::Highest).unwrap_err();
        assert!(err.to_string().contains("acc"));
    }

    #[test]
    fn highest_budget_is_per_config() {
        let mut t1 = trial("c1", Some(0.1), TrialStatus::Success, 1.0);
        t1.budget = 1.0;
        let mut t2 = trial("c2", Some(0.4), TrialStatus::Success, 2.0);
        t2.budget = 1.0;
        let mut t3 = trial("c2", Some(0.2), TrialStatus::Success, 3.0);
        t3.budget = 2.0;
        let mut run = run_with(vec![t1, t2, t3], Direction::Minimize);
        run.budgets = vec![1.0, 2.0];
        let selected = run.selected_trials("loss", BudgetSelect::Highest);
        let picked: Vec<(&str, f64)> = selected
            .iter()
            .map(|t| (t.config_id.as_str(), t.budget))
            .collect();
        assert_eq!(picked, vec![("c1", 1.0), ("c2", 2.0)]);
        let inc = incumbent(&run, "loss", BudgetSelect::Highest).unwrap().unwrap();
        assert_eq!(inc.config_id, "c1");
        let inc = incumbent(&run, "loss", BudgetSelect::At(2.0)).unwrap().unwrap();
        assert_eq!(inc.config_id, "c2");
    }

    #[test]
    fn group_runs_checks_objectives() {
        let a = Arc::new(run_with(vec![], Direction::Minimize));
        let b = Arc::new(run_with(vec![], Direction::Minimize));
        let g = group_runs("g", vec![a.clone(), b]).unwrap();
        assert_eq!(g.members().len(), 2);
        assert!(Arc::ptr_eq(&g.members()[0], &a));

        let c = Arc::new(run_with(vec![], Direction::Maximize));
        let err = group_runs("g", vec![a, c]).unwrap_err();
        assert!(err.to_string().contains("direction mismatch"), "{err}");

        assert!(matches!(group_runs("g", vec![]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn status_counts_partition_trials() {
        let mut trials = vec![
            trial("c1", Some(0.5), TrialStatus::Success, 1.0),
            trial("c1", Some(0.5), TrialStatus::Success, 2.0),
            trial("c2", Some(0.5), TrialStatus::Success, 3.0),
            trial("c2", None, TrialStatus::Crashed, 4.0),
        ];
        let run = run_with(trials.clone(), Direction::Minimize);
        let counts = status_counts(&run, BudgetFilter::All).unwrap();
        assert_eq!(counts[&TrialStatus::Success], 3);
        assert_eq!(counts[&TrialStatus::Crashed], 1);
        assert_eq!(counts.values().sum::<usize>(), 4);

        for t in trials.iter_mut().take(2) {
            t.budget = 2.0;
        }
        let mut run = run_with(trials, Direction::Minimize);
        run.budgets = vec![1.0, 2.0];
        let counts = status_counts(&run, BudgetFilter::At(1.0)).unwrap();
        assert_eq!(counts.values().sum::<usize>(), 2);
        assert!(status_counts(&run, BudgetFilter::At(3.0)).is_err());

        let empty = run_with(vec![], Direction::Minimize);
        let counts = status_counts(&empty, BudgetFilter::All).unwrap();
        assert!(counts.values().all(|c| *c == 0));
        assert_eq!(counts.len(), TrialStatus::ALL.len());
    }

    #[test]
    fn default_config_follows_conditions() {
        let d = space().default_config();
        assert_eq!(d.len(), 3);
        let mut c = cfg(&[("lr", 0.1.into()), ("opt", "adam".into()), ("momentum", 0.2.into())]);
        space().complete_activation(&mut c, |hp| hp.default.clone());
        assert!(!c.contains_key("momentum"));
    }

    #[test]
    fn numeric_values_compare_across_representations() {
        assert_eq!(HpValue::Int(5), HpValue::Float(5.0));
        assert_ne!(HpValue::Str("5".into()), HpValue::Int(5));
    }
}
