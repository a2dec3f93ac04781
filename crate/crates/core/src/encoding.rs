//! Numeric view of configurations.
//!
//! Float and integer hyperparameters map onto `[0, 1]` (in log10 space when
//! the hyperparameter is log-scaled), categorical and ordinal ones onto their
//! choice index, constants onto `0.0`. Inactive hyperparameters are encoded
//! as [`INACTIVE`].

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::run_model::{
    BudgetSelect, Config, ConfigurationSpace, HpKind, HpValue, Hyperparameter, Run, TrialStatus,
};

/// Encoded value of an inactive hyperparameter.
pub const INACTIVE: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    Linear { lower: f64, upper: f64, integer: bool },
    Log10 { lower: f64, upper: f64, integer: bool },
    Categorical { choices: Vec<String> },
    Constant { value: HpValue },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub normalization: Normalization,
}

impl Column {
    pub fn from_hyperparameter(hp: &Hyperparameter) -> Self {
        let normalization = match &hp.kind {
            HpKind::Float { lower, upper, log } | HpKind::Integer { lower, upper, log } => {
                let integer = matches!(hp.kind, HpKind::Integer { .. });
                if *log {
                    Normalization::Log10 {
                        lower: *lower,
                        upper: *upper,
                        integer,
                    }
                } else {
                    Normalization::Linear {
                        lower: *lower,
                        upper: *upper,
                        integer,
                    }
                }
            }
            HpKind::Categorical { choices } | HpKind::Ordinal { choices } => {
                Normalization::Categorical {
                    choices: choices.clone(),
                }
            }
            HpKind::Constant => Normalization::Constant {
                value: hp.default.clone(),
            },
        };
        Self {
            name: hp.name.clone(),
            normalization,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.normalization, Normalization::Categorical { .. })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.normalization, Normalization::Constant { .. })
    }

    /// Number of category codes, or 0 for non-categorical columns.
    pub fn cardinality(&self) -> usize {
        match &self.normalization {
            Normalization::Categorical { choices } => choices.len(),
            _ => 0,
        }
    }

    /// Range of active encoded values.
    pub fn bounds(&self) -> (f64, f64) {
        match &self.normalization {
            Normalization::Linear { .. } | Normalization::Log10 { .. } => (0.0, 1.0),
            Normalization::Categorical { choices } => (0.0, choices.len().saturating_sub(1) as f64),
            Normalization::Constant { .. } => (0.0, 0.0),
        }
    }

    /// Grid of encoded values spanning the column: `size` evenly spaced
    /// points for numeric columns, every code for categorical ones.
    pub fn grid(&self, size: usize) -> Vec<f64> {
        match &self.normalization {
            Normalization::Linear { .. } | Normalization::Log10 { .. } => match size {
                0 => vec![],
                1 => vec![0.5],
                n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
            },
            Normalization::Categorical { choices } => (0..choices.len()).map(|i| i as f64).collect(),
            Normalization::Constant { .. } => vec![0.0],
        }
    }

    pub fn encode(&self, value: &HpValue) -> Result<f64> {
        let out_of_bounds = || {
            Error::OutOfBounds(format!(
                "value {value} does not fit hyperparameter `{}`",
                self.name
            ))
        };
        match &self.normalization {
            Normalization::Linear { lower, upper, .. } => {
                let v = value.as_f64().ok_or_else(out_of_bounds)?;
                if !(v >= *lower && v <= *upper) {
                    return Err(out_of_bounds());
                }
                Ok(((v - lower) / (upper - lower)).clamp(0.0, 1.0))
            }
            Normalization::Log10 { lower, upper, .. } => {
                let v = value.as_f64().ok_or_else(out_of_bounds)?;
                if !(v >= *lower && v <= *upper) {
                    return Err(out_of_bounds());
                }
                let (lo, hi) = (lower.log10(), upper.log10());
                Ok(((v.log10() - lo) / (hi - lo)).clamp(0.0, 1.0))
            }
            Normalization::Categorical { choices } => {
                let s = value.as_str().ok_or_else(out_of_bounds)?;
                choices
                    .iter()
                    .position(|c| c == s)
                    .map(|i| i as f64)
                    .ok_or_else(out_of_bounds)
            }
            Normalization::Constant { .. } => Ok(0.0),
        }
    }

    /// Inverse of [`Column::encode`]; integers are rounded to the nearest
    /// value and everything is clamped into the declared range.
    pub fn decode(&self, encoded: f64) -> HpValue {
        let u = encoded.clamp(0.0, 1.0);
        match &self.normalization {
            Normalization::Linear {
                lower,
                upper,
                integer,
            } => finish_numeric(lower + u * (upper - lower), *lower, *upper, *integer),
            Normalization::Log10 {
                lower,
                upper,
                integer,
            } => {
                let (lo, hi) = (lower.log10(), upper.log10());
                finish_numeric(10f64.powf(lo + u * (hi - lo)), *lower, *upper, *integer)
            }
            Normalization::Categorical { choices } => {
                let idx = (encoded.round().max(0.0) as usize).min(choices.len().saturating_sub(1));
                HpValue::Str(choices[idx].clone())
            }
            Normalization::Constant { value } => value.clone(),
        }
    }
}

fn finish_numeric(v: f64, lower: f64, upper: f64, integer: bool) -> HpValue {
    let v = v.clamp(lower, upper);
    if integer {
        HpValue::Int((v.round().clamp(lower.ceil(), upper.floor())) as i64)
    } else {
        HpValue::Float(v)
    }
}

pub fn columns(space: &ConfigurationSpace) -> Vec<Column> {
    space.iter().map(Column::from_hyperparameter).collect()
}

/// Encodes one configuration; hyperparameters absent from `config` are
/// treated as inactive.
pub fn encode_config(space: &ConfigurationSpace, config: &Config) -> Result<Vec<f64>> {
    encode_with(&columns(space), config)
}

pub(crate) fn encode_with(columns: &[Column], config: &Config) -> Result<Vec<f64>> {
    columns
        .iter()
        .map(|c| match config.get(&c.name) {
            Some(v) => c.encode(v),
            None => Ok(INACTIVE),
        })
        .collect()
}

/// Decodes an encoded vector back into a configuration. Sentinel entries
/// become absent keys.
pub fn decode_vector(columns: &[Column], encoded: &[f64]) -> Config {
    columns
        .iter()
        .zip(encoded)
        .filter(|(_, v)| **v != INACTIVE)
        .map(|(c, v)| (c.name.clone(), c.decode(*v)))
        .collect()
}

/// Draws a random configuration, uniform in the encoded space of every
/// active hyperparameter.
pub fn sample_config<R: Rng + ?Sized>(space: &ConfigurationSpace, rng: &mut R) -> Config {
    let mut config = Config::new();
    space.complete_activation(&mut config, |hp| {
        let col = Column::from_hyperparameter(hp);
        match &col.normalization {
            Normalization::Categorical { choices } => {
                HpValue::Str(choices[rng.gen_range(0..choices.len())].clone())
            }
            Normalization::Constant { value } => value.clone(),
            Normalization::Linear {
                lower,
                upper,
                integer: true,
            } => HpValue::Int(rng.gen_range(lower.ceil() as i64..=upper.floor() as i64)),
            _ => col.decode(rng.gen::<f64>()),
        }
    });
    config
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodedMatrix {
    pub rows: Vec<Vec<f64>>,
    pub config_ids: Vec<String>,
    pub columns: Vec<Column>,
    pub y: Vec<f64>,
    pub objective: String,
    #[serde(skip)]
    pub budget: BudgetSelect,
}

impl EncodedMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }
}

/// One row per trial whose status is in `statuses` and which has a finite
/// value for `objective` at the selected budget, in log order.
pub fn encode_run(
    run: &Run,
    objective: &str,
    budget: BudgetSelect,
    statuses: &[TrialStatus],
) -> Result<EncodedMatrix> {
    run.objective(objective)?;
    run.check_budget(budget)?;
    let keep = |t: &&crate::run_model::Trial| {
        statuses.contains(&t.status) && t.value(objective).is_some()
    };
    let candidates: Vec<_> = run.trials().iter().filter(keep).collect();
    let selected: Vec<_> = match budget {
        BudgetSelect::At(b) => candidates.into_iter().filter(|t| t.budget == b).collect(),
        BudgetSelect::Highest => {
            let mut top = std::collections::BTreeMap::new();
            for t in &candidates {
                let e = top.entry(t.config_id.as_str()).or_insert(t.budget);
                *e = f64::max(*e, t.budget);
            }
            candidates
                .into_iter()
                .filter(|t| top.get(t.config_id.as_str()) == Some(&t.budget))
                .collect()
        }
    };
    if selected.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no trials with a value for `{objective}` at budget {}",
            budget_label(budget)
        )));
    }
    let columns = columns(run.space());
    let mut rows = Vec::with_capacity(selected.len());
    let mut config_ids = Vec::with_capacity(selected.len());
    let mut y = Vec::with_capacity(selected.len());
    for t in selected {
        let config = run
            .config(&t.config_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown config `{}`", t.config_id)))?;
        rows.push(encode_with(&columns, config)?);
        config_ids.push(t.config_id.clone());
        y.push(t.value(objective).expect("filtered"));
    }
    Ok(EncodedMatrix {
        rows,
        config_ids,
        columns,
        y,
        objective: objective.to_string(),
        budget,
    })
}

pub(crate) fn budget_label(budget: BudgetSelect) -> String {
    match budget {
        BudgetSelect::At(b) => b.to_string(),
        BudgetSelect::Highest => "highest".to_string(),
    }
}

/// Mixed-space distance with uniform weights. Numeric columns contribute
/// `|a - b|`, categorical columns `[a != b]`; a column active in exactly one
/// vector contributes 1, one inactive in both contributes 0.
#[derive(Debug, Clone)]
pub struct DistanceMetric {
    categorical: Vec<bool>,
}

impl DistanceMetric {
    pub fn new(space: &ConfigurationSpace) -> Self {
        Self::from_columns(&columns(space))
    }

    pub fn from_columns(columns: &[Column]) -> Self {
        Self {
            categorical: columns.iter().map(Column::is_categorical).collect(),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let d = self.categorical.len();
        if a.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a.len(),
            });
        }
        if b.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: b.len(),
            });
        }
        if d == 0 {
            return Ok(0.0);
        }
        let sum: f64 = a
            .iter()
            .zip(b)
            .zip(&self.categorical)
            .map(|((&x, &y), &cat)| {
                let delta = match (x == INACTIVE, y == INACTIVE) {
                    (true, true) => 0.0,
                    (true, false) | (false, true) => 1.0,
                    _ if cat => f64::from(u8::from(x != y)),
                    _ => (x - y).abs(),
                };
                delta * delta
            })
            .sum();
        Ok((sum / d as f64).sqrt())
    }
}

pub fn config_distance(space: &ConfigurationSpace, a: &[f64], b: &[f64]) -> Result<f64> {
    DistanceMetric::new(space).distance(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run_model::{Objective, Trial};
    use std::collections::BTreeMap;

    fn hp_col(hp: Hyperparameter) -> Column {
        Column::from_hyperparameter(&hp)
    }

    #[test]
    fn linear_log_and_categorical_encoding() {
        let c = hp_col(Hyperparameter::float("x", 0.0, 10.0, 1.0));
        assert_eq!(c.encode(&5.0.into()).unwrap(), 0.5);
        let c = hp_col(Hyperparameter::float("lr", 1e-4, 1.0, 1e-3).log_scale());
        assert!((c.encode(&1e-2.into()).unwrap() - 0.5).abs() < 1e-12);
        let c = hp_col(Hyperparameter::categorical("k", &["a", "b", "c"], "a"));
        assert_eq!(c.encode(&"c".into()).unwrap(), 2.0);
        let c = hp_col(Hyperparameter::constant("z", "fixed"));
        assert_eq!(c.encode(&"fixed".into()).unwrap(), 0.0);
    }

    #[test]
    fn out_of_bounds_values_are_rejected() {
        let c = hp_col(Hyperparameter::float("x", 0.0, 1.0, 0.5));
        assert!(matches!(c.encode(&2.0.into()), Err(Error::OutOfBounds(_))));
        let c = hp_col(Hyperparameter::categorical("k", &["a"], "a"));
        assert!(c.encode(&"z".into()).is_err());
    }

    #[test]
    fn integer_decoding_rounds() {
        let c = hp_col(Hyperparameter::integer("n", 1, 10, 5));
        assert_eq!(c.decode(c.encode(&HpValue::Int(7)).unwrap()), HpValue::Int(7));
        assert_eq!(c.decode(0.49), HpValue::Int(5));
    }

    #[test]
    fn inactive_encodes_to_sentinel() {
        let space = ConfigurationSpace::new(vec![
            Hyperparameter::categorical("opt", &["sgd", "adam"], "sgd"),
            Hyperparameter::float("m", 0.0, 1.0, 0.5).active_when("opt", vec!["sgd".into()]),
        ]);
        let config: Config = [("opt".to_string(), HpValue::from("adam"))].into();
        assert_eq!(encode_config(&space, &config).unwrap(), vec![1.0, INACTIVE]);
    }

    #[test]
    fn distance_examples() {
        let space = ConfigurationSpace::new(vec![Hyperparameter::float("x", 0.0, 1.0, 0.5)]);
        assert_eq!(config_distance(&space, &[0.3], &[0.3]).unwrap(), 0.0);
        assert_eq!(config_distance(&space, &[0.0], &[1.0]).unwrap(), 1.0);

        let space = ConfigurationSpace::new(vec![
            Hyperparameter::float("x", 0.0, 1.0, 0.5),
            Hyperparameter::categorical("k", &["a", "b"], "a"),
        ]);
        // sqrt((1^2 + 0^2) / 2)
        let d = config_distance(&space, &[0.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(config_distance(&space, &[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn distance_handles_inactive_columns() {
        let metric = DistanceMetric {
            categorical: vec![false, false],
        };
        assert_eq!(metric.distance(&[INACTIVE, 0.2], &[INACTIVE, 0.2]).unwrap(), 0.0);
        let d = metric.distance(&[INACTIVE, 0.2], &[0.0, 0.2]).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
    }

    fn tiny_run() -> Run {
        let space = ConfigurationSpace::new(vec![
            Hyperparameter::float("x", 0.0, 10.0, 1.0),
            Hyperparameter::categorical("k", &["a", "b"], "a"),
        ]);
        let configs: BTreeMap<String, Config> = (0..4)
            .map(|i| {
                (
                    format!("c{i}"),
                    [
                        ("x".to_string(), HpValue::Float(i as f64)),
                        ("k".to_string(), HpValue::from(if i % 2 == 0 { "a" } else { "b" })),
                    ]
                    .into(),
                )
            })
            .collect();
        let trials = (0..4)
            .map(|i| Trial {
                config_id: format!("c{i}"),
                budget: 1.0,
                seed: None,
                objectives: [("loss".to_string(), (i < 3).then_some(i as f64))].into(),
                status: if i < 3 {
                    TrialStatus::Success
                } else {
                    TrialStatus::Crashed
                },
                start: i as f64,
                end: Some(i as f64 + 1.0),
            })
            .collect();
        Run::new(
            "tiny",
            space,
            vec![Objective::minimize("loss")],
            vec![1.0, 2.0],
            configs,
            trials,
            BTreeMap::new(),
        )
    }

    #[test]
    fn encode_run_filters_and_matches_encode_config() {
        let run = tiny_run();
        let m = encode_run(&run, "loss", BudgetSelect::At(1.0), &[TrialStatus::Success]).unwrap();
        assert_eq!(m.n_rows(), 3);
        for (row, cid) in m.rows.iter().zip(&m.config_ids) {
            let expected = encode_config(run.space(), run.config(cid).unwrap()).unwrap();
            assert_eq!(row, &expected);
        }
        assert_eq!(m.y, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn encode_run_empty_budget_is_an_error() {
        let run = tiny_run();
        let err = encode_run(&run, "loss", BudgetSelect::At(2.0), &[TrialStatus::Success]);
        assert!(matches!(err, Err(Error::EmptySelection(_))));
        let err = encode_run(&run, "loss", BudgetSelect::At(7.0), &[TrialStatus::Success]);
        assert!(matches!(err, Err(Error::UnknownBudget(_))));
    }
}
