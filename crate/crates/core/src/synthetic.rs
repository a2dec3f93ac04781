//! Deterministic synthetic runs for demos, tests and benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::converters::{ingest_records, TrialRecord};
use crate::encoding::{columns, encode_config, sample_config, INACTIVE};
use crate::error::Result;
use crate::surrogate::{DimKind, Node, SplitRule, Tree};
use crate::run_model::{
    Config, ConfigurationSpace, HpValue, Hyperparameter, Objective, Run, TrialStatus,
};

/// Space of `d` floats `x1..xd` on `[0, 1]`.
pub fn unit_cube_space(d: usize) -> ConfigurationSpace {
    ConfigurationSpace::new(
        (1..=d)
            .map(|i| Hyperparameter::float(&format!("x{i}"), 0.0, 1.0, 0.5))
            .collect(),
    )
}

/// `n_trials` uniform samples of the unit cube scored by `f`, minimizing
/// `loss` at a single budget of 1.
pub fn unit_cube_run(
    name: &str,
    d: usize,
    n_trials: usize,
    seed: u64,
    f: impl Fn(&[f64]) -> f64,
) -> Result<Run> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n_trials)
        .map(|i| {
            let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let config: Config = x
                .iter()
                .enumerate()
                .map(|(j, v)| (format!("x{}", j + 1), HpValue::Float(*v)))
                .collect();
            TrialRecord {
                config,
                budget: 1.0,
                seed: None,
                objectives: BTreeMap::from([("loss".to_string(), Some(f(&x)))]),
                status: TrialStatus::Success,
                start: i as f64,
                end: Some(i as f64 + 1.0),
            }
        })
        .collect();
    ingest_records(name, unit_cube_space(d), vec![Objective::minimize("loss")], vec![1.0], records)
}

/// Space with `n` hyperparameters cycling through every kind, including
/// conditional ones.
pub fn mixed_space(n: usize) -> ConfigurationSpace {
    let hps = (0..n)
        .map(|i| {
            let name = format!("hp{i:02}");
            match i % 6 {
                0 => Hyperparameter::float(&name, 0.0, 1.0, 0.5),
                1 => Hyperparameter::float(&name, 1e-5, 1.0, 1e-3).log_scale(),
                2 => Hyperparameter::integer(&name, 1, 100, 10),
                3 => Hyperparameter::categorical(&name, &["a", "b", "c"], "a"),
                4 => Hyperparameter::float(&name, 0.0, 1.0, 0.5)
                    .active_when(&format!("hp{:02}", i - 1), vec![HpValue::from("a")]),
                _ => Hyperparameter::ordinal(&name, &["low", "mid", "high"], "mid"),
            }
        })
        .collect();
    ConfigurationSpace::new(hps)
}

fn mixed_loss(encoded: &[f64], categorical: &[bool], budget: f64, noise: f64) -> f64 {
    let core: f64 = encoded
        .iter()
        .zip(categorical)
        .enumerate()
        .filter(|(_, (v, _))| **v != INACTIVE)
        .map(|(j, (v, cat))| {
            let w = 1.0 / (1.0 + j as f64);
            if *cat {
                if *v == 0.0 { 0.0 } else { 0.2 * w }
            } else {
                w * (v - 0.3).powi(2)
            }
        })
        .sum();
    core * (1.0 + 1.0 / budget) + 0.01 * noise
}

/// Multi-fidelity run over [`mixed_space`] with `n_trials` trials, two
/// objectives (`loss`, `cost`) and budgets 1, 3 and 9. Every configuration
/// is evaluated at budget 1, every third also at 3 and every ninth at 9;
/// about 5% of trials crash.
pub fn mixed_run(name: &str, n_hps: usize, n_trials: usize, seed: u64) -> Result<Run> {
    let space = mixed_space(n_hps);
    let categorical: Vec<bool> = columns(&space).iter().map(|c| c.is_categorical()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_trials);
    let mut clock = 0.0;
    let mut index = 0usize;
    while records.len() < n_trials {
        let config = sample_config(&space, &mut rng);
        let encoded = encode_config(&space, &config)?;
        let mut budgets = vec![1.0];
        if index % 3 == 0 {
            budgets.push(3.0);
        }
        if index % 9 == 0 {
            budgets.push(9.0);
        }
        index += 1;
        for budget in budgets {
            if records.len() == n_trials {
                break;
            }
            let duration = budget * rng.gen_range(0.5..1.5);
            let crashed = rng.gen::<f64>() < 0.05;
            let noise: f64 = rng.gen_range(-1.0..1.0);
            let objectives = if crashed {
                BTreeMap::from([("loss".to_string(), None), ("cost".to_string(), None)])
            } else {
                let first = encoded.first().copied().unwrap_or(0.0).max(0.0);
                BTreeMap::from([
                    (
                        "loss".to_string(),
                        Some(mixed_loss(&encoded, &categorical, budget, noise)),
                    ),
                    ("cost".to_string(), Some(duration * (1.0 + first))),
                ])
            };
            records.push(TrialRecord {
                config: config.clone(),
                budget,
                seed: Some(seed as i64),
                objectives,
                status: if crashed {
                    TrialStatus::Crashed
                } else {
                    TrialStatus::Success
                },
                start: clock,
                end: Some(clock + duration),
            });
            clock += duration;
        }
    }
    ingest_records(
        name,
        space,
        vec![Objective::minimize("loss"), Objective::minimize("cost")],
        vec![1.0, 3.0, 9.0],
        records,
    )
}

/// A small random run exercising every hyperparameter kind, conditions,
/// several budgets, mixed objective directions and every trial status.
/// Intended for fuzzing round trips and invariants.
pub fn random_run(seed: u64) -> Result<Run> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_hps = rng.gen_range(1..=6);
    let mut hps: Vec<Hyperparameter> = Vec::new();
    for i in 0..n_hps {
        let name = format!("p{i}");
        let hp = match rng.gen_range(0..6) {
            0 => {
                let lo: f64 = rng.gen_range(-5.0..5.0);
                Hyperparameter::float(&name, lo, lo + rng.gen_range(0.5..10.0), lo)
            }
            1 => Hyperparameter::float(&name, 1e-4, 10.0, 0.1).log_scale(),
            2 => {
                let lo = rng.gen_range(-10..10);
                Hyperparameter::integer(&name, lo, lo + rng.gen_range(1..50), lo)
            }
            3 => Hyperparameter::categorical(&name, &["red", "green", "blue"], "green"),
            4 => Hyperparameter::ordinal(&name, &["s", "m", "l", "xl"], "s"),
            _ => Hyperparameter::constant(&name, "fixed"),
        };
        // occasionally hang the new hyperparameter below an earlier categorical
        let parent = hps
            .iter()
            .filter(|h| matches!(h.kind, crate::run_model::HpKind::Categorical { .. }))
            .map(|h| h.name.clone())
            .last();
        let hp = match parent {
            Some(p) if rng.gen_bool(0.5) => hp.active_when(&p, vec![HpValue::from("red"), HpValue::from("blue")]),
            _ => hp,
        };
        hps.push(hp);
    }
    let space = ConfigurationSpace::new(hps);

    let n_objectives = rng.gen_range(1..=3);
    let objectives: Vec<Objective> = (0..n_objectives)
        .map(|i| {
            let name = format!("o{i}");
            let mut o = if rng.gen_bool(0.5) {
                Objective::minimize(&name)
            } else {
                Objective::maximize(&name)
            };
            if rng.gen_bool(0.3) {
                o.lower = Some(-100.0);
                o.upper = Some(100.0);
            }
            o
        })
        .collect();
    let budgets: Vec<f64> = match rng.gen_range(0..3) {
        0 => vec![1.0],
        1 => vec![10.0, 30.0],
        _ => vec![0.5, 1.5, 4.5],
    };

    let n_configs = rng.gen_range(1..=12);
    let pool: Vec<Config> = (0..n_configs).map(|_| sample_config(&space, &mut rng)).collect();
    let n_trials = rng.gen_range(1..=40);
    let mut clock = 0.0;
    let records = (0..n_trials)
        .map(|_| {
            let status = TrialStatus::ALL[rng.gen_range(0..TrialStatus::ALL.len())];
            let start = clock;
            clock += rng.gen_range(0.0..5.0);
            let end = (status != TrialStatus::Running).then(|| clock);
            let objectives = objectives
                .iter()
                .map(|o| {
                    let v = match status {
                        TrialStatus::Success => Some(rng.gen_range(-50.0..50.0)),
                        TrialStatus::Timeout if rng.gen_bool(0.5) => Some(rng.gen_range(-50.0..50.0)),
                        _ => None,
                    };
                    (o.name.clone(), v.map(|v: f64| (v * 1000.0).round() / 1000.0))
                })
                .collect();
            TrialRecord {
                config: pool[rng.gen_range(0..pool.len())].clone(),
                budget: budgets[rng.gen_range(0..budgets.len())],
                seed: rng.gen_bool(0.5).then(|| rng.gen_range(0..100)),
                objectives,
                status,
                start,
                end,
            }
        })
        .collect();
    ingest_records(&format!("random-{seed}"), space, objectives, budgets, records)
}

/// Random regression tree over `kinds` with depth at most `max_depth`.
/// Thresholds lie strictly inside `(0, 1)`; categorical splits send a random
/// non-trivial subset of codes left.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, kinds: &[DimKind], max_depth: usize) -> Tree {
    fn grow<R: Rng + ?Sized>(
        rng: &mut R,
        kinds: &[DimKind],
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let splittable: Vec<usize> = (0..kinds.len())
            .filter(|d| !matches!(kinds[*d], DimKind::Constant | DimKind::Categorical(1)))
            .collect();
        let index = nodes.len();
        if depth == 0 || splittable.is_empty() || (index > 0 && rng.gen_bool(0.25)) {
            nodes.push(Node::Leaf {
                mean: rng.gen_range(-10.0..10.0),
                count: 1,
            });
            return index;
        }
        let dim = splittable[rng.gen_range(0..splittable.len())];
        let rule = match kinds[dim] {
            DimKind::Categorical(k) => {
                let mut left: Vec<bool> = (0..=k).map(|_| rng.gen_bool(0.5)).collect();
                left[rng.gen_range(0..k)] = true;
                left[rng.gen_range(0..k)] = false;
                SplitRule::Categories(left)
            }
            _ => SplitRule::Threshold(rng.gen_range(0.01..0.99)),
        };
        nodes.push(Node::Leaf { mean: 0.0, count: 0 });
        let left = grow(rng, kinds, depth - 1, nodes);
        let right = grow(rng, kinds, depth - 1, nodes);
        nodes[index] = Node::Split {
            dim,
            rule,
            left,
            right,
        };
        index
    }
    let mut nodes = Vec::new();
    grow(rng, kinds, max_depth, &mut nodes);
    Tree::from_nodes(nodes).expect("grown trees are well formed")
}
