use std::sync::Arc;

use hpolens_core::budget_analysis::spearman;
use hpolens_core::converters::{load_tabular, write_tabular, RunSource, TRIALS_FILE};
use hpolens_core::encoding::{columns, decode_vector, encode_config, sample_config, DistanceMetric};
use hpolens_core::footprint::{border_configs, mds_embed};
use hpolens_core::hp_analysis::{fanova, fanova_from_forest, lpi_from_surrogate, pdp_with};
use hpolens_core::objective_analysis::{cost_over_time, non_dominated, XAxis};
use hpolens_core::run_model::{
    group_runs, incumbent, BudgetSelect, Direction, HpValue, Run, TrialStatus,
};
use hpolens_core::surrogate::{fit, tree_marginal, DimKind, Forest, ForestParams, Surrogate};
use hpolens_core::synthetic::{random_run, random_tree, unit_cube_run, unit_cube_space};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dominates(a: (f64, f64), b: (f64, f64), dirs: (Direction, Direction)) -> bool {
    let ge = |d: Direction, x: f64, y: f64| match d {
        Direction::Minimize => x <= y,
        Direction::Maximize => x >= y,
    };
    let gt = |d: Direction, x: f64, y: f64| match d {
        Direction::Minimize => x < y,
        Direction::Maximize => x > y,
    };
    ge(dirs.0, a.0, b.0) && ge(dirs.1, a.1, b.1) && (gt(dirs.0, a.0, b.0) || gt(dirs.1, a.1, b.1))
}

fn direction(max: bool) -> Direction {
    if max {
        Direction::Maximize
    } else {
        Direction::Minimize
    }
}

fn first_objective_run(seed: u64) -> Option<(Run, String)> {
    let run = random_run(seed).ok()?;
    let obj = run.objectives()[0].name.clone();
    Some((run, obj))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pareto_matches_pairwise_dominance(
        pts in prop::collection::vec((0u8..12, 0u8..12), 0..60),
        max_a in any::<bool>(),
        max_b in any::<bool>(),
    ) {
        let pts: Vec<(f64, f64)> = pts.iter().map(|(a, b)| (*a as f64, *b as f64)).collect();
        let dirs = (direction(max_a), direction(max_b));
        let flags = non_dominated(&pts, dirs);
        for (i, p) in pts.iter().enumerate() {
            let expected = !pts.iter().any(|q| dominates(*q, *p, dirs));
            prop_assert_eq!(flags[i], expected, "point {:?}", p);
        }
    }

    #[test]
    fn spearman_is_rank_invariant_and_bounded(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..40),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let rho = spearman(&a, &b);
        let warped: Vec<f64> = a.iter().map(|v| v.powi(3) + 5.0 * v).collect();
        prop_assert_eq!(rho, spearman(&warped, &b));
        prop_assert_eq!(rho, spearman(&b, &a));
        if let Some(r) = rho {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn spearman_matches_the_squared_rank_difference_formula(
        perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        // without ties rho = 1 - 6 sum d^2 / (n (n^2 - 1))
        let n = perm.len() as f64;
        let a: Vec<f64> = (0..perm.len()).map(|i| i as f64).collect();
        let b: Vec<f64> = perm.iter().map(|p| *p as f64).collect();
        let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        let expected = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        prop_assert!((spearman(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn distance_is_a_pseudo_metric(seed in any::<u64>()) {
        let Ok(run) = random_run(seed) else { return Ok(()) };
        let space = run.space();
        let metric = DistanceMetric::new(space);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<Vec<f64>> = (0..3)
            .map(|_| encode_config(space, &sample_config(space, &mut rng)).unwrap())
            .collect();
        let d = |i: usize, j: usize| metric.distance(&v[i], &v[j]).unwrap();
        prop_assert_eq!(d(0, 0), 0.0);
        prop_assert_eq!(d(0, 1), d(1, 0));
        prop_assert!((0.0..=1.0).contains(&d(0, 1)));
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
    }

    #[test]
    fn encoding_round_trips(seed in any::<u64>()) {
        let Ok(run) = random_run(seed) else { return Ok(()) };
        let space = run.space();
        let cols = columns(space);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for _ in 0..5 {
            let config = sample_config(space, &mut rng);
            let back = decode_vector(&cols, &encode_config(space, &config).unwrap());
            prop_assert_eq!(config.keys().collect::<Vec<_>>(), back.keys().collect::<Vec<_>>());
            for (k, v) in &config {
                match (v, &back[k]) {
                    (HpValue::Float(a), HpValue::Float(b)) => {
                        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b)
                    }
                    (a, b) => prop_assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn tabular_round_trip_is_identity(seed in any::<u64>()) {
        let Ok(run) = random_run(seed) else { return Ok(()) };
        let dir = tempfile::tempdir().unwrap();
        write_tabular(&run, dir.path()).unwrap();
        let back = load_tabular(dir.path()).unwrap();
        prop_assert_eq!(back, run);
    }

    #[test]
    fn trajectories_are_monotone(seed in any::<u64>(), trials_axis in any::<bool>()) {
        let Some((run, obj)) = first_objective_run(seed) else { return Ok(()) };
        let axis = if trials_axis { XAxis::Trials } else { XAxis::Time };
        let Ok(t) = cost_over_time(&run, &obj, BudgetSelect::Highest, axis) else { return Ok(()) };
        let dir = run.objectives()[0].direction;
        for w in t.ys.windows(2) {
            prop_assert!(!dir.better(w[0], w[1]), "{:?}", t.ys);
        }
        for w in t.xs.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        let group = group_runs("g", vec![Arc::new(run.clone())]).unwrap();
        let g = cost_over_time(&group, &obj, BudgetSelect::Highest, axis).unwrap();
        prop_assert_eq!(&g.xs, &t.xs);
        prop_assert_eq!(&g.ys, &t.ys);
        prop_assert!(g.std.unwrap().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn incumbent_bounds_every_selected_value(seed in any::<u64>()) {
        let Some((run, obj)) = first_objective_run(seed) else { return Ok(()) };
        let dir = run.objectives()[0].direction;
        let inc = incumbent(&run, &obj, BudgetSelect::Highest).unwrap();
        let values: Vec<f64> = run
            .selected_trials(&obj, BudgetSelect::Highest)
            .iter()
            .filter_map(|t| t.value(&obj))
            .collect();
        match inc {
            None => prop_assert!(values.is_empty()),
            Some(inc) => {
                prop_assert!(values.iter().all(|v| !dir.better(*v, inc.value)));
                prop_assert!(values.contains(&inc.value));
            }
        }
    }

    #[test]
    fn marginals_agree_with_predictions_and_box_means(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kinds = [DimKind::Numeric, DimKind::Categorical(3), DimKind::Numeric];
        let tree = random_tree(&mut rng, &kinds, 4);
        let x = [rng.gen::<f64>(), rng.gen_range(0..3) as f64, rng.gen::<f64>()];
        let pinned = tree_marginal(&tree, &kinds, &[0, 1, 2], &x).unwrap();
        prop_assert!((pinned - tree.predict(&x)).abs() < 1e-12);
        // averaging a categorical marginal over its codes recovers the box mean
        let free = tree_marginal(&tree, &kinds, &[], &[]).unwrap();
        let avg: f64 = (0..3)
            .map(|c| tree_marginal(&tree, &kinds, &[1], &[c as f64]).unwrap())
            .sum::<f64>() / 3.0;
        prop_assert!((free - avg).abs() < 1e-9);
    }

    #[test]
    fn lpi_is_a_probability_vector(seed in 0u64..1000) {
        let run = unit_cube_run("l", 3, 40, seed, |x| x[0] * x[1] + x[2]).unwrap();
        let matrix = hpolens_core::encoding::encode_run(&run, "loss", BudgetSelect::Highest, &[TrialStatus::Success]).unwrap();
        let forest = fit(&matrix, &ForestParams { n_trees: 4, seed, ..Default::default() }).unwrap();
        let cols = columns(run.space());
        let center: Vec<f64> = (0..3).map(|_| 0.5).collect();
        let values = lpi_from_surrogate(&forest, &cols, &center, 10).unwrap();
        let sum: f64 = values.iter().map(|v| v.0).sum();
        prop_assert!(values.iter().all(|v| v.0 >= 0.0 && v.1 >= 0.0));
        prop_assert!(sum == 0.0 || (sum - 1.0).abs() < 1e-9, "{}", sum);
    }

    #[test]
    fn mds_stress_never_increases(seed in any::<u64>()) {
        let Ok(run) = random_run(seed) else { return Ok(()) };
        let space = run.space();
        let metric = DistanceMetric::new(space);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<Vec<f64>> = (0..12)
            .map(|_| encode_config(space, &sample_config(space, &mut rng)).unwrap())
            .collect();
        let d: Vec<Vec<f64>> = v.iter().map(|a| v.iter().map(|b| metric.distance(a, b).unwrap()).collect()).collect();
        let e = mds_embed(&d, seed).unwrap();
        for w in e.stress_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{:?}", e.stress_history);
        }
        prop_assert!(e.stress <= 1.0);
    }
}

#[test]
fn mds_stress_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pts: Vec<[f64; 3]> = (0..20).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let dist = |a: &[f64; 3], b: &[f64; 3]| {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    let d: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| dist(a, b)).collect()).collect();
    let perm: Vec<usize> = (0..20).rev().collect();
    let dp: Vec<Vec<f64>> = perm.iter().map(|i| perm.iter().map(|j| d[*i][*j]).collect()).collect();
    let a = mds_embed(&d, 0).unwrap().stress;
    let b = mds_embed(&dp, 0).unwrap().stress;
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn fanova_is_affine_invariant() {
    let base = unit_cube_run("a", 3, 200, 5, |x| x[0] + 0.5 * x[1] * x[2]).unwrap();
    let scaled = unit_cube_run("b", 3, 200, 5, |x| 3.0 * (x[0] + 0.5 * x[1] * x[2]) + 7.0).unwrap();
    let p = ForestParams::default();
    let a = fanova(&base, "loss", BudgetSelect::Highest, &p).unwrap();
    let b = fanova(&scaled, "loss", BudgetSelect::Highest, &p).unwrap();
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert!((x.importance - y.importance).abs() < 1e-9);
        assert!((x.spread - y.spread).abs() < 1e-9);
    }
    let total: f64 = a.entries.iter().map(|e| e.importance).sum();
    assert!(total <= 1.0 + 1e-6);
}

#[test]
fn fanova_matches_a_sampled_decomposition() {
    // first-order variance shares estimated by brute-force grid evaluation
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let kinds = vec![DimKind::Numeric, DimKind::Numeric];
    let tree = random_tree(&mut rng, &kinds, 4);
    let forest = Forest::from_trees(vec![tree.clone()], kinds, 0).unwrap();
    let exact = fanova_from_forest(&forest);
    let n = 400;
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let f: Vec<Vec<f64>> = grid.iter().map(|a| grid.iter().map(|b| tree.predict(&[*a, *b])).collect()).collect();
    let mean = f.iter().flatten().sum::<f64>() / (n * n) as f64;
    let total = f.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / (n * n) as f64;
    if total == 0.0 {
        return;
    }
    let row_means: Vec<f64> = f.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let col_means: Vec<f64> = (0..n).map(|j| f.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let var = |m: &[f64]| m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    assert!((exact[0].0 - var(&row_means) / total).abs() < 2e-2, "{:?}", exact);
    assert!((exact[1].0 - var(&col_means) / total).abs() < 2e-2, "{:?}", exact);
}

#[test]
fn pdp_ignores_unsplit_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // the tree only sees dimension 0; dimension 1 is a constant column
    let tree = random_tree(&mut rng, &[DimKind::Numeric, DimKind::Constant], 4);
    let forest = Forest::from_trees(vec![tree], vec![DimKind::Numeric, DimKind::Numeric], 0).unwrap();
    let space = unit_cube_space(2);
    let curve = pdp_with(&forest, &space, "x2", 20, 30, 1).unwrap();
    assert!(curve.mean.iter().all(|m| *m == curve.mean[0]));
    assert_eq!(curve.grid.len(), curve.std.len());
}

#[test]
fn border_count_is_capped_product() {
    for seed in 0..50 {
        let run = random_run(seed).unwrap();
        let product: usize = columns(run.space())
            .iter()
            .map(|c| if c.is_categorical() { c.cardinality() } else if c.is_constant() { 1 } else { 2 })
            .product();
        for cap in [1, 5, 50] {
            assert_eq!(border_configs(run.space(), cap).len(), product.min(cap));
        }
    }
}

#[test]
fn refresh_after_append_equals_full_reload() {
    for seed in 0..20 {
        let run = random_run(seed).unwrap();
        let full = tempfile::tempdir().unwrap();
        write_tabular(&run, full.path()).unwrap();

        let live = tempfile::tempdir().unwrap();
        let k = run.trials().len() / 2;
        let prefix = Run::new(
            run.name(),
            run.space().clone(),
            run.objectives().to_vec(),
            run.budgets().to_vec(),
            run.configs().clone(),
            run.trials()[..k].to_vec(),
            run.meta().clone(),
        );
        write_tabular(&prefix, live.path()).unwrap();
        let (mut source, first) = RunSource::open(live.path()).unwrap();
        let first = Arc::new(first);

        let lines = std::fs::read_to_string(full.path().join(TRIALS_FILE)).unwrap();
        std::fs::write(live.path().join(TRIALS_FILE), lines).unwrap();
        let (refreshed, changed) = source.refresh(&first).unwrap();
        assert_eq!(changed, k < run.trials().len());
        assert_eq!(*refreshed, load_tabular(full.path()).unwrap(), "seed {seed}");
        assert_eq!(*refreshed, run);
    }
}

#[test]
fn forest_mean_lies_within_leaf_range() {
    let run = unit_cube_run("m", 2, 60, 2, |x| (6.0 * x[0]).sin() + x[1]).unwrap();
    let matrix = hpolens_core::encoding::encode_run(&run, "loss", BudgetSelect::Highest, &[TrialStatus::Success]).unwrap();
    let forest = fit(&matrix, &ForestParams::default()).unwrap();
    let lo = matrix.y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = matrix.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let (m, v) = forest.predict(&[rng.gen(), rng.gen()]).unwrap();
        assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        assert!(v >= 0.0);
    }
}
