//! Two-dimensional picture of the explored configuration space.
//!
//! Evaluated configurations are embedded together with corner ("border")
//! configurations and random support configurations, so that the picture
//! shows where the optimizer looked relative to the extent of the space.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::encoding::{columns, encode_config, sample_config, DistanceMetric, Normalization};
use crate::error::{Error, Result};
use crate::run_model::{incumbent, BudgetSelect, ConfigurationSpace, Run};

pub const MAX_ITERATIONS: usize = 300;
pub const RELATIVE_TOLERANCE: f64 = 1e-6;

fn corner_values(space: &ConfigurationSpace) -> Vec<Vec<f64>> {
    columns(space)
        .iter()
        .map(|c| match &c.normalization {
            Normalization::Linear { .. } | Normalization::Log10 { .. } => vec![0.0, 1.0],
            Normalization::Categorical { choices } => (0..choices.len()).map(|i| i as f64).collect(),
            Normalization::Constant { .. } => vec![0.0],
        })
        .collect()
}

/// Corner configurations of the encoded space: every combination of the
/// per-dimension extremes (both ends of numeric ranges, every categorical
/// code). When there are more than `cap` corners, a deterministic uniform
/// sample of `cap` distinct corners is returned instead.
pub fn border_configs(space: &ConfigurationSpace, cap: usize) -> Vec<Vec<f64>> {
    let values = corner_values(space);
    let radices: Vec<usize> = values.iter().map(Vec::len).collect();
    let count = radices
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128));
    let decode = |digits: &[usize]| -> Vec<f64> {
        digits.iter().zip(&values).map(|(d, v)| v[*d]).collect()
    };

    match count {
        Some(total) if total <= cap as u128 => {
            let mut out = Vec::with_capacity(total as usize);
            let mut digits = vec![0usize; radices.len()];
            for _ in 0..total {
                out.push(decode(&digits));
                // increment, last dimension fastest
                for pos in (0..digits.len()).rev() {
                    digits[pos] += 1;
                    if digits[pos] < radices[pos] {
                        break;
                    }
                    digits[pos] = 0;
                }
            }
            out
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(space.digest());
            let mut chosen: BTreeSet<Vec<usize>> = BTreeSet::new();
            while chosen.len() < cap {
                let digits: Vec<usize> = radices.iter().map(|r| rng.gen_range(0..*r)).collect();
                chosen.insert(digits);
            }
            chosen.iter().map(|d| decode(d)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    /// Normalized stress of the final coordinates.
    pub stress: f64,
    /// Normalized stress of the initial configuration and after every
    /// majorization step.
    pub stress_history: Vec<f64>,
}

fn check_distances(d: &[Vec<f64>]) -> Result<()> {
    let n = d.len();
    for (i, row) in d.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        if row[i] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "distance matrix diagonal entry {i} is {}",
                row[i]
            )));
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "distance ({i}, {j}) = {v} is negative or not finite"
                )));
            }
            let other = d[j][i];
            if (v - other).abs() > 1e-12 * v.abs().max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "distance matrix is not symmetric at ({i}, {j}): {v} vs {other}"
                )));
            }
        }
    }
    Ok(())
}

/// Sum over pairs of squared differences between target and embedded
/// distances.
fn raw_stress(d: &[Vec<f64>], x: &[[f64; 2]]) -> f64 {
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in (i + 1)..x.len() {
                let e = dist(&x[i], &x[j]);
                s += (d[i][j] - e).powi(2);
            }
            s
        })
        .sum()
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Classical (Torgerson) scaling: top two eigenvectors of the
/// double-centered squared distances.
fn classical_mds(d: &[Vec<f64>], seed: u64) -> Vec<[f64; 2]> {
    let n = d.len();
    let sq = DMatrix::from_fn(n, n, |i, j| d[i][j] * d[i][j]);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let scale_of = |k: usize| eig.eigenvalues[order[k]].max(0.0).sqrt();
    let mut coords = vec![[0.0; 2]; n];
    for (axis, k) in (0..2.min(n)).enumerate() {
        let s = scale_of(k);
        let v = eig.eigenvectors.column(order[k]);
        // fix the sign so the output does not depend on the solver's choice
        let pivot = v.iter().cloned().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][axis] = sign * v[i] * s;
        }
    }

    // A rank-deficient start keeps every majorization step on a line; give
    // the missing axis a small deterministic offset derived from each
    // point's distance profile, so identical points stay identical.
    let spread = scale_of(0);
    if n > 2 && spread > 0.0 && scale_of(1) <= 1e-9 * spread {
        for (i, row) in d.iter().enumerate() {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            for v in row {
                h.update(v.to_bits().to_le_bytes());
            }
            let bytes = h.finalize();
            let u = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as f64 / u64::MAX as f64;
            coords[i][1] = (u - 0.5) * 1e-3 * spread;
        }
    }
    coords
}

fn center(x: &mut [[f64; 2]]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let cx = x.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = x.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in x.iter_mut() {
        p[0] -= cx;
        p[1] -= cy;
    }
}

/// Guttman transform of unweighted SMACOF.
fn guttman(d: &[Vec<f64>], x: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = x.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let e = dist(&x[i], &x[j]);
                if e > 0.0 {
                    let w = d[i][j] / e;
                    acc[0] += w * (x[i][0] - x[j][0]);
                    acc[1] += w * (x[i][1] - x[j][1]);
                }
            }
            [acc[0] / n as f64, acc[1] / n as f64]
        })
        .collect()
}

/// Embeds a distance matrix in the plane with SMACOF, starting from
/// classical scaling. Stops once the relative stress decrease drops below
/// [`RELATIVE_TOLERANCE`] or after [`MAX_ITERATIONS`] steps.
pub fn mds_embed(distances: &[Vec<f64>], seed: u64) -> Result<Embedding> {
    check_distances(distances)?;
    let n = distances.len();
    let normalizer: f64 = (0..n)
        .map(|i| ((i + 1)..n).map(|j| distances[i][j].powi(2)).sum::<f64>())
        .sum();
    if normalizer == 0.0 {
        return Ok(Embedding {
            coords: vec![[0.0; 2]; n],
            stress: 0.0,
            stress_history: vec![0.0],
        });
    }
    let normalized = |raw: f64| (raw / normalizer).sqrt();

    let mut x = classical_mds(distances, seed);
    center(&mut x);
    let mut raw = raw_stress(distances, &x);
    let mut history = vec![normalized(raw)];
    for _ in 0..MAX_ITERATIONS {
        if raw == 0.0 {
            break;
        }
        let next = guttman(distances, &x);
        let next_raw = raw_stress(distances, &next);
        let relative = (raw - next_raw) / raw;
        x = next;
        raw = next_raw;
        history.push(normalized(raw));
        if relative < RELATIVE_TOLERANCE {
            break;
        }
    }
    center(&mut x);
    Ok(Embedding {
        coords: x,
        stress: normalized(raw),
        stress_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Evaluated,
    Incumbent,
    Border,
    RandomSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FootprintPoint {
    pub x: f64,
    pub y: f64,
    pub kind: PointKind,
    pub config_id: Option<String>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FootprintResult {
    pub objective: String,
    pub points: Vec<FootprintPoint>,
    pub stress: f64,
}

/// Pairwise distance matrix under the mixed-space metric.
pub fn distance_matrix(metric: &DistanceMetric, vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    vectors
        .par_iter()
        .map(|a| vectors.iter().map(|b| metric.distance(a, b)).collect())
        .collect()
}

/// Embeds the evaluated configurations together with border and random
/// support configurations.
pub fn compute_footprint(
    run: &Run,
    objective: &str,
    budget: BudgetSelect,
    border_cap: usize,
    n_support: usize,
    seed: u64,
) -> Result<FootprintResult> {
    run.check_budget(budget)?;
    let evaluated = run.best_per_config(objective, budget)?;
    if evaluated.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no evaluated configurations for `{objective}` at budget {}",
            crate::encoding::budget_label(budget)
        )));
    }
    let best = incumbent(run, objective, budget)?.map(|i| i.config_id);

    let space = run.space();
    let mut vectors = Vec::new();
    let mut meta: Vec<(PointKind, Option<String>, Option<f64>)> = Vec::new();
    for (config_id, value, _) in &evaluated {
        let config = run
            .config(config_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown config `{config_id}`")))?;
        vectors.push(encode_config(space, config)?);
        let kind = if best.as_deref() == Some(*config_id) {
            PointKind::Incumbent
        } else {
            PointKind::Evaluated
        };
        meta.push((kind, Some(config_id.to_string()), Some(*value)));
    }
    for v in border_configs(space, border_cap) {
        vectors.push(v);
        meta.push((PointKind::Border, None, None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_support {
        vectors.push(encode_config(space, &sample_config(space, &mut rng))?);
        meta.push((PointKind::RandomSupport, None, None));
    }

    let metric = DistanceMetric::new(space);
    let distances = distance_matrix(&metric, &vectors)?;
    let embedding = mds_embed(&distances, seed)?;
    let points = embedding
        .coords
        .iter()
        .zip(meta)
        .map(|(c, (kind, config_id, value))| FootprintPoint {
            x: c[0],
            y: c[1],
            kind,
            config_id,
            value,
        })
        .collect();
    Ok(FootprintResult {
        objective: objective.to_string(),
        points,
        stress: embedding.stress,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run_model::Hyperparameter;

    #[test]
    fn two_numeric_dims_give_four_corners() {
        let space = ConfigurationSpace::new(vec![
            Hyperparameter::float("a", 0.0, 1.0, 0.5),
            Hyperparameter::float("b", 0.0, 1.0, 0.5),
        ]);
        let corners = border_configs(&space, 10);
        assert_eq!(
            corners,
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn categorical_corners_are_codes() {
        let space = ConfigurationSpace::new(vec![Hyperparameter::categorical(
            "k",
            &["a", "b", "c"],
            "a",
        )]);
        assert_eq!(border_configs(&space, 10), vec![vec![0.0], vec![1.0], vec![2.0]]);
    }

    #[test]
    fn large_corner_sets_are_subsampled() {
        let space = ConfigurationSpace::new(
            (0..20)
                .map(|i| Hyperparameter::float(&format!("x{i}"), 0.0, 1.0, 0.5))
                .collect(),
        );
        let corners = border_configs(&space, 50);
        assert_eq!(corners.len(), 50);
        let distinct: BTreeSet<Vec<u64>> = corners
            .iter()
            .map(|c| c.iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(distinct.len(), 50);
        assert!(corners.iter().flatten().all(|v| *v == 0.0 || *v == 1.0));
        assert_eq!(corners, border_configs(&space, 50));
    }

    #[test]
    fn zero_matrix_embeds_at_origin() {
        let d = vec![vec![0.0; 5]; 5];
        let e = mds_embed(&d, 0).unwrap();
        assert_eq!(e.stress, 0.0);
        assert!(e.coords.iter().all(|p| *p == [0.0, 0.0]));
    }

    #[test]
    fn equilateral_triangle_is_reproduced() {
        let d = vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ];
        let e = mds_embed(&d, 0).unwrap();
        assert!(e.stress < 1e-3);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((dist(&e.coords[i], &e.coords[j]) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn collinear_points_get_a_second_axis() {
        let xs = [0.0, 1.0, 2.0, 4.0];
        let d: Vec<Vec<f64>> = xs
            .iter()
            .map(|a| xs.iter().map(|b| f64::abs(a - b)).collect())
            .collect();
        let e = mds_embed(&d, 3).unwrap();
        assert!(e.stress < 1e-3, "{}", e.stress);
    }

    #[test]
    fn invalid_matrices_are_rejected() {
        assert!(mds_embed(&[vec![0.0, 1.0], vec![2.0, 0.0]], 0).is_err());
        assert!(mds_embed(&[vec![0.0, -1.0], vec![-1.0, 0.0]], 0).is_err());
        assert!(mds_embed(&[vec![1.0]], 0).is_err());
    }
}
