//! Random-forest regression over encoded configurations.
//!
//! Trees are plain CART regressors grown by variance reduction. Numeric
//! columns (including the inactive sentinel) split on thresholds, categorical
//! columns split on subsets of codes found by ordering the codes by their
//! mean response. Besides point predictions, trees support exact
//! marginalization over the uniform box of the encoded space, which is what
//! the importance and partial-dependence analyses build on.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{Column, EncodedMatrix, INACTIVE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub max_features_ratio: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 16,
            max_depth: 64,
            min_samples_leaf: 1,
            bootstrap: true,
            max_features_ratio: 5.0 / 6.0,
            seed: 0,
        }
    }
}

/// How a dimension of the encoded space is treated by the trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimKind {
    /// Active values in `[0, 1]`.
    Numeric,
    /// Integer codes `0..k`.
    Categorical(usize),
    /// Always `0.0` when active.
    Constant,
}

impl DimKind {
    pub fn from_column(column: &Column) -> Self {
        if column.is_categorical() {
            DimKind::Categorical(column.cardinality())
        } else if column.is_constant() {
            DimKind::Constant
        } else {
            DimKind::Numeric
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            DimKind::Numeric => (0.0, 1.0),
            DimKind::Categorical(k) => (0.0, k.saturating_sub(1) as f64),
            DimKind::Constant => (0.0, 0.0),
        }
    }

    fn check(self, dim: usize, v: f64) -> Result<()> {
        let (lo, hi) = self.bounds();
        let integral = !matches!(self, DimKind::Categorical(_)) || v.fract() == 0.0;
        if v == INACTIVE || (v >= lo && v <= hi && integral) {
            Ok(())
        } else {
            Err(Error::OutOfBounds(format!(
                "value {v} outside [{lo}, {hi}] for dimension {dim}"
            )))
        }
    }
}

/// Slot of a categorical value: codes map to themselves, the inactive
/// sentinel to slot `k`.
fn category_slot(v: f64, k: usize) -> usize {
    if v < 0.0 {
        k
    } else {
        (v.round() as usize).min(k.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// `x <= threshold` goes left.
    Threshold(f64),
    /// `left[slot]` says whether a category slot goes left; the last slot is
    /// the inactive sentinel.
    Categories(Vec<bool>),
}

impl SplitRule {
    fn goes_left(&self, v: f64) -> bool {
        match self {
            SplitRule::Threshold(t) => v <= *t,
            SplitRule::Categories(left) => left[category_slot(v, left.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        dim: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf {
        mean: f64,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// Region of one dimension inside a tree-induced box.
#[derive(Debug, Clone)]
enum Region {
    Interval(f64, f64),
    Codes(Vec<bool>),
}

impl Region {
    fn full(kind: DimKind) -> Self {
        match kind {
            DimKind::Categorical(k) => Region::Codes(vec![true; k]),
            _ => {
                let (lo, hi) = kind.bounds();
                Region::Interval(lo, hi)
            }
        }
    }

    /// Fractions of the region's volume sent left and right by `rule`, and
    /// the corresponding sub-regions.
    fn split(&self, rule: &SplitRule) -> [(f64, Region); 2] {
        match (self, rule) {
            (Region::Interval(lo, hi), SplitRule::Threshold(t)) => {
                if hi > lo {
                    let width = hi - lo;
                    let cut = t.clamp(*lo, *hi);
                    [
                        ((cut - lo) / width, Region::Interval(*lo, cut)),
                        ((hi - cut) / width, Region::Interval(cut, *hi)),
                    ]
                } else if *lo <= *t {
                    [(1.0, self.clone()), (0.0, self.clone())]
                } else {
                    [(0.0, self.clone()), (1.0, self.clone())]
                }
            }
            (Region::Codes(allowed), SplitRule::Categories(left)) => {
                let total = allowed.iter().filter(|a| **a).count() as f64;
                let l: Vec<bool> = allowed.iter().zip(left).map(|(a, g)| *a && *g).collect();
                let r: Vec<bool> = allowed.iter().zip(left).map(|(a, g)| *a && !*g).collect();
                let nl = l.iter().filter(|a| **a).count() as f64;
                let nr = r.iter().filter(|a| **a).count() as f64;
                if total == 0.0 {
                    [(0.0, Region::Codes(l)), (0.0, Region::Codes(r))]
                } else {
                    [(nl / total, Region::Codes(l)), (nr / total, Region::Codes(r))]
                }
            }
            // a threshold on a categorical dimension: route codes numerically
            (Region::Codes(allowed), SplitRule::Threshold(t)) => {
                let total = allowed.iter().filter(|a| **a).count() as f64;
                let l: Vec<bool> = allowed
                    .iter()
                    .enumerate()
                    .map(|(i, a)| *a && (i as f64) <= *t)
                    .collect();
                let r: Vec<bool> = allowed
                    .iter()
                    .enumerate()
                    .map(|(i, a)| *a && (i as f64) > *t)
                    .collect();
                let nl = l.iter().filter(|a| **a).count() as f64;
                let nr = r.iter().filter(|a| **a).count() as f64;
                let total = total.max(1.0);
                [(nl / total, Region::Codes(l)), (nr / total, Region::Codes(r))]
            }
            (Region::Interval(lo, _), SplitRule::Categories(left)) => {
                let go_left = left[category_slot(*lo, left.len() - 1)];
                if go_left {
                    [(1.0, self.clone()), (0.0, self.clone())]
                } else {
                    [(0.0, self.clone()), (1.0, self.clone())]
                }
            }
        }
    }
}

impl Tree {
    /// Builds a tree from explicit nodes; node 0 is the root and children
    /// must come after their parent.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("a tree needs at least one node".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            match node {
                Node::Split {
                    left, right, rule, ..
                } => {
                    for child in [*left, *right] {
                        if child <= i || child >= nodes.len() {
                            return Err(Error::InvalidInput(format!(
                                "node {i} has invalid child {child}"
                            )));
                        }
                        parents[child] += 1;
                    }
                    if let SplitRule::Categories(l) = rule {
                        if l.len() < 2 {
                            return Err(Error::InvalidInput(format!(
                                "node {i} has an empty category split"
                            )));
                        }
                    }
                }
                Node::Leaf { mean, .. } => {
                    if !mean.is_finite() {
                        return Err(Error::InvalidInput(format!("leaf {i} is not finite")));
                    }
                }
            }
        }
        if parents[1..].iter().any(|p| *p != 1) {
            return Err(Error::InvalidInput(
                "every non-root node needs exactly one parent".into(),
            ));
        }
        Ok(Self { nodes })
    }

    pub fn leaf(mean: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { mean, count: 1 }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn max_split_dim(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { dim, .. } => Some(*dim),
                _ => None,
            })
            .max()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { mean, .. } => return *mean,
                Node::Split {
                    dim,
                    rule,
                    left,
                    right,
                } => i = if rule.goes_left(x[*dim]) { *left } else { *right },
            }
        }
    }

    /// Volume fraction of every leaf (node index, fraction, mean) reachable
    /// from the full box with `fixed` dimensions pinned to values.
    fn weighted_leaves(&self, kinds: &[DimKind], fixed: &[Option<f64>]) -> Vec<(f64, f64)> {
        let mut regions: Vec<Region> = kinds.iter().map(|k| Region::full(*k)).collect();
        let mut out = Vec::new();
        self.walk(0, 1.0, &mut regions, fixed, &mut out);
        out
    }

    fn walk(
        &self,
        i: usize,
        weight: f64,
        regions: &mut [Region],
        fixed: &[Option<f64>],
        out: &mut Vec<(f64, f64)>,
    ) {
        match &self.nodes[i] {
            Node::Leaf { mean, .. } => out.push((weight, *mean)),
            Node::Split {
                dim,
                rule,
                left,
                right,
            } => {
                if let Some(v) = fixed[*dim] {
                    let next = if rule.goes_left(v) { *left } else { *right };
                    self.walk(next, weight, regions, fixed, out);
                    return;
                }
                let parts = regions[*dim].split(rule);
                for ((frac, region), child) in parts.into_iter().zip([*left, *right]) {
                    if frac > 0.0 {
                        let saved = std::mem::replace(&mut regions[*dim], region);
                        self.walk(child, weight * frac, regions, fixed, out);
                        regions[*dim] = saved;
                    }
                }
            }
        }
    }

    /// Every threshold this tree uses on `dim`.
    fn thresholds(&self, dim: usize) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split {
                    dim: d,
                    rule: SplitRule::Threshold(t),
                    ..
                } if *d == dim => Some(*t),
                _ => None,
            })
            .collect()
    }
}

/// Anything that produces per-tree predictions for encoded vectors.
pub trait Surrogate: Sync {
    fn n_dims(&self) -> usize;

    /// One prediction per ensemble member.
    fn member_predictions(&self, x: &[f64]) -> Vec<f64>;

    /// Mean and population variance across members.
    fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.n_dims() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dims(),
                got: x.len(),
            });
        }
        Ok(mean_and_variance(&self.member_predictions(x)))
    }
}

pub(crate) fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    dims: Vec<DimKind>,
    rng_seed: u64,
}

impl Forest {
    pub fn from_trees(trees: Vec<Tree>, dims: Vec<DimKind>, rng_seed: u64) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidInput("a forest needs at least one tree".into()));
        }
        for (t, tree) in trees.iter().enumerate() {
            if let Some(max) = tree.max_split_dim() {
                if max >= dims.len() {
                    return Err(Error::InvalidInput(format!(
                        "tree {t} splits on dimension {max}, forest has {}",
                        dims.len()
                    )));
                }
            }
        }
        Ok(Self {
            trees,
            dims,
            rng_seed,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn dims(&self) -> &[DimKind] {
        &self.dims
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.dims.iter().map(|k| k.bounds()).collect()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Exact marginal prediction of `tree` with `dims` pinned to `values`
    /// and every other dimension averaged over the uniform box.
    pub fn tree_marginal(&self, tree: usize, dims: &[usize], values: &[f64]) -> Result<f64> {
        tree_marginal(&self.trees[tree], &self.dims, dims, values)
    }
}

impl Surrogate for Forest {
    fn n_dims(&self) -> usize {
        self.dims.len()
    }

    fn member_predictions(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }
}

/// Exact marginal of one tree. `kinds` describes the encoded space, `dims`
/// are the pinned dimensions and `values` their values.
pub fn tree_marginal(tree: &Tree, kinds: &[DimKind], dims: &[usize], values: &[f64]) -> Result<f64> {
    if dims.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: dims.len(),
            got: values.len(),
        });
    }
    let mut fixed = vec![None; kinds.len()];
    for (&d, &v) in dims.iter().zip(values) {
        let kind = *kinds.get(d).ok_or(Error::DimensionMismatch {
            expected: kinds.len(),
            got: d + 1,
        })?;
        if fixed[d].is_some() {
            return Err(Error::InvalidInput(format!("dimension {d} given twice")));
        }
        kind.check(d, v)?;
        fixed[d] = Some(v);
    }
    Ok(tree
        .weighted_leaves(kinds, &fixed)
        .into_iter()
        .map(|(w, m)| w * m)
        .sum())
}

/// Variance of a tree's prediction over the uniform box.
pub(crate) fn tree_total_variance(tree: &Tree, kinds: &[DimKind]) -> (f64, f64) {
    let leaves = tree.weighted_leaves(kinds, &vec![None; kinds.len()]);
    let mean: f64 = leaves.iter().map(|(w, m)| w * m).sum();
    let var: f64 = leaves.iter().map(|(w, m)| w * (m - mean).powi(2)).sum();
    (mean, var)
}

/// Cells over which a tree's single-dimension marginal is constant: pairs of
/// (volume fraction, representative value).
pub(crate) fn marginal_cells(tree: &Tree, kind: DimKind, dim: usize) -> Vec<(f64, f64)> {
    match kind {
        DimKind::Constant => vec![(1.0, 0.0)],
        DimKind::Categorical(k) => (0..k).map(|c| (1.0 / k as f64, c as f64)).collect(),
        DimKind::Numeric => {
            let mut cuts: Vec<f64> = tree
                .thresholds(dim)
                .into_iter()
                .filter(|t| *t > 0.0 && *t < 1.0)
                .collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut edges = Vec::with_capacity(cuts.len() + 2);
            edges.push(0.0);
            edges.extend(cuts);
            edges.push(1.0);
            edges
                .windows(2)
                .map(|w| (w[1] - w[0], 0.5 * (w[0] + w[1])))
                .collect()
        }
    }
}

/// Fits a forest on an encoded matrix.
pub fn fit(matrix: &EncodedMatrix, params: &ForestParams) -> Result<Forest> {
    let n = matrix.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let d = matrix.n_cols();
    if d == 0 {
        return Err(Error::InvalidInput("no hyperparameters to fit on".into()));
    }
    if matrix.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("objective values must be finite".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidInput("n_trees must be positive".into()));
    }
    if !(params.max_features_ratio > 0.0 && params.max_features_ratio <= 1.0) {
        return Err(Error::InvalidInput(
            "max_features_ratio must lie in (0, 1]".into(),
        ));
    }
    let dims: Vec<DimKind> = matrix.columns.iter().map(DimKind::from_column).collect();
    let n_features = ((params.max_features_ratio * d as f64).floor() as usize).clamp(1, d);
    let builder = TreeBuilder {
        x: &matrix.rows,
        y: &matrix.y,
        dims: &dims,
        max_depth: params.max_depth,
        min_leaf: params.min_samples_leaf.max(1),
        n_features,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.build(samples, &mut rng)
        })
        .collect();
    Ok(Forest {
        trees,
        dims,
        rng_seed: params.seed,
    })
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    dims: &'a [DimKind],
    max_depth: usize,
    min_leaf: usize,
    n_features: usize,
}

struct Candidate {
    score: f64,
    dim: usize,
    rule: SplitRule,
}

impl TreeBuilder<'_> {
    fn build(&self, samples: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = Vec::new();
        self.grow(samples, 0, rng, &mut nodes);
        Tree { nodes }
    }

    fn grow(&self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let m = samples.len();
        let mean = samples.iter().map(|&i| self.y[i]).sum::<f64>() / m as f64;
        nodes.push(Node::Leaf { mean, count: m });

        let first = self.y[samples[0]];
        if depth >= self.max_depth
            || m < 2 * self.min_leaf
            || samples.iter().all(|&i| self.y[i] == first)
        {
            return id;
        }
        // gains closer than this are ties, so split choice does not depend on
        // rounding noise in y
        let sse: f64 = samples.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let tol = 1e-10 * sse;
        let Some(best) = self.best_split(&samples, mean, tol, rng) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| best.rule.goes_left(self.x[i][best.dim]));
        let l = self.grow(left, depth + 1, rng, nodes);
        let r = self.grow(right, depth + 1, rng, nodes);
        nodes[id] = Node::Split {
            dim: best.dim,
            rule: best.rule,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&self, samples: &[usize], mean: f64, tol: f64, rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let d = self.dims.len();
        let mut order: Vec<usize> = sample(rng, d, d).into_vec();
        // the first n_features are the sampled ones; the rest are only tried
        // when none of the sampled features admits a split
        let (head, tail) = order.split_at_mut(self.n_features);
        head.sort_unstable();
        tail.sort_unstable();
        let mut best: Option<Candidate> = None;
        for (pos, &dim) in order.iter().enumerate() {
            if pos == self.n_features && best.is_some() {
                break;
            }
            let candidate = match self.dims[dim] {
                DimKind::Categorical(k) => self.categorical_split(samples, mean, tol, dim, k),
                _ => self.numeric_split(samples, mean, tol, dim),
            };
            if let Some(c) = candidate {
                if best.as_ref().map_or(true, |b| c.score > b.score + tol) {
                    best = Some(c);
                }
            }
        }
        best
    }

    // Scores are sum_l^2 / n_l + sum_r^2 / n_r on responses centered at the
    // node mean; maximizing it maximizes the variance reduction.
    fn numeric_split(&self, samples: &[usize], mean: f64, tol: f64, dim: usize) -> Option<Candidate> {
        let mut pairs: Vec<(f64, f64)> = samples
            .iter()
            .map(|&i| (self.x[i][dim], self.y[i] - mean))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = pairs.len();
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut left_sum = 0.0;
        let mut best: Option<(f64, usize)> = None;
        for i in 1..m {
            left_sum += pairs[i - 1].1;
            if i < self.min_leaf || m - i < self.min_leaf || pairs[i - 1].0 == pairs[i].0 {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / i as f64 + right_sum * right_sum / (m - i) as f64;
            if best.map_or(true, |(s, _)| score > s + tol) {
                best = Some((score, i));
            }
        }
        let (score, i) = best?;
        if score <= total * total / m as f64 + tol {
            return None;
        }
        let threshold = 0.5 * (pairs[i - 1].0 + pairs[i].0);
        Some(Candidate {
            score,
            dim,
            rule: SplitRule::Threshold(threshold),
        })
    }

    fn categorical_split(&self, samples: &[usize], mean: f64, tol: f64, dim: usize, k: usize) -> Option<Candidate> {
        let slots = k + 1;
        let mut sums = vec![0.0; slots];
        let mut counts = vec![0usize; slots];
        for &i in samples {
            let s = category_slot(self.x[i][dim], k);
            sums[s] += self.y[i] - mean;
            counts[s] += 1;
        }
        let mut present: Vec<usize> = (0..slots).filter(|s| counts[*s] > 0).collect();
        if present.len() < 2 {
            return None;
        }
        present.sort_by(|a, b| {
            let ma = sums[*a] / counts[*a] as f64;
            let mb = sums[*b] / counts[*b] as f64;
            ma.total_cmp(&mb).then(a.cmp(b))
        });
        let m = samples.len();
        let total: f64 = sums.iter().sum();
        let mut left_sum = 0.0;
        let mut left_n = 0;
        let mut best: Option<(f64, usize)> = None;
        for j in 1..present.len() {
            left_sum += sums[present[j - 1]];
            left_n += counts[present[j - 1]];
            if left_n < self.min_leaf || m - left_n < self.min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / left_n as f64 + right_sum * right_sum / (m - left_n) as f64;
            if best.map_or(true, |(s, _)| score > s + tol) {
                best = Some((score, j));
            }
        }
        let (score, j) = best?;
        if score <= total * total / m as f64 + tol {
            return None;
        }
        let mut left = vec![false; slots];
        for s in &present[..j] {
            left[*s] = true;
        }
        Some(Candidate {
            score,
            dim,
            rule: SplitRule::Categories(left),
        })
    }
}
