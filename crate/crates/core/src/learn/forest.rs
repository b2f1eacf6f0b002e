//! Random forests of CART trees.
//!
//! Each tree is grown on a bootstrap resample until its leaves are pure (or
//! hold fewer than `2 * min_leaf` rows). Regression trees split on variance
//! reduction, classification trees on Gini decrease. Categorical columns with
//! few levels are split by enumerating level subsets.
//!
//! Every tree draws from its own ChaCha stream selected by the tree index, so
//! a forest is bit-identical whether its trees are built serially or in parallel.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Column, ColumnKind, Dataset, FeatureMatrix};
use super::LearnError;

pub const DEFAULT_TREES: usize = 200;

/// Categorical columns with more levels than this are rejected; subset
/// enumeration is exponential in the level count.
pub const MAX_CATEGORICAL_LEVELS: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Number of candidate columns drawn at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn count(self, p: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((p as f64).sqrt().floor() as usize).clamp(1, p.max(1)),
            MaxFeatures::All => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub task: Task,
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_leaf: usize,
}

impl ForestParams {
    /// 200 trees; √p candidate columns for classification, all p for regression.
    pub fn for_task(task: Task) -> Self {
        Self {
            task,
            n_trees: DEFAULT_TREES,
            max_features: match task {
                Task::Classification => MaxFeatures::Sqrt,
                Task::Regression => MaxFeatures::All,
            },
            min_leaf: 1,
        }
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Rows with `x <= threshold` go left.
    Threshold(f64),
    /// Rows whose level bit is set in the mask go left.
    Levels(u32),
}

impl SplitRule {
    #[inline]
    fn goes_left(self, v: f64) -> bool {
        match self {
            SplitRule::Threshold(t) => v <= t,
            SplitRule::Levels(mask) => mask & (1u32 << (v as u32)) != 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Mean response (regression) or class index (classification).
    Leaf(f64),
    Split { feature: u32, rule: SplitRule, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, rule, left, right } => {
                    at = if rule.goes_left(row[*feature as usize]) { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    pub schema: Vec<Column>,
    /// Sorted class labels (classification only).
    pub classes: Vec<f64>,
    pub trees: Vec<Tree>,
    /// Normalized mean impurity decrease per column; sums to 1.
    pub importances: Vec<f64>,
    pub y_min: f64,
    pub y_max: f64,
}

impl ForestModel {
    pub fn task(&self) -> Task {
        self.params.task
    }

    pub fn schema_names(&self) -> Vec<String> {
        self.schema.iter().map(|c| c.name.clone()).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.params.task {
            Task::Regression => {
                let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
                sum / self.trees.len() as f64
            }
            Task::Classification => {
                let mut votes = vec![0usize; self.classes.len()];
                for t in &self.trees {
                    votes[t.predict(row) as usize] += 1;
                }
                self.classes[argmax_lowest(&votes)]
            }
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, LearnError> {
        x.check_schema(&self.schema_names())?;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|r| self.predict_row(x.row(r)))
            .collect())
    }
}

fn argmax_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Forest with the default parameters for `task`.
pub fn fit_forest(d: &Dataset, task: Task, seed: u64) -> Result<ForestModel, LearnError> {
    fit_forest_with(d, &ForestParams::for_task(task), seed)
}

pub fn fit_forest_with(
    d: &Dataset,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, LearnError> {
    let n = d.n_rows();
    let p = d.n_cols();
    if n == 0 || p == 0 {
        return Err(LearnError::Shape(format!("cannot fit a forest on {n} rows x {p} columns")));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(LearnError::Shape("forest needs n_trees >= 1 and min_leaf >= 1".into()));
    }
    for col in d.x.schema() {
        if let ColumnKind::Categorical { levels } = col.kind {
            if levels > MAX_CATEGORICAL_LEVELS {
                return Err(LearnError::Shape(format!(
                    "categorical column {} has {levels} levels (max {MAX_CATEGORICAL_LEVELS})",
                    col.name
                )));
            }
        }
    }
    let (classes, targets) = match params.task {
        Task::Regression => (Vec::new(), d.y.clone()),
        Task::Classification => {
            let mut classes = d.y.clone();
            classes.sort_by(f64::total_cmp);
            classes.dedup();
            if classes.len() < 2 {
                return Err(LearnError::InvalidTarget(
                    "classification target has a single class".into(),
                ));
            }
            let idx = d
                .y
                .iter()
                .map(|v| classes.partition_point(|c| c < v) as f64)
                .collect();
            (classes, idx)
        }
    };
    let n_classes = classes.len();
    let kinds: Vec<ColumnKind> = d.x.schema().iter().map(|c| c.kind).collect();
    let mtry = params.max_features.count(p);

    let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let samples: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
            TreeBuilder::new(&d.x, &kinds, &targets, n_classes, &samples, mtry, params.min_leaf)
                .grow(&mut rng)
        })
        .collect();

    let mut importances = vec![0.0; p];
    let mut contributing = 0usize;
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            contributing += 1;
            for (acc, v) in importances.iter_mut().zip(&imp) {
                *acc += v / total;
            }
        }
        trees.push(tree);
    }
    if contributing == 0 {
        importances.iter_mut().for_each(|v| *v = 1.0 / p as f64);
    } else {
        let total: f64 = importances.iter().sum();
        importances.iter_mut().for_each(|v| *v /= total);
    }
    let y_min = d.y.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = d.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ForestModel {
        params: *params,
        seed,
        schema: d.x.schema().to_vec(),
        classes,
        trees,
        importances,
        y_min,
        y_max,
    })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    rule: SplitRule,
    score: f64,
}

/// Response statistics of one node.
enum NodeStats {
    Regression { sum: f64, pure: bool },
    Classification { counts: Vec<usize>, sum_sq: f64 },
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    kinds: &'a [ColumnKind],
    targets: &'a [f64],
    n_classes: usize,
    samples: &'a [u32],
    mtry: usize,
    min_leaf: usize,
    /// `order[f]` holds sample positions, sorted by column `f` within each node's range.
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    buffer: Vec<u32>,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl<'a> TreeBuilder<'a> {
    fn new(
        x: &'a FeatureMatrix,
        kinds: &'a [ColumnKind],
        targets: &'a [f64],
        n_classes: usize,
        samples: &'a [u32],
        mtry: usize,
        min_leaf: usize,
    ) -> Self {
        let m = samples.len();
        let order = (0..x.n_cols())
            .map(|f| {
                let mut o: Vec<u32> = (0..m as u32).collect();
                o.sort_unstable_by(|&a, &b| {
                    x.get(samples[a as usize] as usize, f)
                        .total_cmp(&x.get(samples[b as usize] as usize, f))
                        .then(a.cmp(&b))
                });
                o
            })
            .collect();
        Self {
            x,
            kinds,
            targets,
            n_classes,
            samples,
            mtry,
            min_leaf,
            order,
            goes_left: vec![false; m],
            buffer: Vec::with_capacity(m),
            nodes: Vec::new(),
            importance: vec![0.0; x.n_cols()],
        }
    }

    #[inline]
    fn value(&self, pos: u32, f: usize) -> f64 {
        self.x.get(self.samples[pos as usize] as usize, f)
    }

    #[inline]
    fn target(&self, pos: u32) -> f64 {
        self.targets[self.samples[pos as usize] as usize]
    }

    fn node_stats(&self, lo: usize, hi: usize) -> NodeStats {
        let members = &self.order[0][lo..hi];
        if self.n_classes == 0 {
            let first = self.target(members[0]);
            let mut sum = 0.0;
            let mut pure = true;
            for &s in members {
                let y = self.target(s);
                sum += y;
                pure &= y == first;
            }
            NodeStats::Regression { sum, pure }
        } else {
            let mut counts = vec![0usize; self.n_classes];
            for &s in members {
                counts[self.target(s) as usize] += 1;
            }
            let sum_sq = counts.iter().map(|&c| (c * c) as f64).sum();
            NodeStats::Classification { counts, sum_sq }
        }
    }

    fn grow(mut self, rng: &mut ChaCha8Rng) -> (Tree, Vec<f64>) {
        let p = self.x.n_cols();
        self.nodes.push(Node::Leaf(0.0));
        let mut stack = vec![(0usize, 0usize, self.samples.len())];
        while let Some((id, lo, hi)) = stack.pop() {
            let n = hi - lo;
            let stats = self.node_stats(lo, hi);
            let (leaf_value, pure, parent_term) = match &stats {
                NodeStats::Regression { sum, pure } => (sum / n as f64, *pure, sum * sum / n as f64),
                NodeStats::Classification { counts, sum_sq } => (
                    argmax_lowest(counts) as f64,
                    counts.iter().filter(|&&c| c > 0).count() == 1,
                    sum_sq / n as f64,
                ),
            };
            if pure || n < 2 * self.min_leaf {
                self.nodes[id] = Node::Leaf(leaf_value);
                continue;
            }

            let mut drawn = index::sample(rng, p, self.mtry).into_vec();
            drawn.sort_unstable();
            let mut best = self.best_split(&drawn, lo, hi, &stats);
            if best.is_none() && drawn.len() < p {
                let rest: Vec<usize> = (0..p).filter(|f| !drawn.contains(f)).collect();
                best = self.best_split(&rest, lo, hi, &stats);
            }
            let Some(split) = best else {
                self.nodes[id] = Node::Leaf(leaf_value);
                continue;
            };

            self.importance[split.feature] += (split.score - parent_term).max(0.0);
            let mid = self.partition(split, lo, hi);
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf(0.0));
            self.nodes.push(Node::Leaf(0.0));
            self.nodes[id] = Node::Split {
                feature: split.feature as u32,
                rule: split.rule,
                left: left as u32,
                right: left as u32 + 1,
            };
            stack.push((left + 1, mid, hi));
            stack.push((left, lo, mid));
        }
        (Tree { nodes: self.nodes }, self.importance)
    }

    /// Stable-partitions every column ordering of `lo..hi`; returns the split point.
    fn partition(&mut self, split: Candidate, lo: usize, hi: usize) -> usize {
        for k in lo..hi {
            let s = self.order[split.feature][k];
            self.goes_left[s as usize] = split.rule.goes_left(self.value(s, split.feature));
        }
        let mut mid = lo;
        for f in 0..self.order.len() {
            self.buffer.clear();
            let slice = &mut self.order[f][lo..hi];
            let mut w = 0;
            for k in 0..slice.len() {
                let s = slice[k];
                if self.goes_left[s as usize] {
                    slice[w] = s;
                    w += 1;
                } else {
                    self.buffer.push(s);
                }
            }
            slice[w..].copy_from_slice(&self.buffer);
            mid = lo + w;
        }
        mid
    }

    fn best_split(
        &self,
        features: &[usize],
        lo: usize,
        hi: usize,
        stats: &NodeStats,
    ) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for &f in features {
            let cand = match self.kinds[f] {
                ColumnKind::Numeric => self.numeric_split(f, lo, hi, stats),
                ColumnKind::Categorical { levels } => self.categorical_split(f, levels, lo, hi, stats),
            };
            if let Some(c) = cand {
                if best.is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn numeric_split(&self, f: usize, lo: usize, hi: usize, stats: &NodeStats) -> Option<Candidate> {
        let ord = &self.order[f][lo..hi];
        let n = ord.len();
        let min_leaf = self.min_leaf;
        let mut best: Option<(f64, usize)> = None;
        match stats {
            NodeStats::Regression { sum, .. } => {
                let mut left_sum = 0.0;
                for k in 0..n - 1 {
                    left_sum += self.target(ord[k]);
                    let nl = k + 1;
                    if nl < min_leaf || n - nl < min_leaf {
                        continue;
                    }
                    if self.value(ord[k], f) == self.value(ord[k + 1], f) {
                        continue;
                    }
                    let right_sum = sum - left_sum;
                    let score = left_sum * left_sum / nl as f64
                        + right_sum * right_sum / (n - nl) as f64;
                    if best.is_none_or(|(s, _)| score > s) {
                        best = Some((score, k));
                    }
                }
            }
            NodeStats::Classification { counts, sum_sq } => {
                let mut left = vec![0usize; self.n_classes];
                let mut right = counts.clone();
                let mut sq_left = 0.0;
                let mut sq_right = *sum_sq;
                for k in 0..n - 1 {
                    let c = self.target(ord[k]) as usize;
                    sq_left += (2 * left[c] + 1) as f64;
                    left[c] += 1;
                    sq_right -= (2 * right[c] - 1) as f64;
                    right[c] -= 1;
                    let nl = k + 1;
                    if nl < min_leaf || n - nl < min_leaf {
                        continue;
                    }
                    if self.value(ord[k], f) == self.value(ord[k + 1], f) {
                        continue;
                    }
                    let score = sq_left / nl as f64 + sq_right / (n - nl) as f64;
                    if best.is_none_or(|(s, _)| score > s) {
                        best = Some((score, k));
                    }
                }
            }
        }
        best.map(|(score, k)| {
            let a = self.value(ord[k], f);
            let b = self.value(ord[k + 1], f);
            let mut t = a + (b - a) / 2.0;
            if t >= b {
                t = a;
            }
            Candidate { feature: f, rule: SplitRule::Threshold(t), score }
        })
    }

    fn categorical_split(
        &self,
        f: usize,
        levels: u32,
        lo: usize,
        hi: usize,
        stats: &NodeStats,
    ) -> Option<Candidate> {
        let levels = levels as usize;
        let ord = &self.order[f][lo..hi];
        let n = ord.len();
        let width = self.n_classes.max(1);
        let mut level_n = vec![0usize; levels];
        // Regression: per-level sums. Classification: per-level class counts.
        let mut level_stat = vec![0.0; levels * width];
        for &s in ord {
            let l = self.value(s, f) as usize;
            level_n[l] += 1;
            match stats {
                NodeStats::Regression { .. } => level_stat[l] += self.target(s),
                NodeStats::Classification { .. } => {
                    level_stat[l * width + self.target(s) as usize] += 1.0
                }
            }
        }
        let mut best: Option<(f64, u32)> = None;
        for mask in 1u32..(1u32 << (levels - 1)) {
            let in_left = |l: usize| mask & (1 << l) != 0;
            let nl: usize = (0..levels).filter(|&l| in_left(l)).map(|l| level_n[l]).sum();
            if nl < self.min_leaf || n - nl < self.min_leaf {
                continue;
            }
            let score = match stats {
                NodeStats::Regression { sum, .. } => {
                    let ls: f64 = (0..levels).filter(|&l| in_left(l)).map(|l| level_stat[l]).sum();
                    let rs = sum - ls;
                    ls * ls / nl as f64 + rs * rs / (n - nl) as f64
                }
                NodeStats::Classification { .. } => {
                    let (mut sql, mut sqr) = (0.0, 0.0);
                    for c in 0..width {
                        let (mut lc, mut rc) = (0.0, 0.0);
                        for l in 0..levels {
                            if in_left(l) {
                                lc += level_stat[l * width + c];
                            } else {
                                rc += level_stat[l * width + c];
                            }
                        }
                        sql += lc * lc;
                        sqr += rc * rc;
                    }
                    sql / nl as f64 + sqr / (n - nl) as f64
                }
            };
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, mask));
            }
        }
        best.map(|(score, mask)| Candidate { feature: f, rule: SplitRule::Levels(mask), score })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noisy_identity(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let y = rows.iter().map(|r| r[0]).collect();
        Dataset::from_rows(&["x1", "n1", "n2", "n3", "n4", "n5"], &rows, y).unwrap()
    }

    #[test]
    fn constant_target_predicts_constant() {
        let d = noisy_identity(100, 1);
        let d = Dataset::new(d.x.clone(), vec![4.5; 100]).unwrap();
        let f = fit_forest_with(&d, &ForestParams::for_task(Task::Regression).with_trees(20), 3)
            .unwrap();
        assert!(f.predict(&d.x).unwrap().iter().all(|v| *v == 4.5));
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_rejected() {
        let d = noisy_identity(20, 1);
        let d = Dataset::new(d.x.clone(), vec![1.0; 20]).unwrap();
        assert!(matches!(
            fit_forest(&d, Task::Classification, 0),
            Err(LearnError::InvalidTarget(_))
        ));
    }

    #[test]
    fn identity_signal_ranks_first() {
        let d = noisy_identity(600, 7);
        let f = fit_forest_with(&d, &ForestParams::for_task(Task::Regression).with_trees(50), 11)
            .unwrap();
        let top = argmax_f64(&f.importances);
        assert_eq!(top, 0);
        assert!(f.importances[0] > 0.5);
        let preds = f.predict(&d.x).unwrap();
        assert!(preds.iter().all(|p| *p >= f.y_min && *p <= f.y_max));
    }

    fn argmax_f64(v: &[f64]) -> usize {
        (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
    }

    #[test]
    fn seeded_fits_are_identical() {
        let d = noisy_identity(200, 2);
        let params = ForestParams::for_task(Task::Regression).with_trees(10);
        let a = fit_forest_with(&d, &params, 5).unwrap();
        let b = fit_forest_with(&d, &params, 5).unwrap();
        assert_eq!(a, b);
        let c = fit_forest_with(&d, &params, 6).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn categorical_split_isolates_level() {
        // y depends only on whether the level is 2.
        let schema = vec![Column::categorical("pair", 3), Column::numeric("noise")];
        let mut values = Vec::new();
        let mut y = Vec::new();
        for i in 0..90 {
            let level = (i % 3) as f64;
            values.extend([level, (i * 7 % 11) as f64]);
            y.push(if level == 2.0 { 1.0 } else { 0.0 });
        }
        let x = FeatureMatrix::new(schema, 90, values).unwrap();
        let d = Dataset::new(x, y).unwrap();
        let mut params = ForestParams::for_task(Task::Classification).with_trees(10);
        params.max_features = MaxFeatures::All;
        let f = fit_forest_with(&d, &params, 1).unwrap();
        assert_eq!(f.predict(&d.x).unwrap(), d.y);
        for t in &f.trees {
            assert!(matches!(
                t.nodes[0],
                Node::Split { feature: 0, rule: SplitRule::Levels(3), .. }
            ));
        }
    }

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(20), 4);
        assert_eq!(MaxFeatures::Sqrt.count(1), 1);
        assert_eq!(MaxFeatures::All.count(20), 20);
    }
}
