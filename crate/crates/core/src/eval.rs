//! Evaluation helpers: residual accuracy curves, seeded sampling and
//! splitting, confusion matrices, and the tables that go into reports.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureSet;
use crate::graph::{NodeId, WeightedGraph};
use crate::learn::{CvResult, ForestModel, LinearModel};
use crate::strength::TargetKind;

/// Number of equal steps between zero and the largest residual.
pub const CURVE_STEPS: usize = 200;
/// Thresholds always present in a curve: one strength unit and the two
/// duration-share tolerances.
pub const NAMED_THRESHOLDS: [f64; 3] = [0.05, 0.1, 1.0];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot sample {requested} edges from a graph with {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("split fraction {0} must lie in [0, 1)")]
    BadFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fraction: f64,
}

/// `CURVE_STEPS + 1` evenly spaced thresholds from 0 to `max_residual`, merged
/// with [`NAMED_THRESHOLDS`], ascending and without duplicates.
pub fn threshold_grid(max_residual: f64) -> Vec<f64> {
    let max = if max_residual.is_finite() && max_residual > 0.0 { max_residual } else { 0.0 };
    let mut grid: Vec<f64> = (0..=CURVE_STEPS)
        .map(|k| if k == CURVE_STEPS { max } else { max * k as f64 / CURVE_STEPS as f64 })
        .collect();
    grid.extend(NAMED_THRESHOLDS);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Fraction of residuals with `|r| <= t` for each threshold. An empty residual
/// vector gives zero everywhere.
pub fn accuracy_curve(residuals: &[f64], thresholds: &[f64]) -> Vec<CurvePoint> {
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    thresholds
        .iter()
        .map(|&t| {
            let within = abs.partition_point(|&r| r <= t);
            let fraction = if abs.is_empty() { 0.0 } else { within as f64 / abs.len() as f64 };
            CurvePoint { threshold: t, fraction }
        })
        .collect()
}

pub fn fraction_within(residuals: &[f64], t: f64) -> f64 {
    accuracy_curve(residuals, &[t])[0].fraction
}

/// Uniform sample of `n` edges without replacement, returned in canonical
/// edge order.
pub fn sample_edges(g: &WeightedGraph, n: usize, seed: u64) -> Result<Vec<(NodeId, NodeId)>, EvalError> {
    let available = g.edge_count();
    if n > available {
        return Err(EvalError::SampleTooLarge { requested: n, available });
    }
    let mut picks = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), available, n).into_vec();
    picks.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut next = picks.iter().peekable();
    for (k, (u, v, _)) in g.edges().enumerate() {
        match next.peek() {
            Some(&&p) if p == k => {
                out.push((u, v));
                next.next();
            }
            Some(_) => {}
            None => break,
        }
    }
    Ok(out)
}

/// Seeded split of `0..n` into ascending train and test index lists, with
/// `floor(n * test_fraction)` test items.
pub fn holdout_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(EvalError::BadFraction(test_fraction));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * test_fraction).floor() as usize;
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Class labels indexing both rows (truth) and columns (prediction).
    pub labels: Vec<i64>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    /// Labels are the union of rounded true and predicted values.
    pub fn new(truth: &[f64], predicted: &[f64]) -> Self {
        Self::with_labels(truth, predicted, &[])
    }

    /// Like [`ConfusionMatrix::new`] but always including `labels`, so empty
    /// classes keep their row and column.
    pub fn with_labels(truth: &[f64], predicted: &[f64], labels: &[i64]) -> Self {
        let labels: Vec<i64> = truth
            .iter()
            .chain(predicted)
            .map(|v| v.round() as i64)
            .chain(labels.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let pos = |v: f64| labels.binary_search(&(v.round() as i64)).unwrap();
        let mut counts = vec![vec![0; labels.len()]; labels.len()];
        for (&t, &p) in truth.iter().zip(predicted) {
            counts[pos(t)][pos(p)] += 1;
        }
        Self { labels, counts }
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.counts.iter().flatten().sum();
        let diag: usize = (0..self.labels.len()).map(|k| self.counts[k][k]).sum();
        if total == 0 {
            0.0
        } else {
            diag as f64 / total as f64
        }
    }
}

/// Estimators the pipeline can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    ForestReg,
    ForestClf,
    Ols,
    Poisson,
    Lasso,
    Ridge,
}

impl Learner {
    pub const ALL: [Learner; 6] =
        [Learner::ForestReg, Learner::ForestClf, Learner::Ols, Learner::Poisson, Learner::Lasso, Learner::Ridge];

    pub fn as_str(self) -> &'static str {
        match self {
            Learner::ForestReg => "forest_reg",
            Learner::ForestClf => "forest_clf",
            Learner::Ols => "ols",
            Learner::Poisson => "poisson",
            Learner::Lasso => "lasso",
            Learner::Ridge => "ridge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }

    pub fn is_forest(self) -> bool {
        matches!(self, Learner::ForestReg | Learner::ForestClf)
    }

    /// Needs integer responses (layer counts).
    pub fn needs_counts(self) -> bool {
        matches!(self, Learner::ForestClf | Learner::Poisson)
    }
}

/// Which rows residuals are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Seeded split by edge; residuals on the test edges only.
    HeldOut,
    /// Residuals on the training rows.
    InSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub rows: usize,
    pub mean_abs: f64,
    pub median_abs: f64,
    pub max_abs: f64,
    /// Fraction within each of [`NAMED_THRESHOLDS`].
    pub within: Vec<CurvePoint>,
}

impl ResidualSummary {
    pub fn of(residuals: &[f64]) -> Self {
        let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let n = abs.len();
        let median_abs = match n {
            0 => 0.0,
            _ if n % 2 == 1 => abs[n / 2],
            _ => (abs[n / 2 - 1] + abs[n / 2]) / 2.0,
        };
        Self {
            rows: n,
            mean_abs: if n == 0 { 0.0 } else { abs.iter().sum::<f64>() / n as f64 },
            median_abs,
            max_abs: abs.last().copied().unwrap_or(0.0),
            within: accuracy_curve(residuals, &NAMED_THRESHOLDS),
        }
    }
}

/// Everything reported about one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationEntry {
    pub id: String,
    pub target: TargetKind,
    pub feature_set: FeatureSet,
    pub learner: Learner,
    pub mode: EvalMode,
    pub n_train: usize,
    pub n_eval: usize,
    pub columns: Vec<String>,
    /// Columns dropped before fitting because they were constant or
    /// linearly dependent on earlier columns.
    pub aliased: Vec<String>,
    pub residuals: ResidualSummary,
    pub curve: Vec<CurvePoint>,
    pub importance: ImportanceTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted_r_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrinkage_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    pub model_file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceSource {
    /// Normalized mean impurity decrease of a forest.
    Impurity,
    /// Absolute standardized coefficients, normalized to sum to one.
    AbsCoefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub source: ImportanceSource,
    pub features: Vec<String>,
    pub importances: Vec<f64>,
    /// Importance of each feature if all were equally informative.
    pub null_line: f64,
}

impl ImportanceTable {
    pub fn of(model: &ForestModel) -> Self {
        let features = model.schema_names();
        let null_line = if features.is_empty() { 0.0 } else { 1.0 / features.len() as f64 };
        Self { source: ImportanceSource::Impurity, features, importances: model.importances.clone(), null_line }
    }

    /// Coefficient magnitudes as shares of their total; all zero when every
    /// coefficient is zero.
    pub fn of_linear(model: &LinearModel) -> Self {
        let features = model.schema.clone();
        let total: f64 = model.coefficients.iter().map(|b| b.abs()).sum();
        let importances = model
            .coefficients
            .iter()
            .map(|b| if total > 0.0 { b.abs() / total } else { 0.0 })
            .collect();
        let null_line = if features.is_empty() { 0.0 } else { 1.0 / features.len() as f64 };
        Self { source: ImportanceSource::AbsCoefficient, features, importances, null_line }
    }

    /// Feature names ordered by decreasing importance, ties by column order.
    pub fn ranked(&self) -> Vec<&str> {
        let mut order: Vec<usize> = (0..self.features.len()).collect();
        order.sort_by(|&a, &b| self.importances[b].total_cmp(&self.importances[a]).then(a.cmp(&b)));
        order.into_iter().map(|k| self.features[k].as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub term: String,
    pub estimate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub rows: Vec<CoefficientRow>,
}

impl CoefficientTable {
    pub fn of(model: &LinearModel) -> Self {
        let d = &model.diagnostics;
        let mut rows = vec![CoefficientRow {
            term: "(intercept)".into(),
            estimate: model.intercept,
            std_error: d.intercept_std_error,
        }];
        for (k, (name, &b)) in model.schema.iter().zip(&model.coefficients).enumerate() {
            rows.push(CoefficientRow {
                term: name.clone(),
                estimate: b,
                std_error: d.std_errors.as_ref().map(|s| s[k]),
            });
        }
        Self { rows }
    }

    pub fn estimate(&self, term: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.term == term).map(|r| r.estimate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_examples() {
        let c = accuracy_curve(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]);
        assert_eq!(c.iter().map(|p| p.fraction).collect::<Vec<_>>(), vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(fraction_within(&[0.3, -0.2, 0.0, 1e-9], 0.0), 0.25);
        assert_eq!(fraction_within(&[], 1.0), 0.0);
    }

    #[test]
    fn grid_contains_named_thresholds_and_max() {
        let g = threshold_grid(7.3);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 7.3);
        for t in NAMED_THRESHOLDS {
            assert!(g.contains(&t));
        }
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.len() >= CURVE_STEPS + 1);
        assert_eq!(threshold_grid(0.0), vec![0.0, 0.05, 0.1, 1.0]);
    }

    #[test]
    fn sampling() {
        let edges: Vec<(NodeId, NodeId, f64)> = (0..50).map(|k| (k, k + 1, 1.0)).collect();
        let g = WeightedGraph::from_edges(&edges).unwrap();
        let all = sample_edges(&g, 50, 3).unwrap();
        assert_eq!(all, g.edges().map(|(u, v, _)| (u, v)).collect::<Vec<_>>());
        assert!(sample_edges(&g, 0, 3).unwrap().is_empty());
        assert_eq!(sample_edges(&g, 51, 3), Err(EvalError::SampleTooLarge { requested: 51, available: 50 }));
        let a = sample_edges(&g, 10, 1).unwrap();
        assert_eq!(a, sample_edges(&g, 10, 1).unwrap());
        assert_ne!(a, sample_edges(&g, 10, 2).unwrap());
    }

    #[test]
    fn split_partitions() {
        let (train, test) = holdout_split(101, 0.2, 5).unwrap();
        assert_eq!(test.len(), 20);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert!(holdout_split(10, 1.0, 0).is_err());
    }

    #[test]
    fn confusion_counts() {
        let m = ConfusionMatrix::new(&[1.0, 2.0, 2.0, 12.0], &[1.0, 2.0, 3.0, 12.0]);
        assert_eq!(m.labels, vec![1, 2, 3, 12]);
        assert_eq!(m.counts[1][2], 1);
        assert_eq!(m.accuracy(), 0.75);
    }
}
