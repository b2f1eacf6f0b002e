//! Forest imputation of missing age, sex, and the paired-zip indicator.
//!
//! Node attributes are predicted from node-level network covariates
//! ([`NODE_COVARIATES`]); the paired-zip indicator is predicted from the
//! structural tie features. Each imputer reports a validation score computed
//! on a seeded hold-out of observed values, then refits on every observed
//! value before filling the gaps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeTable, Sex};
use crate::bowtie::FeatureVector;
use crate::eval::holdout_split;
use crate::features::{DesignSpec, Encoding, FeatureError, FeatureSet};
use crate::graph::{NodeId, WeightedGraph};
use crate::learn::{
    fit_forest_with, Column, Dataset, FeatureMatrix, ForestParams, LearnError, Task, DEFAULT_TREES,
};

pub const MIN_OBSERVED: usize = 100;
pub const VALIDATION_FRACTION: f64 = 0.2;

pub const NODE_COVARIATES: [&str; 6] = [
    "degree",
    "strength",
    "clustering",
    "neighbor_mean_age",
    "neighbor_male_fraction",
    "neighbor_female_fraction",
];

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("{attribute}: only {observed} observed values, at least {required} needed to impute {missing} missing")]
    TooFewObserved { attribute: &'static str, observed: usize, required: usize, missing: usize },
    #[error("{attribute}: {source}")]
    Learn { attribute: &'static str, source: LearnError },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{0} feature vectors given for {1} pairs")]
    Length(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputeParams {
    pub seed: u64,
    pub n_trees: usize,
    pub min_observed: usize,
    pub validation_fraction: f64,
}

impl ImputeParams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_trees: DEFAULT_TREES,
            min_observed: MIN_OBSERVED,
            validation_fraction: VALIDATION_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeImputation {
    pub attribute: String,
    pub total: usize,
    pub observed: usize,
    pub imputed: usize,
    /// `accuracy` or `mae`.
    pub metric: String,
    /// Score on held-out observed values; absent when nothing was imputed.
    pub validation_score: Option<f64>,
    pub validation_rows: usize,
    pub seed: u64,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub entries: Vec<AttributeImputation>,
    pub note: String,
}

const COVARIATE_NOTE: &str = "imputation covariates are an implementation choice: node attributes use \
degree, strength, clustering and observed neighbor age and sex; paired zip uses the structural tie features";

/// Per-node covariates in [`NODE_COVARIATES`] order, computed from observed values only.
pub fn node_covariates(g: &WeightedGraph, attrs: &AttributeTable) -> FeatureMatrix {
    let n = g.node_count();
    let observed: Vec<f64> = (0..n as NodeId).filter_map(|v| attrs.age(v)).collect();
    let global_age = if observed.is_empty() { 0.0 } else { observed.iter().sum::<f64>() / observed.len() as f64 };
    let mut values = Vec::with_capacity(n * NODE_COVARIATES.len());
    for v in 0..n as NodeId {
        let nbrs = g.neighbors(v);
        let k = nbrs.len();
        let mut ages = (0.0, 0usize);
        let (mut male, mut female) = (0usize, 0usize);
        for &u in nbrs {
            if let Some(a) = attrs.age(u) {
                ages.0 += a;
                ages.1 += 1;
            }
            match attrs.sex(u) {
                Some(Sex::M) => male += 1,
                Some(Sex::F) => female += 1,
                None => {}
            }
        }
        let frac = |c: usize| if k == 0 { 0.0 } else { c as f64 / k as f64 };
        values.extend([
            k as f64,
            g.strength(v),
            local_clustering(g, v),
            if ages.1 == 0 { global_age } else { ages.0 / ages.1 as f64 },
            frac(male),
            frac(female),
        ]);
    }
    let schema = NODE_COVARIATES.iter().map(|c| Column::numeric(*c)).collect();
    FeatureMatrix::new(schema, n, values).expect("node covariates are finite")
}

/// Fraction of neighbor pairs of `v` that are adjacent.
pub fn local_clustering(g: &WeightedGraph, v: NodeId) -> f64 {
    let nbrs = g.neighbors(v);
    let k = nbrs.len();
    if k < 2 {
        return 0.0;
    }
    let mut links = 0usize;
    for (a, &u) in nbrs.iter().enumerate() {
        let rest = &nbrs[a + 1..];
        let un = g.neighbors(u);
        let (mut p, mut q) = (0, 0);
        while p < rest.len() && q < un.len() {
            match rest[p].cmp(&un[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    links += 1;
                    p += 1;
                    q += 1;
                }
            }
        }
    }
    links as f64 / (k * (k - 1) / 2) as f64
}

struct Imputed {
    predictions: Vec<f64>,
    entry: AttributeImputation,
}

/// Validates on a hold-out of `observed`, then refits on all of it and
/// predicts `missing`.
#[allow(clippy::too_many_arguments)]
fn impute_column(
    attribute: &'static str,
    x: &FeatureMatrix,
    observed: &[usize],
    y: &[f64],
    missing: &[usize],
    task: Task,
    params: &ImputeParams,
    seed: u64,
) -> Result<Imputed, ImputeError> {
    let total = observed.len() + missing.len();
    let covariates = x.names().iter().map(|s| s.to_string()).collect();
    let metric = match task {
        Task::Classification => "accuracy",
        Task::Regression => "mae",
    };
    let mut entry = AttributeImputation {
        attribute: attribute.into(),
        total,
        observed: observed.len(),
        imputed: missing.len(),
        metric: metric.into(),
        validation_score: None,
        validation_rows: 0,
        seed,
        covariates,
    };
    if missing.is_empty() {
        return Ok(Imputed { predictions: Vec::new(), entry });
    }
    if observed.len() < params.min_observed {
        return Err(ImputeError::TooFewObserved {
            attribute,
            observed: observed.len(),
            required: params.min_observed,
            missing: missing.len(),
        });
    }
    let learn = |source| ImputeError::Learn { attribute, source };
    let forest = ForestParams::for_task(task).with_trees(params.n_trees);
    let data = Dataset::new(x.subset(observed), y.to_vec()).map_err(learn)?;

    let (train, test) = holdout_split(observed.len(), params.validation_fraction, seed)
        .map_err(|e| learn(LearnError::Shape(e.to_string())))?;
    if !test.is_empty() {
        let model = fit_forest_with(&data.subset(&train), &forest, seed).map_err(learn)?;
        let held = data.subset(&test);
        let pred = model.predict(&held.x).map_err(learn)?;
        let score = match task {
            Task::Classification => {
                pred.iter().zip(&held.y).filter(|(p, t)| p == t).count() as f64 / test.len() as f64
            }
            Task::Regression => {
                pred.iter().zip(&held.y).map(|(p, t)| (p - t).abs()).sum::<f64>() / test.len() as f64
            }
        };
        entry.validation_score = Some(score);
        entry.validation_rows = test.len();
    }
    let model = fit_forest_with(&data, &forest, seed).map_err(learn)?;
    let predictions = model.predict(&x.subset(missing)).map_err(learn)?;
    Ok(Imputed { predictions, entry })
}

/// Fills missing age and sex for every graph node. Observed cells, zip and
/// household are never changed.
pub fn impute_attributes(
    g: &WeightedGraph,
    attrs: &AttributeTable,
    params: &ImputeParams,
) -> Result<(AttributeTable, ImputationReport), ImputeError> {
    let n = g.node_count();
    let mut out = attrs.clone();
    out.ensure_len(n);
    let x = node_covariates(g, &out);
    let mut report = ImputationReport { entries: Vec::new(), note: COVARIATE_NOTE.into() };

    let (mut obs, mut ys, mut miss) = (Vec::new(), Vec::new(), Vec::new());
    for v in 0..n {
        match out.sex(v as NodeId) {
            Some(s) => {
                obs.push(v);
                ys.push(if s == Sex::F { 1.0 } else { 0.0 });
            }
            None => miss.push(v),
        }
    }
    let sex = impute_column("sex", &x, &obs, &ys, &miss, Task::Classification, params, params.seed)?;
    for (&v, &p) in miss.iter().zip(&sex.predictions) {
        out.set_sex(v as NodeId, if p == 1.0 { Sex::F } else { Sex::M });
    }
    report.entries.push(sex.entry);

    let (mut obs, mut ys, mut miss) = (Vec::new(), Vec::new(), Vec::new());
    for v in 0..n {
        match attrs.age(v as NodeId) {
            Some(a) => {
                obs.push(v);
                ys.push(a);
            }
            None => miss.push(v),
        }
    }
    let age_seed = params.seed.wrapping_add(1);
    let age = impute_column("age", &x, &obs, &ys, &miss, Task::Regression, params, age_seed)?;
    for (&v, &p) in miss.iter().zip(&age.predictions) {
        out.set_age(v as NodeId, p);
    }
    report.entries.push(age.entry);
    Ok((out, report))
}

/// Same-zip indicator per pair: observed where both zips are known, forest
/// imputed from the structural features elsewhere.
pub fn impute_paired_zip(
    pairs: &[(NodeId, NodeId)],
    feats: &[FeatureVector],
    attrs: &AttributeTable,
    params: &ImputeParams,
) -> Result<(Vec<bool>, AttributeImputation), ImputeError> {
    if pairs.len() != feats.len() {
        return Err(ImputeError::Length(feats.len(), pairs.len()));
    }
    let spec = DesignSpec {
        set: FeatureSet::Model1,
        encoding: Encoding::Categorical,
        demographics: false,
        zip: false,
    };
    let x = spec.matrix(feats)?;
    let mut z = vec![false; pairs.len()];
    let (mut obs, mut ys, mut miss) = (Vec::new(), Vec::new(), Vec::new());
    for (r, &(i, j)) in pairs.iter().enumerate() {
        match (attrs.zip(i), attrs.zip(j)) {
            (Some(a), Some(b)) => {
                z[r] = a == b;
                obs.push(r);
                ys.push(z[r] as u8 as f64);
            }
            _ => miss.push(r),
        }
    }
    let seed = params.seed.wrapping_add(2);
    // A single observed class leaves nothing to learn; every gap takes that class.
    let single_class = ys.windows(2).all(|w| w[0] == w[1]);
    let result = if single_class && obs.len() >= params.min_observed && !miss.is_empty() {
        Imputed {
            predictions: vec![ys[0]; miss.len()],
            entry: AttributeImputation {
                attribute: "paired_zip".into(),
                total: pairs.len(),
                observed: obs.len(),
                imputed: miss.len(),
                metric: "accuracy".into(),
                validation_score: Some(1.0),
                validation_rows: 0,
                seed,
                covariates: spec.column_names(),
            },
        }
    } else {
        impute_column("paired_zip", &x, &obs, &ys, &miss, Task::Classification, params, seed)?
    };
    for (&r, &p) in miss.iter().zip(&result.predictions) {
        z[r] = p == 1.0;
    }
    Ok((z, result.entry))
}
