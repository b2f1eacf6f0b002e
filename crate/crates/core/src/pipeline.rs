//! End-to-end orchestration: ingest, preprocess, features, imputation,
//! targets, fitting, evaluation and reporting.
//!
//! Each stage is also exposed on its own so the command line can run stages
//! separately and chain them through files. All randomness derives from the
//! run seed; every artifact carries the run's config hash and seed.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attributes::AttributeTable;
use crate::bowtie::{set_attribute_features, FeatureExtractor, FeatureVector};
use crate::eval::{
    accuracy_curve, holdout_split, sample_edges, threshold_grid, CoefficientTable, ConfusionMatrix, EvalError,
    EvalMode, EvaluationEntry, ImportanceTable, Learner, ResidualSummary,
};
use crate::features::{
    read_feature_csv, schema_document, write_feature_csv, DesignSpec, Encoding, FeatureError, FeatureSet,
};
use crate::graph::{
    filter_same_household, remove_isolated_ties, union_multiplex_with_node_count, GraphError,
    HouseholdFilterReport, NodeId, WeightedGraph, LAYER_COUNT,
};
use crate::impute::{impute_attributes, impute_paired_zip, ImputationReport, ImputeError, ImputeParams};
use crate::ingest::{
    read_attributes, read_cdr, read_edge_list, read_multiplex, write_attributes, CdrSummary, IngestError,
    LayerManifest, NodeMap,
};
use crate::learn::{
    aliased_columns, cross_validate, fit_forest_with, fit_lasso, fit_ols, fit_poisson, fit_ridge, CvResult,
    Dataset, FeatureMatrix, FittedModel, ForestParams, LearnError, ModelFile, ModelFileError, Penalty, Task,
    DEFAULT_FOLDS, DEFAULT_TREES,
};
use crate::plot::emit_plots;
use crate::strength::{
    apply_transform, averaged_strength, invert_value, multiplex_strength, normalized_strengths,
    read_target_csv, write_target_csv, StrengthError, TargetKind, TieStrengthTarget, Transform,
};

/// Largest number of classes a classification forest is fitted on.
pub const MAX_CLASSES: usize = 20;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const LOCK_FILE: &str = ".bowtie.lock";

/// Broad error category; the command line maps each to an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Io,
    Parse,
    Validation,
    Numerical,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub class: ErrorClass,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &'static str, class: ErrorClass, message: impl Into<String>) -> Self {
        Self { stage, class, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Io => 1,
            ErrorClass::Parse => 2,
            ErrorClass::Validation => 3,
            ErrorClass::Numerical => 4,
        }
    }

    fn io(stage: &'static str, path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new(stage, ErrorClass::Io, format!("{}: {e}", path.display()))
    }

    fn from_ingest(stage: &'static str, e: IngestError) -> Self {
        let class = match e {
            IngestError::Graph(_) => ErrorClass::Validation,
            IngestError::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Parse,
        };
        Self::new(stage, class, e.to_string())
    }

    fn from_learn(stage: &'static str, context: &str, e: LearnError) -> Self {
        let class = match e {
            LearnError::RankDeficient(_)
            | LearnError::Singular(_)
            | LearnError::Diverged { .. }
            | LearnError::NotConverged { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        };
        let message = match &e {
            LearnError::Diverged { iteration, trace } | LearnError::NotConverged { iterations: iteration, trace } => {
                format!("{context}: {e} (deviance trace {trace:?}, stopped at iteration {iteration})")
            }
            _ => format!("{context}: {e}"),
        };
        Self::new(stage, class, message)
    }

    fn from_strength(stage: &'static str, e: StrengthError) -> Self {
        let class = match e {
            StrengthError::Parse { .. } | StrengthError::Csv(_) => ErrorClass::Parse,
            _ => ErrorClass::Validation,
        };
        Self::new(stage, class, e.to_string())
    }

    fn from_feature(stage: &'static str, e: FeatureError) -> Self {
        let class = match e {
            FeatureError::Parse { .. } | FeatureError::Csv(_) => ErrorClass::Parse,
            FeatureError::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Validation,
        };
        Self::new(stage, class, e.to_string())
    }

    fn from_graph(stage: &'static str, e: GraphError) -> Self {
        Self::new(stage, ErrorClass::Validation, e.to_string())
    }

    fn from_impute(e: ImputeError) -> Self {
        let class = match &e {
            ImputeError::Learn { source, .. } => match source {
                LearnError::Diverged { .. } | LearnError::NotConverged { .. } | LearnError::Singular(_) => {
                    ErrorClass::Numerical
                }
                _ => ErrorClass::Validation,
            },
            _ => ErrorClass::Validation,
        };
        Self::new("impute", class, e.to_string())
    }

    fn from_eval(stage: &'static str, e: EvalError) -> Self {
        Self::new(stage, ErrorClass::Validation, e.to_string())
    }

    fn from_model_file(stage: &'static str, e: ModelFileError) -> Self {
        let class = match e {
            ModelFileError::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Parse,
        };
        Self::new(stage, class, e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Layered survey reports; strength is the number of distinct layers.
    Multiplex,
    /// Daily call records; strength is total call duration.
    Cdr,
    /// A weighted edge list.
    Generic,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub edges: Option<PathBuf>,
    pub multiplex: Option<PathBuf>,
    pub layers: Option<PathBuf>,
    pub calls: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessOptions {
    /// Drop ties within a household (multiplex data with household codes).
    pub household_filter: bool,
    /// Drop degree-one/degree-one dyads until none remain.
    pub remove_isolated: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self { household_filter: true, remove_isolated: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub inputs: InputPaths,
    pub seed: u64,
    pub learners: Vec<Learner>,
    pub feature_sets: Vec<FeatureSet>,
    pub targets: Vec<TargetKind>,
    /// Fraction of edges held out for evaluation.
    pub test_fraction: f64,
    pub evaluation: EvalMode,
    /// Fit on a uniform sample of this many edges; features still use the full graph.
    pub sample_edges: Option<usize>,
    /// Keep only ties whose endpoints have every used attribute observed, and skip imputation.
    pub complete_case_only: bool,
    /// Impute missing attributes before fitting.
    pub impute: bool,
    pub preprocess: PreprocessOptions,
    /// Model `y` from one endpoint's perspective only instead of both.
    pub single_orientation: bool,
    pub n_trees: usize,
    pub cv_folds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Generic,
            inputs: InputPaths::default(),
            seed: 0,
            learners: vec![Learner::ForestReg, Learner::Ols],
            feature_sets: vec![FeatureSet::Model1],
            targets: vec![TargetKind::AveragedZ],
            test_fraction: DEFAULT_TEST_FRACTION,
            evaluation: EvalMode::HeldOut,
            sample_edges: None,
            complete_case_only: false,
            impute: true,
            preprocess: PreprocessOptions::default(),
            single_orientation: false,
            n_trees: DEFAULT_TREES,
            cv_folds: DEFAULT_FOLDS,
        }
    }
}

impl RunConfig {
    /// Defaults suited to a dataset kind: layer-count models for surveys and
    /// duration-share regressions for call records.
    pub fn for_dataset(dataset: DatasetKind) -> Self {
        let base = Self { dataset, ..Self::default() };
        match dataset {
            DatasetKind::Multiplex => Self {
                learners: vec![Learner::ForestReg, Learner::ForestClf, Learner::Poisson],
                targets: vec![TargetKind::MultiplexW],
                feature_sets: FeatureSet::ALL.to_vec(),
                ..base
            },
            DatasetKind::Cdr => Self {
                learners: vec![Learner::ForestReg, Learner::Ols, Learner::Lasso, Learner::Ridge],
                targets: vec![TargetKind::NormalizedY, TargetKind::AveragedZ],
                feature_sets: FeatureSet::ALL.to_vec(),
                ..base
            },
            DatasetKind::Generic => base,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::new("config", ErrorClass::Validation, m));
        let need = |p: &Option<PathBuf>, name: &str| -> Result<(), PipelineError> {
            if p.is_none() {
                return Err(PipelineError::new(
                    "config",
                    ErrorClass::Validation,
                    format!("{:?} dataset needs inputs.{name}", self.dataset),
                ));
            }
            Ok(())
        };
        match self.dataset {
            DatasetKind::Multiplex => need(&self.inputs.multiplex, "multiplex")?,
            DatasetKind::Cdr => need(&self.inputs.calls, "calls")?,
            DatasetKind::Generic => need(&self.inputs.edges, "edges")?,
        }
        for l in &self.learners {
            if l.needs_counts() && self.targets.iter().any(|t| *t != TargetKind::MultiplexW) {
                return bad(format!("{} needs integer layer counts; use only target w with it", l.as_str()));
            }
        }
        if self.learners.is_empty() || self.targets.is_empty() || self.feature_sets.is_empty() {
            return bad("learners, targets and feature_sets must be non-empty".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test_fraction {} must lie in [0, 1)", self.test_fraction));
        }
        if self.n_trees == 0 || self.cv_folds < 2 {
            return bad("n_trees must be positive and cv_folds at least 2".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io("lock", dir, e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::new(
                "lock",
                ErrorClass::Validation,
                format!(
                    "{} exists; another pipeline is using this directory (delete the file if it is stale)",
                    path.display()
                ),
            )),
            Err(e) => Err(PipelineError::io("lock", &path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub nodes: usize,
    pub edges: usize,
    /// Count of ties at each layer count `1..=12` (multiplex only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strength_histogram: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_at_max_strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calls: Option<CdrSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub household_filter: Option<HouseholdFilterReport>,
    pub isolated_ties_removed: usize,
    pub edges_after_preprocessing: usize,
    /// Ties whose endpoints both have observed age and sex.
    pub complete_attribute_edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub graph: WeightedGraph,
    pub nodes: NodeMap,
    pub attrs: Option<AttributeTable>,
    pub summary: IngestSummary,
}

fn open(stage: &'static str, path: &Path) -> Result<BufReader<fs::File>, PipelineError> {
    fs::File::open(path).map(BufReader::new).map_err(|e| PipelineError::io(stage, path, e))
}

fn create(stage: &'static str, path: &Path) -> Result<BufWriter<fs::File>, PipelineError> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| PipelineError::io(stage, path, e))
}

fn write_text(stage: &'static str, path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| PipelineError::io(stage, path, e))
}

fn write_json<T: Serialize>(stage: &'static str, path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize") + "\n";
    write_text(stage, path, &text)
}

/// Reads the raw inputs and applies household filtering and isolated-tie
/// removal.
pub fn ingest(
    dataset: DatasetKind,
    inputs: &InputPaths,
    options: &PreprocessOptions,
) -> Result<Ingested, PipelineError> {
    const STAGE: &str = "ingest";
    let mut nodes = NodeMap::new();
    let mut summary = IngestSummary::default();
    enum Raw {
        Layers(Vec<crate::graph::MultiplexRecord>),
        Weighted(Vec<(NodeId, NodeId, f64)>),
    }
    let raw = match dataset {
        DatasetKind::Multiplex => {
            let path = inputs.multiplex.as_ref().ok_or_else(|| {
                PipelineError::new(STAGE, ErrorClass::Validation, "multiplex input path missing")
            })?;
            let manifest = match &inputs.layers {
                Some(p) => Some(LayerManifest::read_csv(open(STAGE, p)?).map_err(|e| PipelineError::from_ingest(STAGE, e))?),
                None => None,
            };
            Raw::Layers(
                read_multiplex(open(STAGE, path)?, &mut nodes, manifest.as_ref())
                    .map_err(|e| PipelineError::from_ingest(STAGE, e))?,
            )
        }
        DatasetKind::Cdr => {
            let path = inputs
                .calls
                .as_ref()
                .ok_or_else(|| PipelineError::new(STAGE, ErrorClass::Validation, "calls input path missing"))?;
            let (edges, calls) =
                read_cdr(open(STAGE, path)?, &mut nodes).map_err(|e| PipelineError::from_ingest(STAGE, e))?;
            summary.calls = Some(calls);
            Raw::Weighted(edges)
        }
        DatasetKind::Generic => {
            let path = inputs
                .edges
                .as_ref()
                .ok_or_else(|| PipelineError::new(STAGE, ErrorClass::Validation, "edges input path missing"))?;
            Raw::Weighted(read_edge_list(open(STAGE, path)?, &mut nodes).map_err(|e| PipelineError::from_ingest(STAGE, e))?)
        }
    };
    let attrs = match &inputs.attributes {
        Some(p) => Some(read_attributes(open(STAGE, p)?, &mut nodes).map_err(|e| PipelineError::from_ingest(STAGE, e))?),
        None => None,
    };
    let n = nodes.len();
    let graph = match raw {
        Raw::Layers(records) => union_multiplex_with_node_count(n, &records),
        Raw::Weighted(edges) => WeightedGraph::with_node_count(n, &edges),
    }
    .map_err(|e| PipelineError::from_graph(STAGE, e))?;
    let attrs = attrs.map(|mut a| {
        a.ensure_len(n);
        a
    });

    summary.nodes = n;
    summary.edges = graph.edge_count();
    if dataset == DatasetKind::Multiplex {
        let mut hist = vec![0usize; LAYER_COUNT as usize];
        for (_, _, w) in graph.edges() {
            hist[w as usize - 1] += 1;
        }
        summary.fraction_at_max_strength =
            Some(if graph.edge_count() == 0 { 0.0 } else { hist[LAYER_COUNT as usize - 1] as f64 / graph.edge_count() as f64 });
        summary.strength_histogram = hist;
    }
    let (graph, summary) = preprocess(dataset, graph, attrs.as_ref(), options, summary);
    Ok(Ingested { graph, nodes, attrs, summary })
}

fn preprocess(
    dataset: DatasetKind,
    mut graph: WeightedGraph,
    attrs: Option<&AttributeTable>,
    options: &PreprocessOptions,
    mut summary: IngestSummary,
) -> (WeightedGraph, IngestSummary) {
    if options.household_filter && dataset == DatasetKind::Multiplex {
        if let Some(a) = attrs.filter(|a| a.has_any_household()) {
            let (filtered, report) = filter_same_household(&graph, a);
            graph = filtered;
            summary.household_filter = Some(report);
        }
    }
    if options.remove_isolated {
        let before = graph.edge_count();
        graph = remove_isolated_ties(&graph);
        summary.isolated_ties_removed = before - graph.edge_count();
    }
    summary.edges_after_preprocessing = graph.edge_count();
    summary.complete_attribute_edges = match attrs {
        Some(a) => graph
            .edges()
            .filter(|&(u, v, _)| [u, v].iter().all(|&x| a.age(x).is_some() && a.sex(x).is_some()))
            .count(),
        None => 0,
    };
    (graph, summary)
}

/// Writes `nodemap.csv`, `graph.csv`, `attributes.csv` (if any) and
/// `ingest_summary.json` using the original node labels.
pub fn save_ingested(data: &Ingested, dir: &Path, provenance: &str) -> Result<(), PipelineError> {
    const STAGE: &str = "ingest";
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(STAGE, dir, e))?;
    let path = dir.join("nodemap.csv");
    data.nodes.write_csv(create(STAGE, &path)?).map_err(|e| PipelineError::from_ingest(STAGE, e))?;
    let path = dir.join("graph.csv");
    let mut f = create(STAGE, &path)?;
    let label = |v: NodeId| data.nodes.label(v).unwrap_or_default().to_string();
    let mut body = String::from("src,dst,weight\n");
    for (u, v, w) in data.graph.edges() {
        body.push_str(&format!("{},{},{w}\n", csv_field(&label(u)), csv_field(&label(v))));
    }
    f.write_all(body.as_bytes()).map_err(|e| PipelineError::io(STAGE, &path, e))?;
    f.flush().map_err(|e| PipelineError::io(STAGE, &path, e))?;
    if let Some(a) = &data.attrs {
        let path = dir.join("attributes.csv");
        write_attributes(create(STAGE, &path)?, a, Some(&data.nodes)).map_err(|e| PipelineError::from_ingest(STAGE, e))?;
    }
    write_json(
        STAGE,
        &dir.join("ingest_summary.json"),
        &serde_json::json!({ "provenance": provenance, "summary": data.summary }),
    )
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reads a directory written by [`save_ingested`]. `attributes` overrides
/// the directory's own attribute file, e.g. with an imputed table.
pub fn load_ingested(dir: &Path, attributes: Option<&Path>) -> Result<(WeightedGraph, NodeMap, Option<AttributeTable>), PipelineError> {
    const STAGE: &str = "load";
    let mut nodes = NodeMap::read_csv(open(STAGE, &dir.join("nodemap.csv"))?)
        .map_err(|e| PipelineError::from_ingest(STAGE, e))?;
    let edges = read_edge_list(open(STAGE, &dir.join("graph.csv"))?, &mut nodes)
        .map_err(|e| PipelineError::from_ingest(STAGE, e))?;
    let default_attrs = dir.join("attributes.csv");
    let attr_path = attributes.map(Path::to_path_buf).or_else(|| default_attrs.exists().then_some(default_attrs));
    let attrs = match attr_path {
        Some(p) => Some(read_attributes(open(STAGE, &p)?, &mut nodes).map_err(|e| PipelineError::from_ingest(STAGE, e))?),
        None => None,
    };
    let graph = WeightedGraph::with_node_count(nodes.len(), &edges).map_err(|e| PipelineError::from_graph(STAGE, e))?;
    let attrs = attrs.map(|mut a| {
        a.ensure_len(nodes.len());
        a
    });
    Ok((graph, nodes, attrs))
}

/// The edges to model: all of them, or a seeded uniform sample.
pub fn select_edges(g: &WeightedGraph, sample: Option<usize>, seed: u64) -> Result<Vec<(NodeId, NodeId)>, PipelineError> {
    match sample {
        Some(n) => sample_edges(g, n, seed).map_err(|e| PipelineError::from_eval("sample", e)),
        None => Ok(g.edges().map(|(u, v, _)| (u, v)).collect()),
    }
}

/// Structural features for `pairs` against the whole graph, with attribute
/// fields filled from `attrs`.
pub fn compute_features(
    g: &WeightedGraph,
    attrs: Option<&AttributeTable>,
    pairs: &[(NodeId, NodeId)],
) -> Result<Vec<FeatureVector>, PipelineError> {
    FeatureExtractor::new(g, attrs).edges(pairs).map_err(|e| PipelineError::from_graph("features", e))
}

/// Which attribute predictors the data supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeUse {
    pub demographics: bool,
    pub zip: bool,
}

impl AttributeUse {
    pub fn of(dataset: DatasetKind, attrs: Option<&AttributeTable>) -> Self {
        match attrs {
            None => Self { demographics: false, zip: false },
            Some(a) => Self {
                demographics: a.has_any_demographics(),
                zip: dataset == DatasetKind::Cdr && a.has_any_zip(),
            },
        }
    }

    /// Attribute predictors present in at least one feature row.
    pub fn from_features(feats: &[FeatureVector]) -> Self {
        Self {
            demographics: feats.iter().any(|f| f.age_sum.is_some() || f.sex_pair.is_some()),
            zip: feats.iter().any(|f| f.same_zip.is_some()),
        }
    }

    pub fn design(self, set: FeatureSet, encoding: Encoding) -> DesignSpec {
        DesignSpec { set, encoding, demographics: self.demographics, zip: self.zip }
    }

    /// Every used attribute field is present.
    pub fn complete(self, fv: &FeatureVector) -> bool {
        (!self.demographics || (fv.age_sum.is_some() && fv.sex_pair.is_some()))
            && (!self.zip || fv.same_zip.is_some())
    }
}

/// Builds a target for the modeled pairs, keeping only rows whose edge is in `pairs`.
pub fn build_target(
    g: &WeightedGraph,
    kind: TargetKind,
    pairs: &[(NodeId, NodeId)],
    single_orientation: bool,
) -> Result<TieStrengthTarget, PipelineError> {
    const STAGE: &str = "targets";
    let full = match kind {
        TargetKind::MultiplexW => multiplex_strength(g),
        TargetKind::NormalizedY => normalized_strengths(g, !single_orientation),
        TargetKind::AveragedZ => averaged_strength(g),
    }
    .map_err(|e| PipelineError::from_strength(STAGE, e))?;
    if pairs.len() == g.edge_count() {
        return Ok(full);
    }
    let keep: std::collections::HashSet<(NodeId, NodeId)> = pairs.iter().copied().collect();
    Ok(TieStrengthTarget {
        rows: full.rows.into_iter().filter(|r| keep.contains(&(r.src, r.dst))).collect(),
        ..full
    })
}

/// Imputes missing node attributes and refills the attribute fields of
/// `feats`; for call data the same-zip indicator is then imputed per tie.
pub fn impute_features(
    g: &WeightedGraph,
    attrs: &AttributeTable,
    use_attrs: AttributeUse,
    pairs: &[(NodeId, NodeId)],
    feats: &mut [FeatureVector],
    params: &ImputeParams,
) -> Result<(AttributeTable, ImputationReport), PipelineError> {
    let (filled, mut report) = if use_attrs.demographics {
        impute_attributes(g, attrs, params).map_err(PipelineError::from_impute)?
    } else {
        (attrs.clone(), ImputationReport::default())
    };
    for (fv, &(i, j)) in feats.iter_mut().zip(pairs) {
        let zip = fv.same_zip;
        set_attribute_features(fv, &filled, i, j);
        fv.same_zip = zip;
    }
    if use_attrs.zip {
        let (z, entry) = impute_paired_zip(pairs, feats, &filled, params).map_err(PipelineError::from_impute)?;
        for (fv, z) in feats.iter_mut().zip(z) {
            fv.same_zip = Some(z);
        }
        report.entries.push(entry);
    }
    Ok((filled, report))
}

/// Writes `attributes_imputed.csv` and `imputation_report.json` into `dir`.
pub fn write_imputation(
    dir: &Path,
    filled: &AttributeTable,
    nodes: &NodeMap,
    report: &ImputationReport,
    provenance: &str,
) -> Result<(), PipelineError> {
    let path = dir.join("attributes_imputed.csv");
    write_attributes(create("impute", &path)?, filled, Some(nodes)).map_err(|e| PipelineError::from_ingest("impute", e))?;
    write_json("impute", &dir.join("imputation_report.json"), &serde_json::json!({
        "provenance": provenance,
        "report": report,
    }))
}

/// How edges were split for fitting and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: EvalMode,
    pub test_fraction: f64,
    pub seed: u64,
    /// Number of feature rows (edges) the split was drawn over.
    pub n_edges: usize,
}

impl SplitSpec {
    /// Train and evaluation edge indices.
    pub fn indices(&self) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
        match self.mode {
            EvalMode::InSample => {
                let all: Vec<usize> = (0..self.n_edges).collect();
                Ok((all.clone(), all))
            }
            EvalMode::HeldOut => {
                holdout_split(self.n_edges, self.test_fraction, self.seed).map_err(|e| PipelineError::from_eval("split", e))
            }
        }
    }
}

/// Everything needed to rebuild a model's inputs, stored in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub id: String,
    pub learner: Learner,
    pub target: TargetKind,
    pub design: DesignSpec,
    pub columns: Vec<String>,
    pub aliased: Vec<String>,
    pub transform: Transform,
    pub split: SplitSpec,
    pub n_train: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trees: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvResult>,
}

pub fn model_id(target: TargetKind, set: FeatureSet, learner: Learner) -> String {
    format!("{}_model{}_{}", target.short(), set.number(), learner.as_str())
}

/// Target rows paired with the feature row of their edge.
fn align(pairs: &[(NodeId, NodeId)], target: &TieStrengthTarget) -> Result<Vec<usize>, PipelineError> {
    let index: HashMap<(NodeId, NodeId), usize> = pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    target
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            index.get(&(row.src.min(row.dst), row.src.max(row.dst))).copied().ok_or_else(|| {
                PipelineError::new(
                    "align",
                    ErrorClass::Validation,
                    format!("target row {r} ({}, {}) has no feature row", row.src, row.dst),
                )
            })
        })
        .collect()
}

fn rows_for(edge_of_row: &[usize], edges: &[usize], n_edges: usize) -> Vec<usize> {
    let mut member = vec![false; n_edges];
    for &e in edges {
        member[e] = true;
    }
    (0..edge_of_row.len()).filter(|&r| member[edge_of_row[r]]).collect()
}

pub struct FitJob<'a> {
    pub learner: Learner,
    pub target: &'a TieStrengthTarget,
    pub design: DesignSpec,
    pub split: SplitSpec,
    pub seed: u64,
    pub n_trees: usize,
    pub cv_folds: usize,
}

/// Fits one model on the training edges. Forests use the raw response;
/// Gaussian regressions use the log-centered response and standardized
/// predictors; Poisson uses raw counts and standardized predictors. OLS and
/// Poisson drop aliased columns first.
pub fn fit_model(job: &FitJob, pairs: &[(NodeId, NodeId)], feats: &[FeatureVector]) -> Result<ModelFile, PipelineError> {
    const STAGE: &str = "fit";
    let id = model_id(job.target.kind, job.design.set, job.learner);
    let ctx = id.as_str();
    if job.split.n_edges != pairs.len() {
        return Err(PipelineError::new(
            STAGE,
            ErrorClass::Validation,
            format!("split drawn over {} edges but {} feature rows given", job.split.n_edges, pairs.len()),
        ));
    }
    if job.target.transform != Transform::None {
        return Err(PipelineError::new(STAGE, ErrorClass::Validation, "targets must be given untransformed"));
    }
    let edge_of_row = align(pairs, job.target)?;
    let (train_edges, _) = job.split.indices()?;
    let train = rows_for(&edge_of_row, &train_edges, pairs.len());
    let x_edges = job.design.matrix(feats).map_err(|e| PipelineError::from_feature(STAGE, e))?;
    let x = x_edges.subset(&train.iter().map(|&r| edge_of_row[r]).collect::<Vec<_>>());
    let y_raw: Vec<f64> = train.iter().map(|&r| job.target.rows[r].value).collect();
    let learn_err = |e| PipelineError::from_learn(STAGE, ctx, e);

    let mut transform = Transform::None;
    let mut aliased = Vec::new();
    let mut cv = None;
    let mut n_trees = None;
    let model = match job.learner {
        Learner::ForestReg | Learner::ForestClf => {
            let task = if job.learner == Learner::ForestClf { Task::Classification } else { Task::Regression };
            if task == Task::Classification {
                let mut classes: Vec<i64> = y_raw.iter().map(|v| v.round() as i64).collect();
                classes.sort_unstable();
                classes.dedup();
                if classes.len() > MAX_CLASSES || y_raw.iter().any(|v| v.fract() != 0.0) {
                    return Err(PipelineError::new(
                        STAGE,
                        ErrorClass::Validation,
                        format!("{ctx}: classification needs integer labels with at most {MAX_CLASSES} classes"),
                    ));
                }
            }
            n_trees = Some(job.n_trees);
            let d = Dataset::new(x, y_raw).map_err(learn_err)?;
            let params = ForestParams::for_task(task).with_trees(job.n_trees);
            FittedModel::Forest(fit_forest_with(&d, &params, job.seed).map_err(learn_err)?)
        }
        Learner::Poisson => {
            let d = Dataset::new(x, y_raw).map_err(learn_err)?;
            aliased = aliased_columns(&d);
            let d = drop_columns(d, &aliased).map_err(learn_err)?.standardized().map_err(learn_err)?;
            FittedModel::Linear(fit_poisson(&d).map_err(learn_err)?)
        }
        Learner::Ols | Learner::Lasso | Learner::Ridge => {
            let logged = apply_transform(&TieStrengthTarget {
                kind: job.target.kind,
                rows: train.iter().map(|&r| job.target.rows[r]).collect(),
                transform: Transform::None,
            })
            .map_err(|e| PipelineError::from_strength(STAGE, e))?;
            transform = logged.transform;
            let mut d = Dataset::new(x, logged.values()).map_err(learn_err)?;
            if job.learner == Learner::Ols {
                aliased = aliased_columns(&d);
                d = drop_columns(d, &aliased).map_err(learn_err)?;
            }
            let d = d.standardized().map_err(learn_err)?;
            let linear = match job.learner {
                Learner::Ols => fit_ols(&d).map_err(learn_err)?,
                Learner::Lasso | Learner::Ridge => {
                    let penalty = if job.learner == Learner::Lasso { Penalty::Lasso } else { Penalty::Ridge };
                    let result = cross_validate(&d, penalty, &penalty.default_grid(), job.cv_folds, job.seed)
                        .map_err(learn_err)?;
                    let lambda = result.chosen_lambda;
                    cv = Some(result);
                    if penalty == Penalty::Lasso {
                        fit_lasso(&d, lambda).map_err(learn_err)?
                    } else {
                        fit_ridge(&d, lambda).map_err(learn_err)?
                    }
                }
                _ => unreachable!(),
            };
            FittedModel::Linear(linear)
        }
    };
    let meta = ModelMeta {
        id,
        learner: job.learner,
        target: job.target.kind,
        design: job.design,
        columns: model.schema_names(),
        aliased,
        transform,
        split: job.split,
        n_train: train.len(),
        n_trees,
        cv,
    };
    let mut file = ModelFile::new(model, job.seed);
    file.hyperparameters = serde_json::to_value(&meta).expect("meta serializes");
    Ok(file)
}

fn drop_columns(d: Dataset, names: &[String]) -> Result<Dataset, LearnError> {
    if names.is_empty() {
        return Ok(d);
    }
    let keep: Vec<String> = d.names().into_iter().filter(|n| !names.contains(n)).collect();
    Dataset::new(d.x.select(&keep)?, d.y)
}

pub fn model_meta(file: &ModelFile) -> Result<ModelMeta, PipelineError> {
    serde_json::from_value(file.hyperparameters.clone()).map_err(|e| {
        PipelineError::new("evaluate", ErrorClass::Parse, format!("model file lacks pipeline metadata: {e}"))
    })
}

/// Predicts the evaluation rows of the model's split and summarizes the
/// residuals on the response's original scale.
pub fn evaluate_model(
    file: &ModelFile,
    model_path: &str,
    pairs: &[(NodeId, NodeId)],
    feats: &[FeatureVector],
    target: &TieStrengthTarget,
) -> Result<EvaluationEntry, PipelineError> {
    const STAGE: &str = "evaluate";
    let meta = model_meta(file)?;
    if meta.split.n_edges != pairs.len() {
        return Err(PipelineError::new(
            STAGE,
            ErrorClass::Validation,
            format!("model was split over {} edges but {} feature rows given", meta.split.n_edges, pairs.len()),
        ));
    }
    if target.kind != meta.target {
        return Err(PipelineError::new(
            STAGE,
            ErrorClass::Validation,
            format!("model predicts {:?} but target is {:?}", meta.target, target.kind),
        ));
    }
    let edge_of_row = align(pairs, target)?;
    let (_, eval_edges) = meta.split.indices()?;
    let rows = rows_for(&edge_of_row, &eval_edges, pairs.len());
    let x_edges = meta.design.matrix(feats).map_err(|e| PipelineError::from_feature(STAGE, e))?;
    let x: FeatureMatrix = x_edges
        .subset(&rows.iter().map(|&r| edge_of_row[r]).collect::<Vec<_>>())
        .select(&meta.columns)
        .map_err(|e| PipelineError::from_learn(STAGE, &meta.id, e))?;
    let raw = file.model.predict(&x).map_err(|e| PipelineError::from_learn(STAGE, &meta.id, e))?;
    let predicted: Vec<f64> = raw.iter().map(|&p| invert_value(meta.transform, p)).collect();
    let truth: Vec<f64> = rows.iter().map(|&r| target.rows[r].value).collect();
    let residuals: Vec<f64> = truth.iter().zip(&predicted).map(|(t, p)| t - p).collect();
    let summary = ResidualSummary::of(&residuals);
    let curve = accuracy_curve(&residuals, &threshold_grid(summary.max_abs));

    let mut entry = EvaluationEntry {
        id: meta.id.clone(),
        target: meta.target,
        feature_set: meta.design.set,
        learner: meta.learner,
        mode: meta.split.mode,
        n_train: meta.n_train,
        n_eval: rows.len(),
        columns: meta.columns.clone(),
        aliased: meta.aliased.clone(),
        residuals: summary,
        curve,
        importance: match &file.model {
            FittedModel::Forest(f) => ImportanceTable::of(f),
            FittedModel::Linear(l) => ImportanceTable::of_linear(l),
        },
        coefficients: None,
        r_squared: None,
        adjusted_r_squared: None,
        deviance: None,
        lambda: None,
        shrinkage_ratio: None,
        cv: meta.cv.clone(),
        confusion: None,
        model_file: model_path.to_string(),
    };
    match &file.model {
        FittedModel::Linear(l) => {
            entry.coefficients = Some(CoefficientTable::of(l));
            entry.r_squared = l.diagnostics.r_squared;
            entry.adjusted_r_squared = l.diagnostics.adjusted_r_squared;
            entry.deviance = l.diagnostics.deviance;
            entry.shrinkage_ratio = l.diagnostics.shrinkage_ratio;
            if matches!(meta.learner, Learner::Lasso | Learner::Ridge) {
                entry.lambda = Some(l.lambda);
            }
        }
        FittedModel::Forest(f) => {
            if f.task() == Task::Classification {
                let classes: Vec<i64> = if meta.target == TargetKind::MultiplexW {
                    (1..=LAYER_COUNT as i64).collect()
                } else {
                    Vec::new()
                };
                entry.confusion = Some(ConfusionMatrix::with_labels(&truth, &predicted, &classes));
            }
        }
    }
    Ok(entry)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modeled_edges: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_use: Option<AttributeUse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imputation: Option<ImputationReport>,
    pub entries: Vec<EvaluationEntry>,
}

/// Paths of the main artifacts of a run, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: EvaluationReport,
    pub files: Vec<PathBuf>,
}

/// Reads the feature CSV and the target CSVs written by a run.
pub fn read_features(path: &Path) -> Result<(Vec<(NodeId, NodeId)>, Vec<FeatureVector>), PipelineError> {
    read_feature_csv(open("features", path)?).map_err(|e| PipelineError::from_feature("features", e))
}

pub fn read_target(path: &Path, kind: TargetKind) -> Result<TieStrengthTarget, PipelineError> {
    read_target_csv(open("targets", path)?, kind).map_err(|e| PipelineError::from_strength("targets", e))
}

pub fn write_features(
    path: &Path,
    pairs: &[(NodeId, NodeId)],
    feats: &[FeatureVector],
    provenance: &str,
) -> Result<(), PipelineError> {
    write_feature_csv(create("features", path)?, pairs, feats, Some(provenance))
        .map_err(|e| PipelineError::from_feature("features", e))?;
    let schema_path = path.with_extension("schema.json");
    let mut doc = schema_document();
    doc["provenance"] = provenance.into();
    write_json("features", &schema_path, &doc)
}

pub fn write_target(path: &Path, t: &TieStrengthTarget, provenance: &str) -> Result<(), PipelineError> {
    let mut f = create("targets", path)?;
    write_target_csv(&mut f, t, Some(provenance)).map_err(|e| PipelineError::io("targets", path, e))?;
    f.flush().map_err(|e| PipelineError::io("targets", path, e))
}

/// Runs every stage, writing artifacts under `out`:
///
/// ```text
/// nodemap.csv graph.csv attributes.csv ingest_summary.json
/// attributes_imputed.csv imputation_report.json      (when imputing)
/// features.csv features.schema.json target_<w|y|z>.csv
/// models/<id>.json
/// report.json report.txt plots/
/// timing.json                                        (wall-clock, not reproducible)
/// ```
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let _lock = DirLock::acquire(out)?;
    let hash = cfg.hash();
    let provenance = format!("config_hash={hash} seed={}", cfg.seed);
    let mut timing: Vec<(&'static str, f64)> = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timing: &mut Vec<(&'static str, f64)>| {
        let secs = clock.elapsed().as_secs_f64();
        log::info!("stage {name} finished in {secs:.2}s");
        timing.push((name, secs));
        clock = Instant::now();
    };
    let mut files = Vec::new();
    let mut note = |p: PathBuf| files.push(p);

    let data = ingest(cfg.dataset, &cfg.inputs, &cfg.preprocess)?;
    save_ingested(&data, out, &provenance)?;
    note(out.join("graph.csv"));
    lap("ingest", &mut timing);

    let pairs = select_edges(&data.graph, cfg.sample_edges, cfg.seed)?;
    let use_attrs = AttributeUse::of(cfg.dataset, data.attrs.as_ref());
    let mut feats = compute_features(&data.graph, data.attrs.as_ref(), &pairs)?;
    lap("features", &mut timing);

    let mut imputation = None;
    let needs_imputation = feats.iter().any(|f| !use_attrs.complete(f));
    let (pairs, feats) = if cfg.complete_case_only {
        let keep: Vec<usize> = (0..pairs.len()).filter(|&k| use_attrs.complete(&feats[k])).collect();
        (keep.iter().map(|&k| pairs[k]).collect::<Vec<_>>(), keep.iter().map(|&k| feats[k].clone()).collect())
    } else if cfg.impute && needs_imputation {
        let attrs = data.attrs.as_ref().expect("missing attributes imply a table");
        let params = ImputeParams { n_trees: cfg.n_trees, ..ImputeParams::new(cfg.seed) };
        let (filled, report) = impute_features(&data.graph, attrs, use_attrs, &pairs, &mut feats, &params)?;
        let path = out.join("attributes_imputed.csv");
        write_imputation(out, &filled, &data.nodes, &report, &provenance)?;
        note(path);
        imputation = Some(report);
        (pairs, feats)
    } else {
        (pairs, feats)
    };
    lap("impute", &mut timing);

    let features_path = out.join("features.csv");
    write_features(&features_path, &pairs, &feats, &provenance)?;
    note(features_path);

    let mut targets = Vec::new();
    for &kind in &cfg.targets {
        let t = build_target(&data.graph, kind, &pairs, cfg.single_orientation)?;
        let path = out.join(format!("target_{}.csv", kind.short()));
        write_target(&path, &t, &provenance)?;
        note(path);
        targets.push(t);
    }
    lap("targets", &mut timing);

    let split = SplitSpec { mode: cfg.evaluation, test_fraction: cfg.test_fraction, seed: cfg.seed, n_edges: pairs.len() };
    let models_dir = out.join("models");
    fs::create_dir_all(&models_dir).map_err(|e| PipelineError::io("fit", &models_dir, e))?;
    let mut entries = Vec::new();
    for target in &targets {
        for &set in &cfg.feature_sets {
            for &learner in &cfg.learners {
                let encoding = if learner.is_forest() { Encoding::Categorical } else { Encoding::Dummies };
                let job = FitJob {
                    learner,
                    target,
                    design: use_attrs.design(set, encoding),
                    split,
                    seed: cfg.seed,
                    n_trees: cfg.n_trees,
                    cv_folds: cfg.cv_folds,
                };
                log::info!("fitting {}", model_id(target.kind, set, learner));
                let mut file = fit_model(&job, &pairs, &feats)?;
                file.config_hash = Some(hash.clone());
                let id = model_id(target.kind, set, learner);
                let rel = format!("models/{id}.json");
                let path = out.join(&rel);
                file.save(&path).map_err(|e| PipelineError::from_model_file("fit", e))?;
                note(path);
                entries.push(evaluate_model(&file, &rel, &pairs, &feats, target)?);
            }
        }
    }
    lap("fit", &mut timing);

    let report = EvaluationReport {
        format: "bowtie-report".into(),
        config_hash: hash,
        seed: cfg.seed,
        config: cfg.clone(),
        ingest: Some(data.summary.clone()),
        modeled_edges: Some(pairs.len()),
        attribute_use: Some(use_attrs),
        imputation,
        entries,
    };
    files.extend(write_report(&report, out)?);
    lap("report", &mut timing);

    let timing_json: serde_json::Map<String, serde_json::Value> =
        timing.into_iter().map(|(k, v)| (k.to_string(), v.into())).collect();
    write_json("report", &out.join("timing.json"), &timing_json)?;
    Ok(RunOutput { report, files })
}

/// A report over evaluations produced by separate stage commands. The hash
/// covers the configuration and the serialized entries.
pub fn report_from_entries(config: RunConfig, entries: Vec<EvaluationEntry>) -> EvaluationReport {
    let mut h = Sha256::new();
    h.update(config.hash().as_bytes());
    h.update(serde_json::to_string(&entries).expect("entries serialize").as_bytes());
    EvaluationReport {
        format: "bowtie-report".into(),
        config_hash: hex::encode(h.finalize()),
        seed: config.seed,
        config,
        ingest: None,
        modeled_edges: None,
        attribute_use: None,
        imputation: None,
        entries,
    }
}

/// Writes `report.json`, `report.txt` and the plots directory.
pub fn write_report(report: &EvaluationReport, out: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    let json = out.join("report.json");
    write_json("report", &json, report)?;
    files.push(json);
    let plots = emit_plots(&report.entries, &out.join("plots")).map_err(|e| PipelineError::io("report", out, e))?;
    let txt = out.join("report.txt");
    write_text("report", &txt, &render_text(report, plots.notice.as_deref()))?;
    files.push(txt);
    files.extend(plots.files);
    Ok(files)
}

/// Human-readable summary of a report.
pub fn render_text(report: &EvaluationReport, plot_notice: Option<&str>) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "bowtie report");
    let _ = writeln!(s, "config_hash: {}", report.config_hash);
    let _ = writeln!(s, "seed: {}", report.seed);
    if let Some(i) = &report.ingest {
        let _ = writeln!(s, "dataset: {:?}", report.config.dataset);
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "nodes: {}", i.nodes);
        let _ = writeln!(s, "ties ingested: {}", i.edges);
        if let Some(f) = i.fraction_at_max_strength {
            let _ = writeln!(s, "ties at strength {LAYER_COUNT} before filtering: {:.4}", f);
        }
        if let Some(h) = &i.household_filter {
            let _ = writeln!(
                s,
                "household filter: {} retained, {} same-household removed, {} missing-household dropped",
                h.retained, h.same_household_removed, h.missing_household_dropped
            );
        }
        let _ = writeln!(s, "isolated ties removed: {}", i.isolated_ties_removed);
        let _ = writeln!(s, "ties after preprocessing: {}", i.edges_after_preprocessing);
        let _ = writeln!(s, "complete-attribute ties: {}", i.complete_attribute_edges);
    }
    if let Some(n) = report.modeled_edges {
        let _ = writeln!(s, "modeled ties: {n}");
    }
    if let Some(imp) = &report.imputation {
        let _ = writeln!(s, "\n[imputation]");
        for e in &imp.entries {
            let score = e.validation_score.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                s,
                "{}: {} observed, {} imputed, held-out {} {} on {} rows",
                e.attribute, e.observed, e.imputed, e.metric, score, e.validation_rows
            );
        }
        let _ = writeln!(s, "note: {}", imp.note);
    }
    for e in &report.entries {
        let _ = writeln!(s, "\n[model {}]", e.id);
        let _ = writeln!(s, "learner: {}", e.learner.as_str());
        let _ = writeln!(s, "target: {}", e.target.short());
        let _ = writeln!(s, "feature set: model {}", e.feature_set.number());
        let mode = match e.mode {
            EvalMode::HeldOut => "held-out",
            EvalMode::InSample => "in-sample",
        };
        let _ = writeln!(s, "evaluation: {mode}, {} training rows, {} evaluated rows", e.n_train, e.n_eval);
        if !e.aliased.is_empty() {
            let _ = writeln!(s, "aliased columns dropped: {}", e.aliased.join(", "));
        }
        let r = &e.residuals;
        let _ = writeln!(
            s,
            "absolute residual: mean {:.4}, median {:.4}, max {:.4}",
            r.mean_abs, r.median_abs, r.max_abs
        );
        for p in &r.within {
            let _ = writeln!(s, "within {}: {:.4}", p.threshold, p.fraction);
        }
        if let Some(v) = e.adjusted_r_squared {
            let _ = writeln!(s, "adjusted R^2: {v:.4}");
        }
        if let Some(v) = e.deviance {
            let _ = writeln!(s, "deviance: {v:.4}");
        }
        if let Some(v) = e.lambda {
            let folds = e.cv.as_ref().map(|c| c.folds).unwrap_or(DEFAULT_FOLDS);
            let _ = writeln!(s, "lambda ({folds}-fold CV): {v:.6e}");
        }
        if let Some(v) = e.shrinkage_ratio {
            let _ = writeln!(s, "shrinkage ratio: {v:.4}");
        }
        let _ = writeln!(s, "importance (null line {:.4}):", e.importance.null_line);
        let mut order: Vec<usize> = (0..e.importance.features.len()).collect();
        order.sort_by(|&a, &b| e.importance.importances[b].total_cmp(&e.importance.importances[a]).then(a.cmp(&b)));
        for k in order {
            let _ = writeln!(s, "  {:<8} {:.4}", e.importance.features[k], e.importance.importances[k]);
        }
        if let Some(c) = &e.coefficients {
            let _ = writeln!(s, "coefficients:");
            for row in &c.rows {
                match row.std_error {
                    Some(se) => {
                        let _ = writeln!(s, "  {:<12} {:>12.6} (se {:.6})", row.term, row.estimate, se);
                    }
                    None => {
                        let _ = writeln!(s, "  {:<12} {:>12.6}", row.term, row.estimate);
                    }
                }
            }
        }
        if let Some(m) = &e.confusion {
            let _ = writeln!(s, "confusion (rows truth, columns predicted), accuracy {:.4}:", m.accuracy());
            let header: Vec<String> = m.labels.iter().map(|l| format!("{l:>5}")).collect();
            let _ = writeln!(s, "       {}", header.join(""));
            for (k, row) in m.counts.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
                let _ = writeln!(s, "  {:>4} {}", m.labels[k], cells.join(""));
            }
        }
    }
    if let Some(n) = plot_notice {
        let _ = writeln!(s, "\nnotice: {n}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RunConfig::for_dataset(DatasetKind::Cdr);
        assert_eq!(a.hash(), a.clone().hash());
        let b = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::for_dataset(DatasetKind::Cdr);
        assert!(c.validate().is_err());
        c.inputs.calls = Some("calls.csv".into());
        c.validate().unwrap();
        c.learners.push(Learner::Poisson);
        assert_eq!(c.validate().unwrap_err().class, ErrorClass::Validation);
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"dataset":"multiplex","seed":7}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.n_trees, DEFAULT_TREES);
        assert!(serde_json::from_str::<RunConfig>(r#"{"dataset":"cdr","bogus":1}"#).is_err());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(DirLock::acquire(dir.path()).is_err());
        drop(lock);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn exit_codes() {
        let e = |class| PipelineError::new("x", class, "m").exit_code();
        assert_eq!((e(ErrorClass::Parse), e(ErrorClass::Validation), e(ErrorClass::Numerical)), (2, 3, 4));
    }
}
