use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bowtie::eval::{EvalMode, EvaluationEntry, Learner};
use bowtie::features::FeatureSet;
use bowtie::impute::ImputeParams;
use bowtie::learn::{ModelFile, DEFAULT_FOLDS, DEFAULT_TREES};
use bowtie::pipeline::{
    build_target, compute_features, evaluate_model, fit_model, impute_features, ingest, load_ingested,
    read_features, read_target, report_from_entries, run_pipeline, save_ingested, select_edges, write_features,
    write_imputation, write_report, write_target, AttributeUse, DatasetKind, DirLock, ErrorClass, FitJob,
    InputPaths, PipelineError, PreprocessOptions, RunConfig, SplitSpec, DEFAULT_TEST_FRACTION,
};
use bowtie::strength::TargetKind;
use bowtie::synth::{self, CdrParams, CommunityParams, VillageParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

#[derive(Parser)]
#[command(name = "bowtie", version, about = "Bow-tie tie-strength analysis of weighted social networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw inputs, filter, and write graph.csv, nodemap.csv and attributes.csv
    Ingest(IngestArgs),
    /// Impute missing node attributes of an ingested graph
    Impute(ImputeArgs),
    /// Compute bow-tie features and tie-strength targets
    Features(FeaturesArgs),
    /// Fit models on a feature file and a target file
    Fit(FitArgs),
    /// Evaluate a saved model on its held-out (or in-sample) rows
    Evaluate(EvaluateArgs),
    /// Combine evaluations into report.txt, report.json and SVG plots
    Report(ReportArgs),
    /// Run every stage end to end
    Pipeline(PipelineArgs),
    /// Write a synthetic dataset
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Multiplex,
    Cdr,
    Generic,
}

impl From<Kind> for DatasetKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Multiplex => DatasetKind::Multiplex,
            Kind::Cdr => DatasetKind::Cdr,
            Kind::Generic => DatasetKind::Generic,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    W,
    Y,
    Z,
}

impl From<Target> for TargetKind {
    fn from(t: Target) -> Self {
        match t {
            Target::W => TargetKind::MultiplexW,
            Target::Y => TargetKind::NormalizedY,
            Target::Z => TargetKind::AveragedZ,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerArg {
    ForestReg,
    ForestClf,
    Ols,
    Poisson,
    Lasso,
    Ridge,
}

impl From<LearnerArg> for Learner {
    fn from(l: LearnerArg) -> Self {
        match l {
            LearnerArg::ForestReg => Learner::ForestReg,
            LearnerArg::ForestClf => Learner::ForestClf,
            LearnerArg::Ols => Learner::Ols,
            LearnerArg::Poisson => Learner::Poisson,
            LearnerArg::Lasso => Learner::Lasso,
            LearnerArg::Ridge => Learner::Ridge,
        }
    }
}

fn feature_set(n: u8) -> FeatureSet {
    FeatureSet::from_number(n).expect("clap restricts the range")
}

#[derive(Args)]
struct Inputs {
    #[arg(long, value_enum)]
    dataset: Kind,
    /// Weighted edge list `src,dst,weight`
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Layer reports `src,dst,layer`
    #[arg(long)]
    multiplex: Option<PathBuf>,
    /// Layer name manifest `layer,index`
    #[arg(long)]
    layers: Option<PathBuf>,
    /// Call records `caller,callee,date,duration`
    #[arg(long)]
    calls: Option<PathBuf>,
    /// Node attributes `node,age,sex,zip,household`
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// Keep ties between members of the same household
    #[arg(long)]
    keep_household_ties: bool,
    /// Keep ties whose endpoints both have degree one
    #[arg(long)]
    keep_isolated_ties: bool,
}

impl Inputs {
    fn paths(&self) -> InputPaths {
        InputPaths {
            edges: self.edges.clone(),
            multiplex: self.multiplex.clone(),
            layers: self.layers.clone(),
            calls: self.calls.clone(),
            attributes: self.attributes.clone(),
        }
    }

    fn preprocess(&self) -> PreprocessOptions {
        PreprocessOptions { household_filter: !self.keep_household_ties, remove_isolated: !self.keep_isolated_ties }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImputeArgs {
    /// Directory written by `ingest`
    #[arg(long)]
    input: PathBuf,
    /// Also refill attribute columns of this feature file
    #[arg(long)]
    features: Option<PathBuf>,
    /// Impute the same-zip indicator per tie (call data)
    #[arg(long)]
    zip: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TREES)]
    trees: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Directory written by `ingest`
    #[arg(long)]
    input: PathBuf,
    /// Attribute table to use instead of the ingested one
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// Use a uniform sample of this many ties
    #[arg(long)]
    sample_edges: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Target::W])]
    target: Vec<Target>,
    /// Model y from the first endpoint only
    #[arg(long)]
    single_orientation: bool,
    /// Keep only ties whose endpoints have every attribute observed
    #[arg(long)]
    complete_case_only: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum, default_value_t = Target::W)]
    target: Target,
    /// Defaults to target_<w|y|z>.csv next to the feature file
    #[arg(long)]
    target_file: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3), default_value_t = 1)]
    model: u8,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [LearnerArg::ForestReg])]
    learners: Vec<LearnerArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    /// Fit and evaluate on every tie
    #[arg(long)]
    in_sample: bool,
    #[arg(long, default_value_t = DEFAULT_TREES)]
    trees: usize,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    cv_folds: usize,
    /// Directory receiving models/<id>.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Defaults to the model's target file next to the feature file
    #[arg(long)]
    target_file: Option<PathBuf>,
    /// Output JSON file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON files written by `evaluate`
    #[arg(long, num_args = 1.., required = true)]
    evaluations: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON run configuration; other flags are ignored when given
    #[arg(long, conflicts_with = "dataset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    dataset: Option<Kind>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    multiplex: Option<PathBuf>,
    #[arg(long)]
    layers: Option<PathBuf>,
    #[arg(long)]
    calls: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature sets to fit; defaults to all three
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3), value_delimiter = ',')]
    model: Vec<u8>,
    #[arg(long, value_enum, value_delimiter = ',')]
    target: Vec<Target>,
    #[arg(long, value_enum, value_delimiter = ',')]
    learners: Vec<LearnerArg>,
    #[arg(long)]
    sample_edges: Option<usize>,
    #[arg(long)]
    complete_case_only: bool,
    #[arg(long)]
    no_impute: bool,
    #[arg(long)]
    in_sample: bool,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    single_orientation: bool,
    /// Print the effective configuration as JSON and exit
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Households (village) or nodes (calls, graph)
    #[arg(long)]
    size: Option<usize>,
    /// Probability that an attribute is unobserved
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Multiplex survey network with households
    Village,
    /// Call records with attributes
    Calls,
    /// Weighted community graph with planted strengths
    Graph,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Impute(a) => cmd_impute(a),
        Command::Features(a) => cmd_features(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn provenance(cfg: &RunConfig) -> String {
    format!("config_hash={} seed={}", cfg.hash(), cfg.seed)
}

fn io_err(stage: &'static str, path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(stage, ErrorClass::Io, format!("{}: {e}", path.display()))
}

fn write_json(stage: &'static str, path: &Path, v: &serde_json::Value) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(v).expect("json values serialize") + "\n";
    fs::write(path, text).map_err(|e| io_err(stage, path, e))
}

fn cmd_ingest(a: IngestArgs) -> Result<(), PipelineError> {
    let cfg = RunConfig {
        dataset: a.inputs.dataset.into(),
        inputs: a.inputs.paths(),
        preprocess: a.inputs.preprocess(),
        seed: a.seed,
        ..RunConfig::default()
    };
    let _lock = DirLock::acquire(&a.out)?;
    let data = ingest(cfg.dataset, &cfg.inputs, &cfg.preprocess)?;
    save_ingested(&data, &a.out, &provenance(&cfg))?;
    info!("ingested {} nodes, {} ties", data.summary.nodes, data.summary.edges_after_preprocessing);
    println!(
        "{} nodes, {} ties after preprocessing -> {}",
        data.summary.nodes,
        data.summary.edges_after_preprocessing,
        a.out.display()
    );
    Ok(())
}

fn cmd_impute(a: ImputeArgs) -> Result<(), PipelineError> {
    let (g, nodes, attrs) = load_ingested(&a.input, None)?;
    let attrs = attrs.ok_or_else(|| {
        PipelineError::new("impute", ErrorClass::Validation, format!("{} has no attributes.csv", a.input.display()))
    })?;
    let cfg = RunConfig { seed: a.seed, n_trees: a.trees, inputs: InputPaths { attributes: Some(a.input.clone()), ..InputPaths::default() }, ..RunConfig::default() };
    let prov = provenance(&cfg);
    let _lock = DirLock::acquire(&a.out)?;
    let (pairs, mut feats) = match &a.features {
        Some(p) => read_features(p)?,
        None => (Vec::new(), Vec::new()),
    };
    let use_attrs = AttributeUse { demographics: attrs.has_any_demographics(), zip: a.zip && a.features.is_some() };
    let params = ImputeParams { n_trees: a.trees, ..ImputeParams::new(a.seed) };
    let (filled, report) = impute_features(&g, &attrs, use_attrs, &pairs, &mut feats, &params)?;
    write_imputation(&a.out, &filled, &nodes, &report, &prov)?;
    if a.features.is_some() {
        write_features(&a.out.join("features.csv"), &pairs, &feats, &prov)?;
    }
    for e in &report.entries {
        println!("{}: {} imputed of {}", e.attribute, e.imputed, e.total);
    }
    Ok(())
}

fn cmd_features(a: FeaturesArgs) -> Result<(), PipelineError> {
    let (g, _, attrs) = load_ingested(&a.input, a.attributes.as_deref())?;
    let cfg = RunConfig {
        seed: a.seed,
        sample_edges: a.sample_edges,
        targets: a.target.iter().map(|&t| t.into()).collect(),
        single_orientation: a.single_orientation,
        complete_case_only: a.complete_case_only,
        inputs: InputPaths { edges: Some(a.input.clone()), attributes: a.attributes.clone(), ..InputPaths::default() },
        ..RunConfig::default()
    };
    let prov = provenance(&cfg);
    let _lock = DirLock::acquire(&a.out)?;
    let mut pairs = select_edges(&g, cfg.sample_edges, cfg.seed)?;
    let mut feats = compute_features(&g, attrs.as_ref(), &pairs)?;
    if cfg.complete_case_only {
        let use_attrs = AttributeUse::of(DatasetKind::Cdr, attrs.as_ref());
        let keep: Vec<usize> = (0..pairs.len()).filter(|&k| use_attrs.complete(&feats[k])).collect();
        pairs = keep.iter().map(|&k| pairs[k]).collect();
        feats = keep.iter().map(|&k| feats[k].clone()).collect();
    }
    write_features(&a.out.join("features.csv"), &pairs, &feats, &prov)?;
    for &kind in &cfg.targets {
        let t = build_target(&g, kind, &pairs, cfg.single_orientation)?;
        write_target(&a.out.join(format!("target_{}.csv", kind.short())), &t, &prov)?;
    }
    println!("{} ties -> {}", pairs.len(), a.out.display());
    Ok(())
}

fn default_target_path(features: &Path, kind: TargetKind) -> PathBuf {
    features.with_file_name(format!("target_{}.csv", kind.short()))
}

fn cmd_fit(a: FitArgs) -> Result<(), PipelineError> {
    let kind: TargetKind = a.target.into();
    let (pairs, feats) = read_features(&a.features)?;
    let target_path = a.target_file.clone().unwrap_or_else(|| default_target_path(&a.features, kind));
    let target = read_target(&target_path, kind)?;
    let cfg = RunConfig {
        seed: a.seed,
        learners: a.learners.iter().map(|&l| l.into()).collect(),
        feature_sets: vec![feature_set(a.model)],
        targets: vec![kind],
        test_fraction: a.test_fraction,
        evaluation: if a.in_sample { EvalMode::InSample } else { EvalMode::HeldOut },
        n_trees: a.trees,
        cv_folds: a.cv_folds,
        inputs: InputPaths { edges: Some(a.features.clone()), ..InputPaths::default() },
        ..RunConfig::default()
    };
    cfg.validate()?;
    let _lock = DirLock::acquire(&a.out)?;
    let models = a.out.join("models");
    fs::create_dir_all(&models).map_err(|e| io_err("fit", &models, e))?;
    let split = SplitSpec { mode: cfg.evaluation, test_fraction: cfg.test_fraction, seed: cfg.seed, n_edges: pairs.len() };
    let use_attrs = AttributeUse::from_features(&feats);
    for &learner in &cfg.learners {
        let encoding = if learner.is_forest() { bowtie::features::Encoding::Categorical } else { bowtie::features::Encoding::Dummies };
        let job = FitJob {
            learner,
            target: &target,
            design: use_attrs.design(cfg.feature_sets[0], encoding),
            split,
            seed: cfg.seed,
            n_trees: cfg.n_trees,
            cv_folds: cfg.cv_folds,
        };
        let mut file = fit_model(&job, &pairs, &feats)?;
        file.config_hash = Some(cfg.hash());
        let id = bowtie::pipeline::model_id(kind, cfg.feature_sets[0], learner);
        let path = models.join(format!("{id}.json"));
        file.save(&path).map_err(|e| io_err("fit", &path, e))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), PipelineError> {
    let file = ModelFile::load(&a.model_file).map_err(|e| {
        let class = if matches!(e, bowtie::learn::ModelFileError::Io(_)) { ErrorClass::Io } else { ErrorClass::Parse };
        PipelineError::new("evaluate", class, format!("{}: {e}", a.model_file.display()))
    })?;
    let meta = bowtie::pipeline::model_meta(&file)?;
    let (pairs, feats) = read_features(&a.features)?;
    let target_path = a.target_file.clone().unwrap_or_else(|| default_target_path(&a.features, meta.target));
    let target = read_target(&target_path, meta.target)?;
    let entry = evaluate_model(&file, &a.model_file.to_string_lossy(), &pairs, &feats, &target)?;
    let prov = format!("config_hash={} seed={}", file.config_hash.clone().unwrap_or_default(), file.seed);
    write_json("evaluate", &a.out, &serde_json::json!({ "provenance": prov, "entry": entry }))?;
    let within = entry.residuals.within.iter().map(|p| format!("{}:{:.3}", p.threshold, p.fraction)).collect::<Vec<_>>();
    println!("{}: {} rows, mean |residual| {:.4}, within {}", entry.id, entry.n_eval, entry.residuals.mean_abs, within.join(" "));
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), PipelineError> {
    let mut entries = Vec::new();
    for p in &a.evaluations {
        let text = fs::read_to_string(p).map_err(|e| io_err("report", p, e))?;
        let parse = |m: String| PipelineError::new("report", ErrorClass::Parse, format!("{}: {m}", p.display()));
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
        let entry: EvaluationEntry =
            serde_json::from_value(v.get("entry").cloned().unwrap_or(v)).map_err(|e| parse(e.to_string()))?;
        entries.push(entry);
    }
    let cfg = RunConfig { seed: a.seed, ..RunConfig::default() };
    let report = report_from_entries(cfg, entries);
    let _lock = DirLock::acquire(&a.out)?;
    for f in write_report(&report, &a.out)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn pipeline_config(a: &PipelineArgs) -> Result<RunConfig, PipelineError> {
    if let Some(p) = &a.config {
        let text = fs::read_to_string(p).map_err(|e| io_err("config", p, e))?;
        return serde_json::from_str(&text)
            .map_err(|e| PipelineError::new("config", ErrorClass::Parse, format!("{}: {e}", p.display())));
    }
    let dataset: DatasetKind = a.dataset.expect("clap requires dataset without config").into();
    let mut cfg = RunConfig::for_dataset(dataset);
    cfg.inputs = InputPaths {
        edges: a.edges.clone(),
        multiplex: a.multiplex.clone(),
        layers: a.layers.clone(),
        calls: a.calls.clone(),
        attributes: a.attributes.clone(),
    };
    cfg.seed = a.seed;
    if !a.model.is_empty() {
        cfg.feature_sets = a.model.iter().map(|&n| feature_set(n)).collect();
    }
    if !a.target.is_empty() {
        cfg.targets = a.target.iter().map(|&t| t.into()).collect();
    }
    if !a.learners.is_empty() {
        cfg.learners = a.learners.iter().map(|&l| l.into()).collect();
    }
    cfg.sample_edges = a.sample_edges;
    cfg.complete_case_only = a.complete_case_only;
    cfg.impute = !a.no_impute;
    cfg.single_orientation = a.single_orientation;
    if a.in_sample {
        cfg.evaluation = EvalMode::InSample;
    }
    if let Some(f) = a.test_fraction {
        cfg.test_fraction = f;
    }
    if let Some(t) = a.trees {
        cfg.n_trees = t;
    }
    if let Some(k) = a.cv_folds {
        cfg.cv_folds = k;
    }
    Ok(cfg)
}

fn cmd_pipeline(a: PipelineArgs) -> Result<(), PipelineError> {
    let cfg = pipeline_config(&a)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let out = a
        .out
        .as_ref()
        .ok_or_else(|| PipelineError::new("config", ErrorClass::Validation, "--out is required"))?;
    let run = run_pipeline(&cfg, out)?;
    println!("config_hash={} seed={}", run.report.config_hash, run.report.seed);
    for e in &run.report.entries {
        println!("{:<28} n_eval={:<7} mean|r|={:.4}", e.id, e.n_eval, e.residuals.mean_abs);
    }
    println!("report: {}", out.join("report.txt").display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), PipelineError> {
    fs::create_dir_all(&a.out).map_err(|e| io_err("synth", &a.out, e))?;
    let written = match a.kind {
        SynthKind::Village => {
            let mut p = VillageParams { missing: a.missing, ..VillageParams::default() };
            if let Some(n) = a.size {
                p.households = n;
            }
            synth::village(&p, a.seed).write(&a.out).map_err(|e| io_err("synth", &a.out, e))?;
            "multiplex.csv layers.csv attributes.csv"
        }
        SynthKind::Calls => {
            let mut p = CdrParams { missing_age: a.missing, missing_sex: a.missing, missing_zip: a.missing, ..CdrParams::default() };
            if let Some(n) = a.size {
                p.community.nodes = n;
            }
            synth::call_records(&p, a.seed).write(&a.out).map_err(|e| io_err("synth", &a.out, e))?;
            "calls.csv attributes.csv"
        }
        SynthKind::Graph => {
            let p = CommunityParams {
                nodes: a.size.unwrap_or(1000),
                community_size: 25,
                within_degree: 8.0,
                between_degree: 2.0,
            };
            let g = synth::hypothesis_network(&p, &Default::default(), a.seed);
            let path = a.out.join("edges.csv");
            synth::write_edge_list(&g, &path).map_err(|e| io_err("synth", &path, e))?;
            "edges.csv"
        }
    };
    println!("wrote {written} to {}", a.out.display());
    Ok(())
}
