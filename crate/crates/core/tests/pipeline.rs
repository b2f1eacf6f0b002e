use std::fs;
use std::path::Path;

use bowtie::eval::{EvalMode, Learner};
use bowtie::features::FeatureSet;
use bowtie::pipeline::{run_pipeline, DatasetKind, ErrorClass, RunConfig};
use bowtie::strength::TargetKind;
use bowtie::synth::{call_records, village, CdrParams, VillageParams};

fn village_config(dir: &Path, seed: u64) -> RunConfig {
    let v = village(&VillageParams { households: 80, missing: 0.1, ..VillageParams::default() }, seed);
    v.write(dir).unwrap();
    let mut cfg = RunConfig::for_dataset(DatasetKind::Multiplex);
    cfg.inputs.multiplex = Some(dir.join("multiplex.csv"));
    cfg.inputs.layers = Some(dir.join("layers.csv"));
    cfg.inputs.attributes = Some(dir.join("attributes.csv"));
    cfg.seed = seed;
    cfg.n_trees = 30;
    cfg
}

fn cdr_config(dir: &Path, seed: u64) -> RunConfig {
    let mut p = CdrParams::default();
    p.community.nodes = 240;
    call_records(&p, seed).write(dir).unwrap();
    let mut cfg = RunConfig::for_dataset(DatasetKind::Cdr);
    cfg.inputs.calls = Some(dir.join("calls.csv"));
    cfg.inputs.attributes = Some(dir.join("attributes.csv"));
    cfg.seed = seed;
    cfg.n_trees = 20;
    cfg
}

#[test]
fn multiplex_run_writes_every_artifact() {
    let inputs = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = village_config(inputs.path(), 3);
    cfg.feature_sets = vec![FeatureSet::Model1, FeatureSet::Model2, FeatureSet::Model3];
    let run = run_pipeline(&cfg, out.path()).unwrap();
    assert_eq!(run.report.entries.len(), 9);
    for name in ["graph.csv", "nodemap.csv", "features.csv", "features.schema.json", "target_w.csv", "report.json", "report.txt", "timing.json", "plots/accuracy.svg", "imputation_report.json"] {
        assert!(out.path().join(name).exists(), "{name} missing");
    }
    assert!(!out.path().join(".bowtie.lock").exists());
    let text = fs::read_to_string(out.path().join("report.txt")).unwrap();
    let section = |id: &str| {
        let start = text.find(&format!("[model {id}]")).unwrap();
        let rest = &text[start + 1..];
        rest[..rest.find("\n[").unwrap_or(rest.len())].to_string()
    };
    for l in ["forest_reg", "forest_clf", "poisson"] {
        let m2 = section(&format!("w_model2_{l}"));
        assert!(!m2.lines().any(|line| line.trim_start().starts_with("wo ")), "{m2}");
        let m3 = section(&format!("w_model3_{l}"));
        assert!(!m3.lines().any(|line| line.trim_start().starts_with("o ")), "{m3}");
    }
    let features = fs::read_to_string(out.path().join("features.csv")).unwrap();
    assert!(features.starts_with(&format!("# config_hash={}", run.report.config_hash)));
}

#[test]
fn cdr_run_fits_regularized_models() {
    let inputs = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = cdr_config(inputs.path(), 5);
    cfg.cv_folds = 5;
    let run = run_pipeline(&cfg, out.path()).unwrap();
    assert_eq!(run.report.entries.len(), 24);
    for e in &run.report.entries {
        assert!(e.n_eval > 0 && e.n_train > 0);
        if matches!(e.learner, Learner::Lasso | Learner::Ridge) {
            assert!(e.lambda.is_some() && e.cv.is_some());
        }
        let last = e.curve.last().unwrap();
        assert_eq!(last.fraction, 1.0);
    }
    let y = run.report.entries.iter().find(|e| e.target == TargetKind::NormalizedY).unwrap();
    let z = run.report.entries.iter().find(|e| e.target == TargetKind::AveragedZ).unwrap();
    assert!(y.n_eval + y.n_train == 2 * (z.n_eval + z.n_train));
}

#[test]
fn identical_runs_are_byte_identical() {
    let inputs = tempfile::tempdir().unwrap();
    let mut cfg = cdr_config(inputs.path(), 11);
    cfg.learners = vec![Learner::ForestReg, Learner::Lasso];
    cfg.targets = vec![TargetKind::AveragedZ];
    cfg.cv_folds = 3;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, a.path()).unwrap();
    run_pipeline(&cfg, b.path()).unwrap();
    let mut names = Vec::new();
    collect(a.path(), a.path(), &mut names);
    assert!(names.len() > 10);
    for n in names.iter().filter(|n| *n != "timing.json") {
        assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap(), "{n} differs");
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().into_owned());
        }
    }
}

#[test]
fn complete_case_and_in_sample_modes() {
    let inputs = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = village_config(inputs.path(), 8);
    cfg.complete_case_only = true;
    cfg.evaluation = EvalMode::InSample;
    cfg.learners = vec![Learner::Poisson];
    let run = run_pipeline(&cfg, out.path()).unwrap();
    assert!(run.report.imputation.is_none());
    assert_eq!(run.report.modeled_edges, Some(run.report.entries[0].n_eval));
    assert_eq!(run.report.entries[0].n_train, run.report.entries[0].n_eval);
}

#[test]
fn invalid_config_is_a_validation_error() {
    let mut cfg = RunConfig::for_dataset(DatasetKind::Cdr);
    cfg.inputs.calls = Some("missing.csv".into());
    cfg.learners = vec![Learner::Poisson];
    let out = tempfile::tempdir().unwrap();
    let e = run_pipeline(&cfg, out.path()).unwrap_err();
    assert_eq!(e.class, ErrorClass::Validation);
    assert_eq!(e.exit_code(), 3);

    cfg.learners = vec![Learner::Ols];
    let e = run_pipeline(&cfg, out.path()).unwrap_err();
    assert_eq!(e.class, ErrorClass::Io);
}
