//! Trained models and their on-disk form.
//!
//! A model file is a single JSON document:
//!
//! ```text
//! {
//!   "format": "bowtie-model",
//!   "version": 1,
//!   "seed": 42,
//!   "config_hash": "…",            // optional, set by the pipeline
//!   "hyperparameters": { … },       // free-form record of the fit settings
//!   "model": { "kind": "forest" | "linear", … }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so a reloaded model
//! predicts bit-for-bit what the original did.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::FeatureMatrix;
use super::forest::ForestModel;
use super::linear::LinearModel;
use super::LearnError;

pub const MODEL_FORMAT: &str = "bowtie-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Forest(ForestModel),
    Linear(LinearModel),
}

impl FittedModel {
    pub fn schema_names(&self) -> Vec<String> {
        match self {
            FittedModel::Forest(f) => f.schema_names(),
            FittedModel::Linear(l) => l.schema.clone(),
        }
    }

    /// Predictions on the raw predictor scale. Linear models apply their own
    /// standardization; inverting a response transform is left to the caller.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, LearnError> {
        match self {
            FittedModel::Forest(f) => f.predict(x),
            FittedModel::Linear(l) => l.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub hyperparameters: serde_json::Value,
    pub model: FittedModel,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a model file (format '{format}', version {version})")]
    Format { format: String, version: u32 },
}

impl ModelFile {
    pub fn new(model: FittedModel, seed: u64) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            seed,
            config_hash: None,
            hyperparameters: serde_json::Value::Null,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, ModelFileError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ModelFileError::Format { format: file.format, version: file.version });
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{fit_forest, fit_ols, fit_poisson, Dataset, Task};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..150)
            .map(|_| vec![rng.random::<f64>() * 3.0, rng.random::<f64>() - 0.5])
            .collect();
        let y = rows.iter().map(|r| (r[0] + 2.0 * r[1]).round().max(0.0)).collect();
        Dataset::from_rows(&["a", "b"], &rows, y).unwrap()
    }

    #[test]
    fn round_trip_reproduces_predictions() {
        let d = data(1);
        let models = vec![
            FittedModel::Forest(fit_forest(&d, Task::Classification, 4).unwrap()),
            FittedModel::Linear(fit_ols(&d.standardized().unwrap()).unwrap()),
            FittedModel::Linear(fit_poisson(&d).unwrap()),
        ];
        for model in models {
            let before = model.predict(&d.x).unwrap();
            let text = ModelFile::new(model, 4).to_json().unwrap();
            let loaded = ModelFile::from_json(&text).unwrap();
            let after = loaded.model.predict(&d.x).unwrap();
            assert_eq!(
                before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                after.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn rejects_foreign_documents() {
        let d = data(2);
        let mut file = ModelFile::new(FittedModel::Linear(fit_ols(&d).unwrap()), 0);
        file.version = 99;
        let text = serde_json::to_string(&file).unwrap();
        assert!(matches!(ModelFile::from_json(&text), Err(ModelFileError::Format { .. })));
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let d = data(3);
        let model = FittedModel::Linear(fit_ols(&d).unwrap());
        let other = Dataset::from_rows(&["a", "c"], &[vec![1.0, 2.0]], vec![0.0]).unwrap();
        assert!(matches!(model.predict(&other.x), Err(LearnError::SchemaMismatch { .. })));
    }
}
