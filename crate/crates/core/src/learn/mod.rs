//! Estimators for tie-strength models: CART random forests, OLS, Poisson
//! regression by IRLS, LASSO by coordinate descent, ridge, and k-fold
//! cross-validation of the penalty.

pub mod cv;
pub mod dataset;
pub mod forest;
pub mod linear;
pub mod model;

use thiserror::Error;

pub use cv::{cross_validate, fold_assignment, log_grid, CvResult, Penalty, DEFAULT_FOLDS};
pub use dataset::{Column, ColumnKind, Dataset, FeatureMatrix, Standardization};
pub use forest::{fit_forest, fit_forest_with, ForestModel, ForestParams, MaxFeatures, Task, DEFAULT_TREES};
pub use linear::{
    aliased_columns, fit_lasso, fit_lasso_with, fit_ols, fit_poisson, fit_ridge, soft_threshold, Family, LinearDiagnostics,
    LinearModel,
};
pub use model::{FittedModel, ModelFile, ModelFileError, MODEL_FORMAT, MODEL_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in row {row}, column {column}")]
    NonFinite { row: usize, column: String },
    #[error("schema mismatch: missing columns {missing:?}, unexpected columns {unexpected:?}")]
    SchemaMismatch { missing: Vec<String>, unexpected: Vec<String> },
    #[error("design is rank deficient; linearly dependent columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("need more rows than parameters: {rows} rows for {params} parameters")]
    TooFewRows { rows: usize, params: usize },
    #[error("LASSO requires standardized predictors")]
    NotStandardized,
    #[error("penalty must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("invalid response: {0}")]
    InvalidTarget(String),
    #[error("solver diverged at iteration {iteration}; deviance trace {trace:?}")]
    Diverged { iteration: usize, trace: Vec<f64> },
    #[error("solver did not converge in {iterations} iterations; trace {trace:?}")]
    NotConverged { iterations: usize, trace: Vec<f64> },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("penalty grid is empty")]
    EmptyGrid,
    #[error("{rows} rows cannot be split into {folds} folds")]
    TooFewRowsForFolds { rows: usize, folds: usize },
}
