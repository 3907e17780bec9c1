//! Success classifier and the models it is compared against.

mod baselines;
mod forest;
mod metrics;
mod search;

use thiserror::Error;

pub use baselines::{Baseline, BaselineKind, BaselineParams, GaussianNb, Knn, Logistic};
pub use forest::{gini, ForestHyperparams, MaxFeatures, Node, RandomForest, Tree, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use metrics::{
    auc_rank, evaluate, evaluate_scores, midranks, roc_curve, trapezoid, Classifier, ConfusionCounts, Evaluation,
    RocCurve,
};
pub use search::{hyperparameter_search, SearchResult, SearchSpace, Trial};

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data is empty")]
    Empty,
    #[error("training data holds a single class")]
    SingleClass,
    #[error("row has {found} features, model expects {expected}")]
    RowLength { expected: usize, found: usize },
    #[error("feature schema {found} does not match the model's {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file format version {found:?}, expected {expected}")]
    VersionMismatch { found: Option<u64>, expected: u32 },
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(std::io::Error),
}

/// Fixed-score predictor, handy for exercising the gate at its extremes.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub f64);

impl<F: Scalar> Classifier<F> for ConstantPredictor {
    fn predict_proba(&self, _row: &[F]) -> F {
        F::of(self.0)
    }
}
