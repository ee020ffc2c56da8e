//! Dataset assembly, dimensionality reduction, classifiers and
//! leave-one-subject-out evaluation.
//!
//! Every classifier is implemented here from first principles and is
//! deterministic given its [`ClassifierSpec`] seed.

mod dataset;
mod ensemble;
mod eval;
mod experiment;
mod gradcheck;
mod knn;
mod linear;
mod mlp;
mod model;
mod naive_bayes;
mod reduce;
mod tree;

use thiserror::Error;

pub use dataset::{build_dataset, session_rows, Dataset, DatasetOptions, Representation, Standardizer};
pub use ensemble::{AdaBoost, Forest, GradientBoosting};
pub use eval::{
    fit_pipeline, loso_evaluate, EvalMode, EvalOptions, EvalReport, FoldResult, Pipeline, RowPrediction,
    SkippedFold,
};
pub use experiment::{predict_sessions, run_experiment, ExperimentRequest, ExperimentResult, ProjectedRow, SessionPrediction};
pub use gradcheck::{gradient_check, GradientCheck};
pub use knn::Knn;
pub use linear::{LinearSvm, LogisticRegression};
pub use mlp::{Mlp, MlpEnsemble};
pub use model::{predict, train, ClassifierKind, ClassifierSpec, Hyperparams, ModelParams, Prediction, TrainedModel};
pub use naive_bayes::GaussianNb;
pub use reduce::{lda_fit, pca_fit, Lda, Pca, Reducer, ReducerKind, ReducerSpec};
pub use tree::{DecisionTree, MaxFeatures, TreeParams};

use crate::features::FeatureError;

#[derive(Debug, Error, PartialEq)]
pub enum MlError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("participant {0:?} has no class label")]
    Unlabeled(String),
    #[error("label {0:?} is not one of the class names")]
    UnknownLabel(String),
    #[error("window of {window} samples is longer than session {session:?} ({len} samples)")]
    WindowTooLong { session: String, window: usize, len: usize },
    #[error("invalid dataset options: {0}")]
    InvalidOptions(String),
    #[error("{kind}: invalid hyperparameter {name}: {reason}")]
    InvalidHyperparam {
        kind: &'static str,
        name: &'static str,
        reason: String,
    },
    #[error("training data must contain every class; found {present} of {expected}")]
    MissingClass { present: usize, expected: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{requested} components requested; allowed 1..={max}")]
    ComponentsOutOfRange { requested: usize, max: usize },
    #[error("at least 2 subjects required, found {0}")]
    TooFewSubjects(usize),
    #[error("gradient check supports at most 32 rows, got {0}")]
    TooManyRows(usize),
    #[error("gradient check is not defined for {0}")]
    NotDifferentiable(&'static str),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Index of the largest score; ties go to the lower index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
