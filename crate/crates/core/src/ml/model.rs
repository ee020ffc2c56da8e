use serde::{Deserialize, Serialize};

use super::ensemble::{AdaBoost, Forest, GradientBoosting};
use super::knn::Knn;
use super::linear::{LinearSvm, LogisticRegression};
use super::mlp::{Mlp, MlpEnsemble};
use super::naive_bayes::GaussianNb;
use super::tree::{DecisionTree, MaxFeatures, TreeParams};
use super::{argmax, Dataset, MlError};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    AdaBoost,
    RandomForest,
    Bagging,
    GradientBoosting,
    DecisionTree,
    #[serde(rename = "SVM")]
    Svm,
    #[serde(rename = "KNN")]
    Knn,
    #[serde(rename = "GaussianNB")]
    GaussianNb,
    LogisticRegression,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "MLPEnsemble")]
    MlpEnsemble,
}

impl ClassifierKind {
    pub const ALL: [Self; 11] = [
        Self::AdaBoost,
        Self::RandomForest,
        Self::Bagging,
        Self::GradientBoosting,
        Self::DecisionTree,
        Self::Svm,
        Self::Knn,
        Self::GaussianNb,
        Self::LogisticRegression,
        Self::Mlp,
        Self::MlpEnsemble,
    ];

    /// The nine kinds that are not neural networks.
    pub const CLASSICAL: [Self; 9] = [
        Self::AdaBoost,
        Self::RandomForest,
        Self::Bagging,
        Self::GradientBoosting,
        Self::DecisionTree,
        Self::Svm,
        Self::Knn,
        Self::GaussianNb,
        Self::LogisticRegression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AdaBoost => "AdaBoost",
            Self::RandomForest => "RandomForest",
            Self::Bagging => "Bagging",
            Self::GradientBoosting => "GradientBoosting",
            Self::DecisionTree => "DecisionTree",
            Self::Svm => "SVM",
            Self::Knn => "KNN",
            Self::GaussianNb => "GaussianNB",
            Self::LogisticRegression => "LogisticRegression",
            Self::Mlp => "MLP",
            Self::MlpEnsemble => "MLPEnsemble",
        }
    }

    /// Whether scores are class probabilities summing to 1.
    pub fn is_probabilistic(self) -> bool {
        !matches!(self, Self::Svm)
    }

    fn accepts(self, name: &str) -> bool {
        use ClassifierKind::*;
        match name {
            "n_estimators" => matches!(self, AdaBoost | RandomForest | Bagging | GradientBoosting),
            "max_depth" => matches!(self, RandomForest | Bagging | GradientBoosting | DecisionTree),
            "learning_rate" => matches!(self, AdaBoost | GradientBoosting | Svm | LogisticRegression | Mlp | MlpEnsemble),
            "epochs" | "l2" => matches!(self, Svm | LogisticRegression | Mlp | MlpEnsemble),
            "k" => self == Knn,
            "hidden_sizes" => matches!(self, Mlp | MlpEnsemble),
            "ensemble_size" => self == MlpEnsemble,
            _ => false,
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().to_ascii_lowercase() == norm)
            .ok_or_else(|| format!("unknown classifier kind {s:?}"))
    }
}

/// Optional overrides of the per-kind defaults. Setting a field the
/// kind does not use is an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_estimators: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

/// Hyperparameters after defaults are filled in.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Resolved {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub k: usize,
    pub hidden_sizes: Vec<usize>,
    pub ensemble_size: usize,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind, hyperparams: Hyperparams, seed: u64) -> Result<Self, MlError> {
        let spec = Self { kind, hyperparams, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec with all defaults.
    pub fn default_for(kind: ClassifierKind, seed: u64) -> Self {
        Self {
            kind,
            hyperparams: Hyperparams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), MlError> {
        self.resolve().map(|_| ())
    }

    pub(crate) fn resolve(&self) -> Result<Resolved, MlError> {
        use ClassifierKind::*;
        let kind = self.kind;
        let h = &self.hyperparams;
        let err = |name: &'static str, reason: &str| MlError::InvalidHyperparam {
            kind: kind.as_str(),
            name,
            reason: reason.to_string(),
        };
        let set: [(&'static str, bool); 8] = [
            ("n_estimators", h.n_estimators.is_some()),
            ("max_depth", h.max_depth.is_some()),
            ("learning_rate", h.learning_rate.is_some()),
            ("epochs", h.epochs.is_some()),
            ("l2", h.l2.is_some()),
            ("k", h.k.is_some()),
            ("hidden_sizes", h.hidden_sizes.is_some()),
            ("ensemble_size", h.ensemble_size.is_some()),
        ];
        for (name, present) in set {
            if present && !kind.accepts(name) {
                return Err(err(name, "not used by this classifier"));
            }
        }
        let positive = |name: &'static str, v: Option<usize>| match v {
            Some(0) => Err(err(name, "must be at least 1")),
            _ => Ok(v),
        };
        positive("n_estimators", h.n_estimators)?;
        positive("max_depth", h.max_depth)?;
        positive("epochs", h.epochs)?;
        positive("k", h.k)?;
        positive("ensemble_size", h.ensemble_size)?;
        if let Some(lr) = h.learning_rate {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(err("learning_rate", "must be a positive finite number"));
            }
        }
        if let Some(l2) = h.l2 {
            if !(l2.is_finite() && l2 >= 0.0) {
                return Err(err("l2", "must be a non-negative finite number"));
            }
        }
        if let Some(hs) = &h.hidden_sizes {
            if hs.is_empty() || hs.contains(&0) {
                return Err(err("hidden_sizes", "needs at least one layer, each of width at least 1"));
            }
        }

        let (n_estimators, max_depth, learning_rate, epochs, l2) = match kind {
            AdaBoost => (50, Some(1), 1.0, 0, 0.0),
            RandomForest => (100, None, 0.0, 0, 0.0),
            Bagging => (50, None, 0.0, 0, 0.0),
            GradientBoosting => (100, Some(2), 0.1, 0, 0.0),
            DecisionTree => (0, Some(5), 0.0, 0, 0.0),
            Svm => (0, None, 0.1, 1000, 1e-3),
            Knn | GaussianNb => (0, None, 0.0, 0, 0.0),
            LogisticRegression => (0, None, 0.5, 1000, 1e-4),
            Mlp | MlpEnsemble => (0, None, 0.1, 500, 0.0),
        };
        Ok(Resolved {
            n_estimators: h.n_estimators.unwrap_or(n_estimators),
            max_depth: h.max_depth.or(max_depth),
            learning_rate: h.learning_rate.unwrap_or(learning_rate),
            epochs: h.epochs.unwrap_or(epochs),
            l2: h.l2.unwrap_or(l2),
            k: h.k.unwrap_or(5),
            hidden_sizes: h.hidden_sizes.clone().unwrap_or_else(|| vec![16]),
            ensemble_size: h.ensemble_size.unwrap_or(5),
        })
    }
}

/// Learned parameters, tagged by family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    AdaBoost(AdaBoost),
    Forest(Forest),
    GradientBoosting(GradientBoosting),
    Tree(DecisionTree),
    Svm(LinearSvm),
    Knn(Knn),
    GaussianNb(GaussianNb),
    Logistic(LogisticRegression),
    Mlp(Mlp),
    MlpEnsemble(MlpEnsemble),
}

impl ModelParams {
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        match self {
            Self::AdaBoost(m) => m.scores(row),
            Self::Forest(m) => m.scores(row),
            Self::GradientBoosting(m) => m.scores(row),
            Self::Tree(m) => m.predict_proba(row),
            Self::Svm(m) => m.scores(row),
            Self::Knn(m) => m.scores(row),
            Self::GaussianNb(m) => m.scores(row),
            Self::Logistic(m) => m.scores(row),
            Self::Mlp(m) => m.scores(row),
            Self::MlpEnsemble(m) => m.scores(row),
        }
    }
}

/// Fits the classifier described by `spec` on the given rows. Every one
/// of `n_classes` classes must occur in `y`.
pub(crate) fn fit_params(spec: &ClassifierSpec, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<ModelParams, MlError> {
    use ClassifierKind::*;
    let r = spec.resolve()?;
    let mut present = vec![false; n_classes];
    for &c in y {
        present[c] = true;
    }
    let found = present.iter().filter(|p| **p).count();
    if found < n_classes || n_classes < 2 {
        return Err(MlError::MissingClass {
            present: found,
            expected: n_classes.max(2),
        });
    }
    let seed = SeedStream::new(spec.seed);
    let tree = |max_features| TreeParams {
        max_depth: r.max_depth,
        min_samples_split: 2,
        max_features,
    };
    Ok(match spec.kind {
        AdaBoost => ModelParams::AdaBoost(super::AdaBoost::fit(x, y, n_classes, r.n_estimators, r.learning_rate, seed)),
        RandomForest => ModelParams::Forest(Forest::fit(x, y, n_classes, r.n_estimators, &tree(MaxFeatures::Sqrt), seed)),
        Bagging => ModelParams::Forest(Forest::fit(x, y, n_classes, r.n_estimators, &tree(MaxFeatures::All), seed)),
        GradientBoosting => ModelParams::GradientBoosting(super::GradientBoosting::fit(
            x,
            y,
            n_classes,
            r.n_estimators,
            r.max_depth.unwrap_or(2),
            r.learning_rate,
            seed,
        )),
        DecisionTree => {
            let w = vec![1.0; x.len()];
            let mut rng = seed.derive("tree").rng();
            ModelParams::Tree(super::DecisionTree::fit_classifier(x, y, &w, n_classes, &tree(MaxFeatures::All), &mut rng))
        }
        Svm => ModelParams::Svm(LinearSvm::fit(x, y, n_classes, r.epochs, r.learning_rate, r.l2)),
        Knn => ModelParams::Knn(super::Knn::fit(x, y, n_classes, r.k)),
        GaussianNb => ModelParams::GaussianNb(super::GaussianNb::fit(x, y, n_classes)),
        LogisticRegression => ModelParams::Logistic(super::LogisticRegression::fit(x, y, n_classes, r.epochs, r.learning_rate, r.l2)),
        Mlp => ModelParams::Mlp(super::Mlp::fit(x, y, n_classes, &r.hidden_sizes, r.epochs, r.learning_rate, r.l2, seed)),
        MlpEnsemble => ModelParams::MlpEnsemble(super::MlpEnsemble::fit(
            x,
            y,
            n_classes,
            &r.hidden_sizes,
            r.epochs,
            r.learning_rate,
            r.l2,
            r.ensemble_size,
            spec.seed,
        )),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub class_names: Vec<String>,
    pub n_features: usize,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub label: String,
    pub scores: Vec<f64>,
}

/// Trains on every row of `dataset`. Inputs are used as given; callers
/// wanting standardization use [`super::fit_pipeline`].
pub fn train(spec: &ClassifierSpec, dataset: &Dataset) -> Result<TrainedModel, MlError> {
    spec.validate()?;
    dataset.validate()?;
    let params = fit_params(spec, &dataset.x, &dataset.y, dataset.n_classes())?;
    Ok(TrainedModel {
        spec: spec.clone(),
        class_names: dataset.class_names.clone(),
        n_features: dataset.n_features(),
        params,
    })
}

pub fn predict(model: &TrainedModel, x: &[f64]) -> Result<Prediction, MlError> {
    if x.len() != model.n_features {
        return Err(MlError::DimensionMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let scores = model.params.scores(x);
    let class = argmax(&scores);
    Ok(Prediction {
        class,
        label: model.class_names[class].clone(),
        scores,
    })
}
