use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    build_dataset, fit_pipeline, session_rows, loso_evaluate, ClassifierSpec, DatasetOptions, EvalOptions, EvalReport, MlError, Pipeline,
    ReducerKind, ReducerSpec, Representation,
};
use crate::model::RecordingSession;

/// Everything needed to train and cross-validate one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRequest {
    pub spec: ClassifierSpec,
    #[serde(default = "default_representation")]
    pub representation: Representation,
    #[serde(default)]
    pub reducer: Option<ReducerSpec>,
    #[serde(default)]
    pub options: DatasetOptions,
    #[serde(default)]
    pub eval: EvalOptions,
}

fn default_representation() -> Representation {
    Representation::ClinicalFeatures
}

impl ExperimentRequest {
    pub fn new(spec: ClassifierSpec, representation: Representation) -> Self {
        Self {
            spec,
            representation,
            reducer: None,
            options: DatasetOptions::default(),
            eval: EvalOptions::default(),
        }
    }
}

/// One dataset row in reduced coordinates, for scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRow {
    pub subject_id: String,
    pub group_id: String,
    pub label: String,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub report: EvalReport,
    /// Pipeline refitted on every row.
    pub model: Pipeline,
    /// Present when a reducer is part of the pipeline.
    pub projection: Option<Vec<ProjectedRow>>,
}

/// Builds the dataset, runs cross-validation and fits a final pipeline on
/// all rows.
///
/// `Reduced` means clinical features passed through a reducer; without an
/// explicit reducer it uses LDA with C − 1 components.
pub fn run_experiment(
    sessions: &[RecordingSession],
    labels: &BTreeMap<String, String>,
    class_names: &[String],
    req: &ExperimentRequest,
) -> Result<ExperimentResult, MlError> {
    req.spec.validate()?;
    let base = match req.representation {
        Representation::Reduced => Representation::ClinicalFeatures,
        other => other,
    };
    let ds = build_dataset(sessions, labels, class_names, base, &req.options)?;
    let reducer = match (req.representation, req.reducer) {
        (_, Some(r)) => Some(r),
        (Representation::Reduced, None) => Some(ReducerSpec {
            kind: ReducerKind::Lda,
            n_components: (ds.n_classes() - 1).min(ds.n_features()).max(1),
        }),
        _ => None,
    };
    let mut report = loso_evaluate(&req.spec, &ds, reducer.as_ref(), &req.eval)?;
    if reducer.is_some() && req.representation == Representation::Reduced {
        report.representation = Representation::Reduced;
    }
    let all: Vec<usize> = (0..ds.n_rows()).collect();
    let model = fit_pipeline(&req.spec, reducer.as_ref(), &ds, &all)?;
    let projection = match &model.reducer {
        Some(r) => {
            let mut rows = Vec::with_capacity(ds.n_rows());
            for i in 0..ds.n_rows() {
                let x = match &model.scaler {
                    Some(s) => s.transform_row(&ds.x[i]),
                    None => ds.x[i].clone(),
                };
                rows.push(ProjectedRow {
                    subject_id: ds.subject_ids[i].clone(),
                    group_id: ds.group_ids[i].clone(),
                    label: ds.class_names[ds.y[i]].clone(),
                    coords: r.transform_row(&x)?,
                });
            }
            Some(rows)
        }
        None => None,
    };
    Ok(ExperimentResult {
        report,
        model,
        projection,
    })
}

/// Model output for one session; raw-window models vote over windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPrediction {
    pub session_id: String,
    pub participant_id: String,
    pub predicted: String,
    /// Rows voting for each class, in the model's class order.
    pub votes: Vec<usize>,
}

/// Applies a fitted pipeline to whole sessions, building rows the same way
/// `req` did at training time.
pub fn predict_sessions(
    model: &Pipeline,
    req: &ExperimentRequest,
    sessions: &[RecordingSession],
) -> Result<Vec<SessionPrediction>, MlError> {
    let base = match req.representation {
        Representation::Reduced => Representation::ClinicalFeatures,
        other => other,
    };
    let class_names = &model.model.class_names;
    let mut out = Vec::with_capacity(sessions.len());
    for s in sessions {
        let mut votes = vec![0usize; class_names.len()];
        for row in &session_rows(s, base, &req.options)? {
            votes[model.predict_row(row)?.class] += 1;
        }
        let best = votes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i);
        out.push(SessionPrediction {
            session_id: s.id.clone(),
            participant_id: s.participant_id.clone(),
            predicted: class_names[best].clone(),
            votes,
        });
    }
    Ok(out)
}
