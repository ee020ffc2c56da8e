use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::fit_params;
use super::{argmax, predict, ClassifierSpec, Dataset, MlError, Prediction, Reducer, ReducerSpec, Representation, Standardizer, TrainedModel};

/// Standardization, optional reduction and a classifier, all fitted on
/// the same training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    /// Absent for raw windows, which are mean-removed per window instead.
    pub scaler: Option<Standardizer>,
    pub reducer: Option<Reducer>,
    pub model: TrainedModel,
}

impl Pipeline {
    pub fn input_dim(&self) -> usize {
        match (&self.scaler, &self.reducer) {
            (Some(s), _) => s.mean.len(),
            (None, Some(r)) => r.input_dim(),
            (None, None) => self.model.n_features,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Prediction, MlError> {
        if row.len() != self.input_dim() {
            return Err(MlError::DimensionMismatch {
                expected: self.input_dim(),
                got: row.len(),
            });
        }
        let mut v = match &self.scaler {
            Some(s) => s.transform_row(row),
            None => row.to_vec(),
        };
        if let Some(r) = &self.reducer {
            v = r.transform_row(&v)?;
        }
        predict(&self.model, &v)
    }
}

/// Fits a pipeline on the rows `rows` of `dataset` only.
pub fn fit_pipeline(
    spec: &ClassifierSpec,
    reducer: Option<&ReducerSpec>,
    dataset: &Dataset,
    rows: &[usize],
) -> Result<Pipeline, MlError> {
    let (mut x, y) = dataset.rows(rows);
    let n_classes = dataset.n_classes();
    let scaler = (dataset.representation != Representation::RawWindows).then(|| Standardizer::fit(&x));
    if let Some(s) = &scaler {
        x = s.transform(&x);
    }
    let reducer = match reducer {
        Some(rs) => {
            let mut present = vec![false; n_classes];
            y.iter().for_each(|&c| present[c] = true);
            let found = present.iter().filter(|p| **p).count();
            if found < n_classes {
                return Err(MlError::MissingClass {
                    present: found,
                    expected: n_classes,
                });
            }
            let r = Reducer::fit(rs, &x, &y, n_classes)?;
            x = r.transform(&x)?;
            Some(r)
        }
        None => None,
    };
    let params = fit_params(spec, &x, &y, n_classes)?;
    Ok(Pipeline {
        scaler,
        reducer,
        model: TrainedModel {
            spec: spec.clone(),
            class_names: dataset.class_names.clone(),
            n_features: x.first().map_or(0, Vec::len),
            params,
        },
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Each fold holds out every row of one subject.
    #[default]
    LeaveOneSubjectOut,
    /// Each fold holds out a single row.
    LeaveOneRowOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub mode: EvalMode,
    /// Fit folds concurrently. Results are identical either way.
    pub parallel: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::LeaveOneSubjectOut,
            parallel: true,
        }
    }
}

/// One evaluated unit: a row, or a whole session when rows are windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowPrediction {
    pub subject_id: String,
    pub group_id: String,
    pub truth: usize,
    pub predicted: usize,
    /// Dataset rows behind this prediction.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Held-out subject id, or the held-out row index in row mode.
    pub held_out: String,
    pub n_train_rows: usize,
    /// Column statistics fitted on this fold's training rows.
    pub scaler: Option<Standardizer>,
    pub predictions: Vec<RowPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub fold: usize,
    pub held_out: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec: ClassifierSpec,
    pub reducer: Option<ReducerSpec>,
    pub mode: EvalMode,
    pub representation: Representation,
    pub class_names: Vec<String>,
    pub n_folds: usize,
    /// Number of evaluated units; the confusion matrix sums to this.
    pub n: usize,
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub folds: Vec<FoldResult>,
    pub skipped: Vec<SkippedFold>,
}

impl EvalReport {
    pub fn predictions(&self) -> impl Iterator<Item = &RowPrediction> {
        self.folds.iter().flat_map(|f| &f.predictions)
    }
}

enum FoldOutcome {
    Done(FoldResult),
    Skipped(SkippedFold),
}

fn run_fold(
    spec: &ClassifierSpec,
    reducer: Option<&ReducerSpec>,
    ds: &Dataset,
    fold: usize,
    held_out: &str,
    test: &[usize],
) -> Result<FoldOutcome, MlError> {
    let train: Vec<usize> = (0..ds.n_rows()).filter(|i| !test.contains(i)).collect();
    let pipe = match fit_pipeline(spec, reducer, ds, &train) {
        Ok(p) => p,
        Err(MlError::MissingClass { present, expected }) => {
            return Ok(FoldOutcome::Skipped(SkippedFold {
                fold,
                held_out: held_out.to_string(),
                reason: format!("training rows cover {present} of {expected} classes"),
            }))
        }
        Err(e) => return Err(e),
    };
    let row_preds: Vec<(usize, usize)> = test
        .iter()
        .map(|&i| pipe.predict_row(&ds.x[i]).map(|p| (i, p.class)))
        .collect::<Result<_, _>>()?;

    let predictions = if ds.representation == Representation::RawWindows {
        // Majority over each session's windows; ties go to the lower class.
        let mut groups: Vec<&str> = Vec::new();
        for &i in test {
            if !groups.contains(&ds.group_ids[i].as_str()) {
                groups.push(&ds.group_ids[i]);
            }
        }
        groups
            .into_iter()
            .map(|g| {
                let mut votes = vec![0.0; ds.n_classes()];
                let mut rows = Vec::new();
                for &(i, c) in &row_preds {
                    if ds.group_ids[i] == g {
                        votes[c] += 1.0;
                        rows.push(i);
                    }
                }
                RowPrediction {
                    subject_id: ds.subject_ids[rows[0]].clone(),
                    group_id: g.to_string(),
                    truth: ds.y[rows[0]],
                    predicted: argmax(&votes),
                    rows,
                }
            })
            .collect()
    } else {
        row_preds
            .into_iter()
            .map(|(i, c)| RowPrediction {
                subject_id: ds.subject_ids[i].clone(),
                group_id: ds.group_ids[i].clone(),
                truth: ds.y[i],
                predicted: c,
                rows: vec![i],
            })
            .collect()
    };
    Ok(FoldOutcome::Done(FoldResult {
        fold,
        held_out: held_out.to_string(),
        n_train_rows: train.len(),
        scaler: pipe.scaler,
        predictions,
    }))
}

/// Cross-validates `spec` on `dataset`. Every preprocessing step is fitted
/// inside each fold on the training rows only.
pub fn loso_evaluate(
    spec: &ClassifierSpec,
    dataset: &Dataset,
    reducer: Option<&ReducerSpec>,
    opts: &EvalOptions,
) -> Result<EvalReport, MlError> {
    spec.validate()?;
    dataset.validate()?;
    let folds: Vec<(String, Vec<usize>)> = match opts.mode {
        EvalMode::LeaveOneSubjectOut => {
            let subjects = dataset.subjects();
            if subjects.len() < 2 {
                return Err(MlError::TooFewSubjects(subjects.len()));
            }
            subjects
                .into_iter()
                .map(|s| {
                    let rows = (0..dataset.n_rows()).filter(|&i| dataset.subject_ids[i] == s).collect();
                    (s, rows)
                })
                .collect()
        }
        EvalMode::LeaveOneRowOut => (0..dataset.n_rows()).map(|i| (i.to_string(), vec![i])).collect(),
    };

    let run = |(fold, (held, rows)): (usize, &(String, Vec<usize>))| run_fold(spec, reducer, dataset, fold, held, rows);
    let outcomes: Vec<FoldOutcome> = if opts.parallel {
        folds.par_iter().enumerate().map(run).collect::<Result<_, _>>()?
    } else {
        folds.iter().enumerate().map(run).collect::<Result<_, _>>()?
    };

    let k = dataset.n_classes();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            FoldOutcome::Done(f) => {
                for p in &f.predictions {
                    confusion[p.truth][p.predicted] += 1;
                }
                done.push(f);
            }
            FoldOutcome::Skipped(s) => skipped.push(s),
        }
    }
    let n: usize = confusion.iter().flatten().sum();
    if n == 0 {
        return Err(MlError::InvalidDataset("every fold was skipped".into()));
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        spec: spec.clone(),
        reducer: reducer.copied(),
        mode: opts.mode,
        representation: dataset.representation,
        class_names: dataset.class_names.clone(),
        n_folds: folds.len(),
        n,
        accuracy: correct as f64 / n as f64,
        confusion,
        folds: done,
        skipped,
    })
}
