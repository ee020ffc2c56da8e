//! Commands that work directly on the data directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use gaitway_core::features::{extract_features, FeatureConfig};
use gaitway_core::ml::{
    predict_sessions, run_experiment, ClassifierSpec, EvalMode, EvalOptions, EvalReport, ExperimentRequest, Pipeline,
    ProjectedRow, ReducerKind, ReducerSpec, Representation, SessionPrediction,
};
use gaitway_core::model::{RecordingSession, FEATURE_NAMES};
use gaitway_core::signal::{build_dashboard, overlay as overlay_sessions, DashboardConfig};
use gaitway_core::store::{list_sessions, load_session, track_to_csv};
use gaitway_server::storage::{load_participants, load_projects};
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::{runtime, CliError, Output};

fn project_dirs(root: &Path) -> Vec<String> {
    let mut out: Vec<String> = fs::read_dir(root)
        .map(|d| {
            d.flatten()
                .filter(|e| e.path().is_dir())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

/// `--project`, or the only project in the data directory.
fn project(s: &Settings) -> Result<String, CliError> {
    if let Some(p) = &s.project {
        return Ok(p.clone());
    }
    match project_dirs(&s.data_dir).as_slice() {
        [only] => Ok(only.clone()),
        [] => Err(CliError::Runtime(format!("no projects under {}", s.data_dir.display()))),
        _ => Err(CliError::Usage("several projects found; pass --project".into())),
    }
}

fn find_session(s: &Settings, id: &str) -> Result<RecordingSession, CliError> {
    let candidates = match &s.project {
        Some(p) => vec![p.clone()],
        None => project_dirs(&s.data_dir),
    };
    for p in &candidates {
        if s.data_dir.join(p).join(id).is_dir() {
            return load_session(&s.data_dir, p, id).map_err(runtime);
        }
    }
    Err(CliError::Runtime(format!("session {id} not found under {}", s.data_dir.display())))
}

fn feature_config(s: &Settings, project: &str) -> FeatureConfig {
    let k = load_projects(&s.data_dir)
        .ok()
        .and_then(|ps| ps.into_iter().find(|p| p.id == project))
        .and_then(|p| p.step_length_k);
    match k {
        Some(k) => FeatureConfig::default().with_k(k),
        None => FeatureConfig::default(),
    }
}

fn write_or_print<T: Serialize>(out: &Output, path: Option<&Path>, value: &T, human: impl FnOnce() -> String) -> Result<(), CliError> {
    match path {
        Some(p) => {
            fs::write(p, serde_json::to_vec_pretty(value).map_err(runtime)?).map_err(runtime)?;
            let written = serde_json::json!({ "written": p });
            out.emit(&written, || format!("wrote {}", p.display()))
        }
        None => out.emit(value, human),
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub session: String,
    /// Analysis window START:END in seconds.
    #[arg(long, conflicts_with = "activity")]
    pub segment: Option<String>,
    /// Use the first segment annotated with this activity.
    #[arg(long)]
    pub activity: Option<String>,
}

fn parse_segment(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--segment expects START:END, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn extract(s: &Settings, out: &Output, a: &ExtractArgs) -> Result<(), CliError> {
    let session = find_session(s, &a.session)?;
    let segment = match (&a.segment, &a.activity) {
        (Some(seg), _) => Some(parse_segment(seg)?),
        (None, Some(act)) => {
            let seg = session
                .segment_named(act)
                .ok_or_else(|| CliError::Runtime(format!("session has no {act:?} segment")))?;
            Some((seg.start_s, seg.end_s))
        }
        (None, None) => None,
    };
    let fv = extract_features(&session, segment, &feature_config(s, &session.project_id)).map_err(runtime)?;
    out.emit(&fv, || {
        FEATURE_NAMES
            .iter()
            .zip(fv.as_row())
            .map(|(name, v)| format!("{name:<20} {v:.6}"))
            .collect::<Vec<_>>()
            .join("\n")
    })
}

#[derive(Debug, Args)]
pub struct DashboardArgs {
    #[arg(long)]
    pub session: String,
    /// Write the bundle JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn dashboard(s: &Settings, out: &Output, a: &DashboardArgs) -> Result<(), CliError> {
    let session = find_session(s, &a.session)?;
    let cfg = DashboardConfig {
        features: feature_config(s, &session.project_id),
        ..DashboardConfig::default()
    };
    let bundle = build_dashboard(&session, &cfg).map_err(runtime)?;
    write_or_print(out, a.out.as_deref(), &bundle, || Output::pretty(&bundle))
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    /// Lag of b relative to a in seconds; estimated when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub lag: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn overlay(s: &Settings, out: &Output, a: &OverlayArgs) -> Result<(), CliError> {
    let sa = find_session(s, &a.a)?;
    let sb = find_session(s, &a.b)?;
    let ov = overlay_sessions(&sa, &sb, a.lag, &feature_config(s, &sa.project_id)).map_err(runtime)?;
    write_or_print(out, a.out.as_deref(), &ov, || {
        format!(
            "{} vs {}: {} aligned pairs at {} Hz, lag {:.3} s{}",
            ov.session_a,
            ov.session_b,
            ov.t.len(),
            ov.rate_hz,
            ov.lag_s,
            ov.correlation.map(|c| format!(", correlation {c:.3}")).unwrap_or_default()
        )
    })
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Classifier spec JSON: {"kind": ..., "hyperparams": {...}, "seed": n}.
    #[arg(long)]
    pub spec: PathBuf,
    /// features, raw or reduced.
    #[arg(long, default_value = "features")]
    pub representation: Representation,
    /// pca or lda; reduced representations default to LDA with C − 1 components.
    #[arg(long)]
    pub reducer: Option<ReducerKind>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Raw window length in seconds.
    #[arg(long)]
    pub window: Option<f64>,
    /// Raw window stride in seconds.
    #[arg(long)]
    pub stride: Option<f64>,
    /// Hold out single rows instead of subjects.
    #[arg(long)]
    pub leave_one_row_out: bool,
    /// Evaluate folds one at a time.
    #[arg(long)]
    pub serial: bool,
    /// Restrict to these session ids.
    #[arg(long = "session")]
    pub sessions: Vec<String>,
    /// Write the trained model artifact here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What `train --out` writes and `evaluate --model` reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub project_id: String,
    pub request: ExperimentRequest,
    pub sessions: Vec<String>,
    pub report: EvalReport,
    pub model: Pipeline,
    pub projection: Option<Vec<ProjectedRow>>,
}

fn labeled_sessions(s: &Settings, project: &str, ids: &[String]) -> Result<(Vec<RecordingSession>, BTreeMap<String, String>), CliError> {
    let labels: BTreeMap<String, String> = load_participants(&s.data_dir, project)
        .map_err(runtime)?
        .into_values()
        .filter_map(|p| p.class_label.map(|l| (p.id, l)))
        .collect();
    let ids = if ids.is_empty() {
        list_sessions(&s.data_dir, project).map_err(runtime)?
    } else {
        ids.to_vec()
    };
    let mut sessions = Vec::new();
    for id in ids {
        let session = load_session(&s.data_dir, project, &id).map_err(runtime)?;
        if labels.contains_key(&session.participant_id) {
            sessions.push(session);
        }
    }
    Ok((sessions, labels))
}

fn class_names(s: &Settings, project: &str, labels: &BTreeMap<String, String>) -> Vec<String> {
    let set = load_projects(&s.data_dir)
        .ok()
        .and_then(|ps| ps.into_iter().find(|p| p.id == project))
        .map(|p| p.label_set)
        .unwrap_or_default();
    if !set.is_empty() {
        return set;
    }
    let mut c: Vec<String> = labels.values().cloned().collect();
    c.sort();
    c.dedup();
    c
}

pub fn train(s: &Settings, out: &Output, a: &TrainArgs) -> Result<(), CliError> {
    let body = fs::read(&a.spec).map_err(|e| CliError::Runtime(format!("{}: {e}", a.spec.display())))?;
    let mut spec: ClassifierSpec = serde_json::from_slice(&body).map_err(|e| CliError::Usage(format!("{}: {e}", a.spec.display())))?;
    if s.seed_given {
        spec.seed = s.seed;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let project = project(s)?;
    let reducer = match (a.reducer, a.components) {
        (Some(kind), Some(n)) => Some(ReducerSpec { kind, n_components: n }),
        (Some(ReducerKind::Pca), None) => Some(ReducerSpec {
            kind: ReducerKind::Pca,
            n_components: 2,
        }),
        (Some(ReducerKind::Lda), None) | (None, None) => None,
        (None, Some(_)) => return Err(CliError::Usage("--components needs --reducer".into())),
    };
    let representation = match (a.representation, a.reducer) {
        (Representation::ClinicalFeatures, Some(_)) => Representation::Reduced,
        (r, _) => r,
    };
    let mut request = ExperimentRequest::new(spec, representation);
    request.reducer = reducer;
    request.options.window_s = a.window;
    request.options.stride_s = a.stride;
    request.options.features = feature_config(s, &project);
    request.eval = EvalOptions {
        mode: if a.leave_one_row_out { EvalMode::LeaveOneRowOut } else { EvalMode::LeaveOneSubjectOut },
        parallel: !a.serial,
    };
    let (sessions, labels) = labeled_sessions(s, &project, &a.sessions)?;
    let classes = class_names(s, &project, &labels);
    let result = run_experiment(&sessions, &labels, &classes, &request).map_err(runtime)?;
    let report = result.report.clone();
    if let Some(path) = &a.out {
        let artifact = ModelArtifact {
            project_id: project.clone(),
            request,
            sessions: sessions.iter().map(|x| x.id.clone()).collect(),
            report: result.report,
            model: result.model,
            projection: result.projection,
        };
        fs::write(path, serde_json::to_vec_pretty(&artifact).map_err(runtime)?).map_err(runtime)?;
    }
    out.emit(&report, || {
        let mut text = format!(
            "{} on {:?}: accuracy {:.4} over {} units in {} folds",
            report.spec.kind.as_str(),
            report.representation,
            report.accuracy,
            report.n,
            report.n_folds
        );
        if !report.skipped.is_empty() {
            text += &format!(" ({} folds skipped)", report.skipped.len());
        }
        text += "\nconfusion (rows truth, columns predicted):";
        for (name, row) in report.class_names.iter().zip(&report.confusion) {
            text += &format!("\n  {name:>12} {row:?}");
        }
        text
    })
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Artifact written by `train --out`.
    #[arg(long)]
    pub model: PathBuf,
    /// Sessions to classify (default: every session of the project).
    #[arg(long = "session")]
    pub sessions: Vec<String>,
}

#[derive(Debug, Serialize)]
struct EvaluateOutput {
    predictions: Vec<LabeledPrediction>,
    /// Over sessions whose participant has a label.
    accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
struct LabeledPrediction {
    #[serde(flatten)]
    prediction: SessionPrediction,
    truth: Option<String>,
}

pub fn evaluate(s: &Settings, out: &Output, a: &EvaluateArgs) -> Result<(), CliError> {
    let body = fs::read(&a.model).map_err(|e| CliError::Runtime(format!("{}: {e}", a.model.display())))?;
    let artifact: ModelArtifact = serde_json::from_slice(&body).map_err(|e| CliError::Usage(format!("{}: {e}", a.model.display())))?;
    let project = s.project.clone().unwrap_or_else(|| artifact.project_id.clone());
    let ids = if a.sessions.is_empty() {
        list_sessions(&s.data_dir, &project).map_err(runtime)?
    } else {
        a.sessions.clone()
    };
    let sessions: Vec<RecordingSession> = ids
        .iter()
        .map(|id| load_session(&s.data_dir, &project, id).map_err(runtime))
        .collect::<Result<_, _>>()?;
    let labels: BTreeMap<String, String> = load_participants(&s.data_dir, &project)
        .map_err(runtime)?
        .into_values()
        .filter_map(|p| p.class_label.map(|l| (p.id, l)))
        .collect();
    let preds = predict_sessions(&artifact.model, &artifact.request, &sessions).map_err(runtime)?;
    let predictions: Vec<LabeledPrediction> = preds
        .into_iter()
        .map(|p| LabeledPrediction {
            truth: labels.get(&p.participant_id).cloned(),
            prediction: p,
        })
        .collect();
    let known: Vec<&LabeledPrediction> = predictions.iter().filter(|p| p.truth.is_some()).collect();
    let accuracy = (!known.is_empty()).then(|| {
        known.iter().filter(|p| p.truth.as_deref() == Some(p.prediction.predicted.as_str())).count() as f64 / known.len() as f64
    });
    let result = EvaluateOutput { predictions, accuracy };
    out.emit(&result, || {
        let mut text = String::new();
        for p in &result.predictions {
            text += &format!(
                "{} {} -> {}{}\n",
                p.prediction.session_id,
                p.prediction.participant_id,
                p.prediction.predicted,
                p.truth.as_ref().map(|t| format!(" (label {t})")).unwrap_or_default()
            );
        }
        if let Some(acc) = result.accuracy {
            text += &format!("accuracy {acc:.4}");
        }
        text.trim_end().to_string()
    })
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Sessions to export (default: every session of the project).
    #[arg(long = "session")]
    pub sessions: Vec<String>,
    /// Output directory; receives <id>.csv and <id>.json per session.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn export(s: &Settings, out: &Output, a: &ExportArgs) -> Result<(), CliError> {
    let project = project(s)?;
    let ids = if a.sessions.is_empty() {
        list_sessions(&s.data_dir, &project).map_err(runtime)?
    } else {
        a.sessions.clone()
    };
    fs::create_dir_all(&a.out).map_err(runtime)?;
    let mut written = Vec::new();
    for id in &ids {
        let session = load_session(&s.data_dir, &project, id).map_err(runtime)?;
        let csv = a.out.join(format!("{id}.csv"));
        let json = a.out.join(format!("{id}.json"));
        fs::write(&csv, track_to_csv(&session.track)).map_err(runtime)?;
        fs::write(&json, serde_json::to_vec_pretty(&session).map_err(runtime)?).map_err(runtime)?;
        written.push(csv);
        written.push(json);
    }
    out.emit(&written, || format!("exported {} sessions to {}", ids.len(), a.out.display()))
}
