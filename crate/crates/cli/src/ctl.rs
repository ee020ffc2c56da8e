//! `gaitway ctl`: one subcommand per HTTP endpoint of a running server.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::Subcommand;
use gaitway_core::ml::{ClassifierSpec, ReducerKind, Representation};
use gaitway_core::signal::GaitEventName;
use gaitway_server::client::{ApiClient, RawResponse};
use serde_json::{json, Value};

use crate::config::Settings;
use crate::{runtime, CliError, Output};

/// `(method, path, command)` for every API endpoint. The stream endpoint
/// is driven by `simulate` rather than a ctl command.
pub const API_PARITY: &[(&str, &str, &str)] = &[
    ("POST", "/api/v1/login", "ctl login"),
    ("GET", "/api/v1/participants", "ctl participants"),
    ("POST", "/api/v1/participants", "ctl add-participant"),
    ("POST", "/api/v1/participants/{id}/label", "ctl label"),
    ("GET", "/api/v1/sessions", "ctl sessions"),
    ("POST", "/api/v1/sessions", "ctl create-session"),
    ("GET", "/api/v1/sessions/{id}", "ctl session"),
    ("POST", "/api/v1/sessions/{id}/record", "ctl record"),
    ("POST", "/api/v1/sessions/{id}/stop", "ctl stop"),
    ("GET", "/api/v1/sessions/{id}/track", "ctl track"),
    ("POST", "/api/v1/sessions/{id}/sync", "ctl sync"),
    ("POST", "/api/v1/sessions/{id}/segments", "ctl segment"),
    ("POST", "/api/v1/sessions/{id}/marks", "ctl mark"),
    ("GET", "/api/v1/sessions/{id}/features", "ctl features"),
    ("GET", "/api/v1/sessions/{id}/dashboard", "ctl dashboard"),
    ("GET", "/api/v1/overlay", "ctl overlay"),
    ("POST", "/api/v1/ml/train", "ctl train"),
    ("GET", "/api/v1/ml/runs", "ctl runs"),
    ("GET", "/api/v1/ml/runs/{id}", "ctl run"),
    ("GET", "/api/v1/ml/runs/{id}/model", "ctl model"),
    ("GET", "/api/v1/stream", "simulate --server"),
];

#[derive(Debug, Subcommand)]
pub enum CtlCommand {
    /// Check credentials and print a bearer token.
    Login,
    /// List participants.
    Participants,
    AddParticipant {
        /// Generated when absent.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        label: Option<String>,
        /// Demographic field as KEY=VALUE; repeatable.
        #[arg(long = "demographic", value_parser = parse_kv)]
        demographics: Vec<(String, String)>,
    },
    /// Set or clear (no --label) a participant's class label.
    Label {
        #[arg(long)]
        participant: String,
        #[arg(long)]
        label: Option<String>,
    },
    Sessions,
    /// Register a session for a participant; the device then connects with its id.
    CreateSession {
        #[arg(long)]
        participant: String,
        #[arg(long)]
        rate: Option<f64>,
        /// Device metadata as KEY=VALUE; repeatable.
        #[arg(long = "meta", value_parser = parse_kv)]
        meta: Vec<(String, String)>,
    },
    Session {
        #[arg(long)]
        session: String,
    },
    /// Press the record button.
    Record {
        #[arg(long)]
        session: String,
    },
    Stop {
        #[arg(long)]
        session: String,
    },
    /// Print the signal track (CSV, or JSON with --json).
    Track {
        #[arg(long)]
        session: String,
    },
    /// Set the video synchronisation offset.
    Sync {
        #[arg(long)]
        session: String,
        #[arg(long, allow_negative_numbers = true)]
        offset: f64,
    },
    /// Annotate an activity segment.
    Segment {
        #[arg(long)]
        session: String,
        #[arg(long)]
        start: f64,
        #[arg(long)]
        end: f64,
        #[arg(long)]
        activity: String,
    },
    /// Mark a gait event.
    Mark {
        #[arg(long)]
        session: String,
        #[arg(long)]
        time: f64,
        /// One of the eight gait cycle events, e.g. toe_off.
        #[arg(long)]
        event: GaitEventName,
    },
    Features {
        #[arg(long)]
        session: String,
        #[arg(long, requires = "end")]
        start: Option<f64>,
        #[arg(long, requires = "start")]
        end: Option<f64>,
    },
    Dashboard {
        #[arg(long)]
        session: String,
    },
    Overlay {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, allow_negative_numbers = true)]
        lag: Option<f64>,
    },
    /// Start a training run.
    Train {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "features")]
        representation: Representation,
        #[arg(long)]
        reducer: Option<ReducerKind>,
        #[arg(long, requires = "reducer")]
        components: Option<usize>,
        #[arg(long = "session")]
        sessions: Vec<String>,
        /// Poll until the run finishes and print its report.
        #[arg(long)]
        wait: bool,
    },
    Runs,
    /// Run status, or its report once done.
    Run {
        #[arg(long)]
        run: String,
    },
    /// Fitted model and projection of a finished run.
    Model {
        #[arg(long)]
        run: String,
    },
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}

fn client(s: &Settings) -> Result<ApiClient, CliError> {
    let project = s.project.as_deref().ok_or_else(|| CliError::Usage("--project is required".into()))?;
    let secret = s.secret.as_deref().ok_or_else(|| CliError::Usage("--secret is required".into()))?;
    let mut c = ApiClient::new(&s.server);
    c.login(project, secret).map_err(runtime)?;
    Ok(c)
}

fn check(r: RawResponse) -> Result<RawResponse, CliError> {
    if (200..300).contains(&r.status) {
        return Ok(r);
    }
    let message = serde_json::from_str::<Value>(&r.body)
        .ok()
        .and_then(|v| v.get("message").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| r.body.clone());
    Err(CliError::Runtime(format!("server returned {}: {message}", r.status)))
}

fn send(c: &ApiClient, method: &str, path: &str, body: Option<Value>) -> Result<Value, CliError> {
    let r = check(c.raw(method, path, body.as_ref()).map_err(runtime)?)?;
    serde_json::from_str(&r.body).map_err(runtime)
}

fn kv_map(pairs: Vec<(String, String)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k, Value::String(v))).collect())
}

fn session_path(id: &str, rest: &str) -> String {
    format!("/api/v1/sessions/{id}{rest}")
}

pub fn run(s: &Settings, out: &Output, cmd: CtlCommand) -> Result<(), CliError> {
    let c = client(s)?;
    let value = match cmd {
        CtlCommand::Login => {
            let token = c.token().unwrap_or_default();
            return out.emit(&json!({ "token": token, "project_id": s.project }), || token.to_string());
        }
        CtlCommand::Participants => send(&c, "GET", "/api/v1/participants", None)?,
        CtlCommand::AddParticipant { id, label, demographics } => send(
            &c,
            "POST",
            "/api/v1/participants",
            Some(json!({ "id": id, "class_label": label, "demographics": kv_map(demographics) })),
        )?,
        CtlCommand::Label { participant, label } => send(
            &c,
            "POST",
            &format!("/api/v1/participants/{participant}/label"),
            Some(json!({ "class_label": label })),
        )?,
        CtlCommand::Sessions => send(&c, "GET", "/api/v1/sessions", None)?,
        CtlCommand::CreateSession { participant, rate, meta } => send(
            &c,
            "POST",
            "/api/v1/sessions",
            Some(json!({ "participant_id": participant, "nominal_rate_hz": rate, "device_meta": kv_map(meta) })),
        )?,
        CtlCommand::Session { session } => send(&c, "GET", &session_path(&session, ""), None)?,
        CtlCommand::Record { session } => send(&c, "POST", &session_path(&session, "/record"), None)?,
        CtlCommand::Stop { session } => send(&c, "POST", &session_path(&session, "/stop"), None)?,
        CtlCommand::Track { session } => {
            if out.json {
                send(&c, "GET", &session_path(&session, "/track?format=json"), None)?
            } else {
                let r = check(c.raw("GET", &session_path(&session, "/track"), None).map_err(runtime)?)?;
                print!("{}", r.body);
                return Ok(());
            }
        }
        CtlCommand::Sync { session, offset } => {
            send(&c, "POST", &session_path(&session, "/sync"), Some(json!({ "offset_s": offset })))?
        }
        CtlCommand::Segment { session, start, end, activity } => send(
            &c,
            "POST",
            &session_path(&session, "/segments"),
            Some(json!({ "start_s": start, "end_s": end, "activity": activity })),
        )?,
        CtlCommand::Mark { session, time, event } => send(
            &c,
            "POST",
            &session_path(&session, "/marks"),
            Some(json!({ "time_s": time, "event": event })),
        )?,
        CtlCommand::Features { session, start, end } => {
            let q = match (start, end) {
                (Some(a), Some(b)) => format!("?start={a}&end={b}"),
                _ => String::new(),
            };
            send(&c, "GET", &session_path(&session, &format!("/features{q}")), None)?
        }
        CtlCommand::Dashboard { session } => send(&c, "GET", &session_path(&session, "/dashboard"), None)?,
        CtlCommand::Overlay { a, b, lag } => {
            let lag = lag.map(|l| format!("&lag={l}")).unwrap_or_default();
            send(&c, "GET", &format!("/api/v1/overlay?a={a}&b={b}{lag}"), None)?
        }
        CtlCommand::Train {
            spec,
            representation,
            reducer,
            components,
            sessions,
            wait,
        } => {
            let body = std::fs::read(&spec).map_err(|e| CliError::Runtime(format!("{}: {e}", spec.display())))?;
            let mut spec: ClassifierSpec =
                serde_json::from_slice(&body).map_err(|e| CliError::Usage(format!("{}: {e}", spec.display())))?;
            if s.seed_given {
                spec.seed = s.seed;
            }
            let representation = match (representation, reducer) {
                (Representation::ClinicalFeatures, Some(_)) => Representation::Reduced,
                (r, _) => r,
            };
            // LDA without an explicit size keeps the server's C - 1 default
            let reducer = match (reducer, components) {
                (Some(ReducerKind::Lda), None) | (None, _) => None,
                (Some(kind), n) => Some(json!({ "kind": kind, "n_components": n.unwrap_or(2) })),
            };
            let mut req = json!({ "spec": spec, "representation": representation, "reducer": reducer });
            if !sessions.is_empty() {
                req["sessions"] = json!(sessions);
            }
            let started = send(&c, "POST", "/api/v1/ml/train", Some(req))?;
            if !wait {
                started
            } else {
                let id = started["run_id"].as_str().unwrap_or_default().to_string();
                wait_for_run(&c, &id)?
            }
        }
        CtlCommand::Runs => send(&c, "GET", "/api/v1/ml/runs", None)?,
        CtlCommand::Run { run } => {
            let r = c.raw("GET", &format!("/api/v1/ml/runs/{run}"), None).map_err(runtime)?;
            if r.status == 202 {
                serde_json::from_str(&r.body).map_err(runtime)?
            } else {
                serde_json::from_str(&check(r)?.body).map_err(runtime)?
            }
        }
        CtlCommand::Model { run } => send(&c, "GET", &format!("/api/v1/ml/runs/{run}/model"), None)?,
    };
    out.emit(&value, || Output::pretty(&value))
}

fn wait_for_run(c: &ApiClient, id: &str) -> Result<Value, CliError> {
    let deadline = Instant::now() + Duration::from_secs(3600);
    loop {
        let r = c.raw("GET", &format!("/api/v1/ml/runs/{id}"), None).map_err(runtime)?;
        if r.status != 202 {
            return serde_json::from_str(&check(r)?.body).map_err(runtime);
        }
        if Instant::now() > deadline {
            return Err(CliError::Runtime(format!("run {id} still running after an hour")));
        }
        std::thread::sleep(Duration::from_millis(200));
    }
}
