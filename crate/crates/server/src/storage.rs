//! Server-side files next to the session store:
//!
//! ```text
//! <root>/projects.json
//! <root>/<project>/participants.json
//! <root>/<project>/runs/<run-id>.json
//! <root>/<project>/<session>/pending.json   live sessions only
//! <root>/<project>/<session>/ingest.log     acked batches, one NDJSON line each
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use gaitway_core::model::{Participant, Project, SensorSample};
use gaitway_core::protocol::{self, Message, FIRST_SEQ};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const PROJECTS_FILE: &str = "projects.json";
pub const PARTICIPANTS_FILE: &str = "participants.json";
pub const PENDING_FILE: &str = "pending.json";
pub const INGEST_LOG: &str = "ingest.log";
pub const RUNS_DIR: &str = "runs";

/// Writes via a temporary file and rename so readers never see a torn file.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    let body = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    fs::write(&tmp, body)?;
    fs::rename(tmp, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<Option<T>> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))
        }),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn load_projects(root: &Path) -> io::Result<Vec<Project>> {
    Ok(read_json(&root.join(PROJECTS_FILE))?.unwrap_or_default())
}

pub fn save_projects(root: &Path, projects: &[Project]) -> io::Result<()> {
    write_json(&root.join(PROJECTS_FILE), &projects)
}

pub fn load_participants(root: &Path, project_id: &str) -> io::Result<BTreeMap<String, Participant>> {
    let list: Vec<Participant> = read_json(&root.join(project_id).join(PARTICIPANTS_FILE))?.unwrap_or_default();
    Ok(list.into_iter().map(|p| (p.id.clone(), p)).collect())
}

pub fn save_participants(root: &Path, project_id: &str, participants: &BTreeMap<String, Participant>) -> io::Result<()> {
    let list: Vec<&Participant> = participants.values().collect();
    write_json(&root.join(project_id).join(PARTICIPANTS_FILE), &list)
}

/// Bootstrap credentials read from `GAITWAY_SECRET_FILE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecretFile {
    pub projects: Vec<ProjectSecret>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSecret {
    pub id: String,
    #[serde(default)]
    pub name: Option<String>,
    pub secret: String,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub step_length_k: Option<f64>,
}

pub fn read_secret_file(path: &Path) -> io::Result<SecretFile> {
    read_json(path)?.ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("{} not found", path.display())))
}

/// What a live session needs to be rebuilt after a crash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingSession {
    pub session_id: String,
    pub project_id: String,
    pub participant_id: String,
    pub nominal_rate_hz: f64,
    #[serde(default)]
    pub device_meta: BTreeMap<String, String>,
    pub created_at_ms: u64,
    #[serde(default)]
    pub record_pressed_at_ms: Option<u64>,
}

pub fn pending_path(session_dir: &Path) -> PathBuf {
    session_dir.join(PENDING_FILE)
}

/// Append-only log of accepted batches.
#[derive(Debug)]
pub struct IngestLog {
    file: File,
}

impl IngestLog {
    pub fn open(session_dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(session_dir)?;
        let file = OpenOptions::new().create(true).append(true).open(session_dir.join(INGEST_LOG))?;
        Ok(Self { file })
    }

    pub fn append(&mut self, batch: &Message) -> io::Result<()> {
        let line = protocol::encode(batch).map_err(io::Error::other)?;
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

/// Samples from the longest valid prefix of an ingest log: lines must
/// decode as batches with contiguous seq from 1. A torn last line ends the
/// prefix.
pub fn replay_log(session_dir: &Path) -> io::Result<Vec<SensorSample>> {
    let body = match fs::read(session_dir.join(INGEST_LOG)) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut samples: Vec<SensorSample> = Vec::new();
    let mut expected = FIRST_SEQ;
    for line in body.split_inclusive(|b| *b == b'\n') {
        if !line.ends_with(b"\n") {
            break;
        }
        let Ok(Message::SampleBatch { seq, samples: batch, .. }) = protocol::decode(line) else {
            break;
        };
        let last_t = samples.last().map(|s| s.t);
        if seq != expected || matches!((last_t, batch.first()), (Some(t), Some(f)) if f.t <= t) {
            break;
        }
        samples.extend(batch);
        expected += 1;
    }
    Ok(samples)
}

pub fn clear_pending(session_dir: &Path) -> io::Result<()> {
    for name in [PENDING_FILE, INGEST_LOG] {
        match fs::remove_file(session_dir.join(name)) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
