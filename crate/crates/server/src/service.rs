//! Transport-independent server logic. The HTTP and WebSocket layers are
//! thin adapters over [`Service`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use dashmap::DashMap;
use gaitway_core::features::{extract_features, FeatureConfig};
use gaitway_core::ml::{run_experiment, ExperimentRequest, ExperimentResult, Pipeline, ProjectedRow};
use gaitway_core::model::{
    ActivitySegment, EventMark, FeatureVector, Participant, Project, RecordingSession, SignalTrack, DEFAULT_RATE_HZ,
};
use gaitway_core::protocol::{transition, Effect, ErrorCode, Machine, Message, Origin, RejectReason, SessionState};
use gaitway_core::signal::{build_dashboard, overlay, DashboardBundle, DashboardConfig, GaitEventName, Overlay};
use gaitway_core::store::{self, list_sessions, load_session, quantized, save_session, session_dir};
use gaitway_core::new_id;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc::UnboundedSender;
use tracing::{info, warn};

use crate::auth::{hash_secret, verify_secret, TokenError, TokenStore};
use crate::error::ApiError;
use crate::storage::{
    self, clear_pending, pending_path, read_json, replay_log, write_json, IngestLog, PendingSession, SecretFile,
    RUNS_DIR,
};

pub const DEFAULT_TOKEN_TTL: Duration = Duration::from_secs(24 * 3600);

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub token_ttl: Duration,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            token_ttl: DEFAULT_TOKEN_TTL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoginRequest {
    pub project_id: String,
    pub secret: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub project_id: String,
    pub expires_in_s: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewParticipant {
    /// Generated when absent.
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
    #[serde(default)]
    pub class_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    pub class_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewSession {
    pub participant_id: String,
    #[serde(default)]
    pub device_meta: BTreeMap<String, String>,
    #[serde(default)]
    pub nominal_rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncRequest {
    pub offset_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRequest {
    pub start_s: f64,
    pub end_s: f64,
    pub activity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkRequest {
    pub time_s: f64,
    pub event: GaitEventName,
}

/// Session metadata without the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub project_id: String,
    pub participant_id: String,
    pub state: SessionState,
    /// A client stream is attached.
    pub connected: bool,
    pub n_samples: usize,
    pub acked_seq: u64,
    pub nominal_rate_hz: f64,
    pub duration_s: f64,
    pub created_at_ms: Option<u64>,
    pub record_pressed_at_ms: Option<u64>,
    pub first_sample_at_ms: Option<u64>,
    pub finalized_at_ms: Option<u64>,
    pub stop_reason: Option<String>,
    /// Written to disk; false for sessions finalized without samples.
    pub persisted: bool,
    pub class_label: Option<String>,
    pub video_sync_offset_s: Option<f64>,
    pub activity_segments: Vec<ActivitySegment>,
    pub gait_event_marks: Vec<EventMark>,
    pub device_meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    #[serde(flatten)]
    pub experiment: ExperimentRequest,
    /// Session ids to use; all labeled finalized sessions when absent.
    #[serde(default)]
    pub sessions: Option<Vec<String>>,
    /// Class order; the project label set when absent.
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub project_id: String,
    pub status: RunStatus,
    pub created_at_ms: u64,
    pub finished_at_ms: Option<u64>,
    pub request: TrainRequest,
    pub error: Option<String>,
    pub result: Option<ExperimentResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub status: RunStatus,
    pub created_at_ms: u64,
    pub finished_at_ms: Option<u64>,
    pub kind: String,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

/// The fitted pipeline of a finished run and the training rows in reduced
/// coordinates (when a reducer was used).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunModel {
    pub run_id: String,
    pub model: Pipeline,
    pub projection: Option<Vec<ProjectedRow>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StartupReport {
    pub projects: usize,
    pub sessions_loaded: usize,
    pub sessions_recovered: usize,
    pub sessions_discarded: usize,
    pub runs_loaded: usize,
}

pub type Outbox = UnboundedSender<Message>;

/// One attached client stream.
#[derive(Debug)]
pub struct Connection {
    id: u64,
    project_id: String,
    bound: Option<String>,
    tx: Outbox,
}

impl Connection {
    pub fn bound_session(&self) -> Option<&str> {
        self.bound.as_deref()
    }

    fn send(&self, msg: Message) {
        // A closed receiver means the socket is gone; disconnect cleans up.
        let _ = self.tx.send(msg);
    }
}

#[derive(Debug)]
struct SessionEntry {
    session: RecordingSession,
    machine: Machine,
    created_at_ms: Option<u64>,
    record_pressed_at_ms: Option<u64>,
    first_sample_at_ms: Option<u64>,
    finalized_at_ms: Option<u64>,
    stop_reason: Option<String>,
    persisted: bool,
    link: Option<(u64, Outbox)>,
    log: Option<IngestLog>,
}

impl SessionEntry {
    fn set_machine(&mut self, m: Machine) {
        self.machine = m;
        self.session.state = m.state;
    }

    fn send(&self, msg: Message) {
        if let Some((_, tx)) = &self.link {
            let _ = tx.send(msg);
        }
    }

    fn summary(&self) -> SessionSummary {
        let s = &self.session;
        SessionSummary {
            id: s.id.clone(),
            project_id: s.project_id.clone(),
            participant_id: s.participant_id.clone(),
            state: s.state,
            connected: self.link.is_some(),
            n_samples: s.track.len(),
            acked_seq: self.machine.acked_seq(),
            nominal_rate_hz: s.track.nominal_rate_hz,
            duration_s: s.track.duration_s(),
            created_at_ms: self.created_at_ms,
            record_pressed_at_ms: self.record_pressed_at_ms,
            first_sample_at_ms: self.first_sample_at_ms,
            finalized_at_ms: self.finalized_at_ms,
            stop_reason: self.stop_reason.clone(),
            persisted: self.persisted,
            class_label: s.class_label.clone(),
            video_sync_offset_s: s.video_sync_offset_s,
            activity_segments: s.activity_segments.clone(),
            gait_event_marks: s.gait_event_marks.clone(),
            device_meta: s.device_meta.clone(),
        }
    }

    fn pending(&self) -> PendingSession {
        PendingSession {
            session_id: self.session.id.clone(),
            project_id: self.session.project_id.clone(),
            participant_id: self.session.participant_id.clone(),
            nominal_rate_hz: self.session.track.nominal_rate_hz,
            device_meta: self.session.device_meta.clone(),
            created_at_ms: self.created_at_ms.unwrap_or(0),
            record_pressed_at_ms: self.record_pressed_at_ms,
        }
    }
}

#[derive(Debug)]
struct SessionSlot {
    project_id: String,
    entry: Mutex<SessionEntry>,
}

#[derive(Debug)]
struct RunSlot {
    project_id: String,
    record: Mutex<RunRecord>,
}

/// Server state. Lock order: a session entry may be held while taking the
/// `live` or `participants` locks, never the other way round.
#[derive(Debug)]
pub struct Service {
    data_dir: PathBuf,
    projects: RwLock<BTreeMap<String, Project>>,
    participants: Mutex<BTreeMap<String, BTreeMap<String, Participant>>>,
    tokens: TokenStore,
    sessions: DashMap<String, Arc<SessionSlot>>,
    /// (project, participant) → the session currently Ready or Streaming.
    live: Mutex<HashMap<(String, String), String>>,
    runs: DashMap<String, Arc<RunSlot>>,
    next_conn: AtomicU64,
}

impl Service {
    /// Loads projects, participants, finalized sessions and runs from
    /// `data_dir`, merges bootstrap credentials and recovers sessions that
    /// were live when the previous process stopped.
    pub fn open(cfg: ServiceConfig, secrets: Option<&SecretFile>) -> Result<(Self, StartupReport), ApiError> {
        let root = cfg.data_dir.clone();
        fs::create_dir_all(&root)?;
        let mut projects: BTreeMap<String, Project> =
            storage::load_projects(&root)?.into_iter().map(|p| (p.id.clone(), p)).collect();
        if let Some(secrets) = secrets {
            for s in &secrets.projects {
                if s.id.is_empty() || s.id.contains(['/', '\\', '.']) {
                    return Err(ApiError::Invalid(format!("invalid project id {:?}", s.id)));
                }
                let keep_hash = projects
                    .get(&s.id)
                    .filter(|p| verify_secret(&p.credential_hash, &s.secret))
                    .map(|p| p.credential_hash.clone());
                projects.insert(
                    s.id.clone(),
                    Project {
                        id: s.id.clone(),
                        name: s.name.clone().unwrap_or_else(|| s.id.clone()),
                        credential_hash: keep_hash.unwrap_or_else(|| hash_secret(&s.secret)),
                        label_set: s.labels.clone(),
                        step_length_k: s.step_length_k,
                    },
                );
            }
            storage::save_projects(&root, &projects.values().cloned().collect::<Vec<_>>())?;
        }

        let service = Self {
            data_dir: root.clone(),
            projects: RwLock::new(BTreeMap::new()),
            participants: Mutex::new(BTreeMap::new()),
            tokens: TokenStore::new(cfg.token_ttl),
            sessions: DashMap::new(),
            live: Mutex::new(HashMap::new()),
            runs: DashMap::new(),
            next_conn: AtomicU64::new(1),
        };
        let mut report = StartupReport {
            projects: projects.len(),
            ..StartupReport::default()
        };
        for pid in projects.keys() {
            let parts = storage::load_participants(&root, pid)?;
            service.participants.lock().insert(pid.clone(), parts);
            for id in list_sessions(&root, pid)? {
                let session = load_session(&root, pid, &id)?;
                let entry = SessionEntry {
                    machine: Machine::new(session.state),
                    session,
                    created_at_ms: None,
                    record_pressed_at_ms: None,
                    first_sample_at_ms: None,
                    finalized_at_ms: None,
                    stop_reason: None,
                    persisted: true,
                    link: None,
                    log: None,
                };
                service.insert_entry(entry);
                report.sessions_loaded += 1;
            }
            service.recover_pending(pid, &mut report)?;
            let runs_dir = root.join(pid).join(RUNS_DIR);
            if let Ok(dir) = fs::read_dir(&runs_dir) {
                for f in dir.flatten() {
                    if f.path().extension().is_some_and(|e| e == "json") {
                        if let Some(rec) = read_json::<RunRecord>(&f.path())? {
                            service.runs.insert(
                                rec.id.clone(),
                                Arc::new(RunSlot {
                                    project_id: pid.clone(),
                                    record: Mutex::new(rec),
                                }),
                            );
                            report.runs_loaded += 1;
                        }
                    }
                }
            }
        }
        *service.projects.write() = projects;
        info!(?report, "service ready");
        Ok((service, report))
    }

    fn insert_entry(&self, entry: SessionEntry) {
        let id = entry.session.id.clone();
        let slot = SessionSlot {
            project_id: entry.session.project_id.clone(),
            entry: Mutex::new(entry),
        };
        self.sessions.insert(id, Arc::new(slot));
    }

    fn recover_pending(&self, project_id: &str, report: &mut StartupReport) -> Result<(), ApiError> {
        let Ok(dir) = fs::read_dir(self.data_dir.join(project_id)) else {
            return Ok(());
        };
        for d in dir.flatten() {
            let path = d.path();
            if !path.join(storage::PENDING_FILE).is_file() || path.join(store::META_FILE).is_file() {
                continue;
            }
            let Some(p) = read_json::<PendingSession>(&pending_path(&path))? else { continue };
            let samples = replay_log(&path)?;
            if samples.is_empty() || p.project_id != project_id {
                fs::remove_dir_all(&path)?;
                report.sessions_discarded += 1;
                continue;
            }
            let mut session = RecordingSession::new(&p.session_id, project_id, &p.participant_id, p.nominal_rate_hz);
            session.track = SignalTrack::from_samples(samples, p.nominal_rate_hz)?;
            session.device_meta = p.device_meta.clone();
            session.state = SessionState::Finalized;
            session.class_label = self.label_of(project_id, &p.participant_id);
            save_session(&session, &self.data_dir)?;
            clear_pending(&path)?;
            warn!(session = %p.session_id, samples = session.track.len(), "recovered interrupted session");
            self.insert_entry(SessionEntry {
                session: quantized(&session),
                machine: Machine::new(SessionState::Finalized),
                created_at_ms: Some(p.created_at_ms),
                record_pressed_at_ms: p.record_pressed_at_ms,
                first_sample_at_ms: None,
                finalized_at_ms: Some(now_ms()),
                stop_reason: Some("recovered after restart".into()),
                persisted: true,
                link: None,
                log: None,
            });
            report.sessions_recovered += 1;
        }
        Ok(())
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn project_ids(&self) -> Vec<String> {
        self.projects.read().keys().cloned().collect()
    }

    fn project(&self, id: &str) -> Result<Project, ApiError> {
        self.projects
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("project {id} not found")))
    }

    fn label_of(&self, project_id: &str, participant_id: &str) -> Option<String> {
        self.participants
            .lock()
            .get(project_id)
            .and_then(|m| m.get(participant_id))
            .and_then(|p| p.class_label.clone())
    }

    fn feature_config(&self, project_id: &str) -> FeatureConfig {
        match self.project(project_id).ok().and_then(|p| p.step_length_k) {
            Some(k) => FeatureConfig::default().with_k(k),
            None => FeatureConfig::default(),
        }
    }

    // ---- auth ----

    pub fn login(&self, req: &LoginRequest) -> Result<LoginResponse, ApiError> {
        let hash = self.projects.read().get(&req.project_id).map(|p| p.credential_hash.clone());
        // Unknown projects still pay for a hash so timing does not reveal them.
        let ok = match &hash {
            Some(h) => verify_secret(h, &req.secret),
            None => {
                verify_secret("00$00", &req.secret);
                false
            }
        };
        if !ok {
            return Err(ApiError::Unauthorized("invalid project or secret".into()));
        }
        Ok(LoginResponse {
            token: self.tokens.issue(&req.project_id),
            project_id: req.project_id.clone(),
            expires_in_s: self.tokens.ttl().as_secs(),
        })
    }

    /// Project bound to a bearer token.
    pub fn authorize(&self, token: &str) -> Result<String, ApiError> {
        self.tokens.project_of(token).map_err(|e| match e {
            TokenError::Unknown => ApiError::Unauthorized("invalid token".into()),
            TokenError::Expired => ApiError::Unauthorized("token expired".into()),
        })
    }

    // ---- participants ----

    pub fn list_participants(&self, project: &str) -> Vec<Participant> {
        self.participants
            .lock()
            .get(project)
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default()
    }

    pub fn create_participant(&self, project: &str, req: NewParticipant) -> Result<Participant, ApiError> {
        let proj = self.project(project)?;
        if let Some(label) = &req.class_label {
            check_label(&proj, label)?;
        }
        let id = req.id.unwrap_or_else(new_id);
        if id.is_empty() {
            return Err(ApiError::Invalid("participant id must not be empty".into()));
        }
        let mut all = self.participants.lock();
        let map = all.entry(project.to_string()).or_default();
        if map.contains_key(&id) {
            return Err(ApiError::Conflict(format!("participant {id} already exists")));
        }
        let p = Participant {
            id: id.clone(),
            demographics: req.demographics,
            class_label: req.class_label,
        };
        map.insert(id, p.clone());
        storage::save_participants(&self.data_dir, project, map)?;
        Ok(p)
    }

    pub fn set_label(&self, project: &str, participant_id: &str, label: &str) -> Result<Participant, ApiError> {
        let proj = self.project(project)?;
        check_label(&proj, label)?;
        let mut all = self.participants.lock();
        let map = all.entry(project.to_string()).or_default();
        let p = map
            .get_mut(participant_id)
            .ok_or_else(|| ApiError::NotFound(format!("participant {participant_id} not found")))?;
        p.class_label = Some(label.to_string());
        let out = p.clone();
        storage::save_participants(&self.data_dir, project, map)?;
        Ok(out)
    }

    // ---- sessions ----

    fn slot(&self, project: &str, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        let slot = self
            .sessions
            .get(id)
            .map(|s| Arc::clone(&s))
            .ok_or_else(|| ApiError::NotFound(format!("session {id} not found")))?;
        if slot.project_id != project {
            return Err(ApiError::Forbidden(format!("session {id} belongs to another project")));
        }
        Ok(slot)
    }

    pub fn create_session(&self, project: &str, req: NewSession) -> Result<SessionSummary, ApiError> {
        let known = self
            .participants
            .lock()
            .get(project)
            .is_some_and(|m| m.contains_key(&req.participant_id));
        if !known {
            return Err(ApiError::NotFound(format!("participant {} not found", req.participant_id)));
        }
        let rate = req.nominal_rate_hz.unwrap_or(DEFAULT_RATE_HZ);
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ApiError::Invalid(format!("invalid sampling rate {rate}")));
        }
        let key = (project.to_string(), req.participant_id.clone());
        if let Some(other) = self.live.lock().get(&key) {
            return Err(ApiError::Conflict(format!(
                "participant {} already has a live session {other}",
                req.participant_id
            )));
        }
        let mut session = RecordingSession::new(new_id(), project, &req.participant_id, rate);
        session.device_meta = req.device_meta;
        let entry = SessionEntry {
            session,
            machine: Machine::default(),
            created_at_ms: Some(now_ms()),
            record_pressed_at_ms: None,
            first_sample_at_ms: None,
            finalized_at_ms: None,
            stop_reason: None,
            persisted: false,
            link: None,
            log: None,
        };
        let summary = entry.summary();
        self.insert_entry(entry);
        Ok(summary)
    }

    pub fn list_sessions(&self, project: &str) -> Vec<SessionSummary> {
        let slots: Vec<Arc<SessionSlot>> = self
            .sessions
            .iter()
            .filter(|s| s.project_id == project)
            .map(|s| Arc::clone(&s))
            .collect();
        let mut out: Vec<SessionSummary> = slots.iter().map(|s| s.entry.lock().summary()).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    pub fn session(&self, project: &str, id: &str) -> Result<SessionSummary, ApiError> {
        Ok(self.slot(project, id)?.entry.lock().summary())
    }

    /// The record button: sends `Start` to an armed client.
    pub fn press_record(&self, project: &str, id: &str) -> Result<SessionSummary, ApiError> {
        let slot = self.slot(project, id)?;
        let mut e = slot.entry.lock();
        match e.machine.state {
            SessionState::Ready => {
                let start = Message::Start { session_id: id.to_string() };
                let (m, _) = transition(e.machine, &start, Origin::Server);
                e.set_machine(m);
                e.record_pressed_at_ms = Some(now_ms());
                let dir = session_dir(&self.data_dir, project, id);
                if let Err(err) = write_json(&pending_path(&dir), &e.pending()) {
                    warn!(session = id, %err, "could not update pending record");
                }
                e.send(start);
                Ok(e.summary())
            }
            SessionState::Streaming => Ok(e.summary()),
            SessionState::Off => Err(ApiError::Conflict("client not armed".into())),
            SessionState::Finalized => Err(ApiError::Conflict("session already finalized".into())),
        }
    }

    /// Ends streaming, persists the acked samples and tells the client.
    pub fn stop(&self, project: &str, id: &str) -> Result<SessionSummary, ApiError> {
        let slot = self.slot(project, id)?;
        let mut e = slot.entry.lock();
        match e.machine.state {
            SessionState::Streaming => {
                let stop = Message::Stop {
                    session_id: id.to_string(),
                    reason: Some("stopped by researcher".into()),
                };
                let (m, _) = transition(e.machine, &stop, Origin::Server);
                e.set_machine(m);
                e.send(stop);
                self.finalize_locked(&mut e, "stopped by researcher")?;
                Ok(e.summary())
            }
            SessionState::Finalized => Ok(e.summary()),
            _ => Err(ApiError::Conflict("session not streaming".into())),
        }
    }

    fn release_live(&self, e: &SessionEntry) {
        let key = (e.session.project_id.clone(), e.session.participant_id.clone());
        let mut live = self.live.lock();
        if live.get(&key) == Some(&e.session.id) {
            live.remove(&key);
        }
    }

    /// Called with the machine already in Finalized.
    fn finalize_locked(&self, e: &mut SessionEntry, reason: &str) -> Result<(), ApiError> {
        self.release_live(e);
        e.link = None;
        e.log = None;
        e.finalized_at_ms = Some(now_ms());
        e.stop_reason = Some(reason.to_string());
        e.session.class_label = self.label_of(&e.session.project_id, &e.session.participant_id);
        let dir = session_dir(&self.data_dir, &e.session.project_id, &e.session.id);
        if e.session.track.is_empty() {
            // Nothing was acked; there is no track to persist.
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            return Ok(());
        }
        save_session(&e.session, &self.data_dir)?;
        e.session = quantized(&e.session);
        e.persisted = true;
        clear_pending(&dir)?;
        info!(session = %e.session.id, samples = e.session.track.len(), reason, "session finalized");
        Ok(())
    }

    pub fn track(&self, project: &str, id: &str) -> Result<SignalTrack, ApiError> {
        Ok(self.slot(project, id)?.entry.lock().session.track.clone())
    }

    /// Full session including samples; only for finalized sessions.
    pub fn finalized_session(&self, project: &str, id: &str) -> Result<RecordingSession, ApiError> {
        let slot = self.slot(project, id)?;
        let e = slot.entry.lock();
        if e.machine.state != SessionState::Finalized || !e.persisted {
            return Err(ApiError::Conflict(format!("session {id} is not finalized with data")));
        }
        Ok(e.session.clone())
    }

    fn edit_finalized(
        &self,
        project: &str,
        id: &str,
        f: impl FnOnce(&mut RecordingSession) -> Result<(), ApiError>,
    ) -> Result<SessionSummary, ApiError> {
        let slot = self.slot(project, id)?;
        let mut e = slot.entry.lock();
        if e.machine.state != SessionState::Finalized || !e.persisted {
            return Err(ApiError::Conflict(format!("session {id} is not finalized with data")));
        }
        let mut edited = e.session.clone();
        f(&mut edited)?;
        save_session(&edited, &self.data_dir)?;
        e.session = edited;
        Ok(e.summary())
    }

    pub fn set_video_sync(&self, project: &str, id: &str, offset_s: f64) -> Result<SessionSummary, ApiError> {
        self.edit_finalized(project, id, |s| Ok(s.set_video_sync(offset_s)?))
    }

    pub fn annotate(&self, project: &str, id: &str, req: &SegmentRequest) -> Result<SessionSummary, ApiError> {
        if req.activity.trim().is_empty() {
            return Err(ApiError::Invalid("activity name must not be empty".into()));
        }
        self.edit_finalized(project, id, |s| Ok(s.add_segment(req.start_s, req.end_s, req.activity.clone())?))
    }

    pub fn mark_event(&self, project: &str, id: &str, req: &MarkRequest) -> Result<SessionSummary, ApiError> {
        self.edit_finalized(project, id, |s| Ok(s.add_mark(req.time_s, req.event)?))
    }

    // ---- analytics ----

    pub fn features(&self, project: &str, id: &str, segment: Option<(f64, f64)>) -> Result<FeatureVector, ApiError> {
        let s = self.finalized_session(project, id)?;
        extract_features(&s, segment, &self.feature_config(project)).map_err(|e| ApiError::Invalid(e.to_string()))
    }

    pub fn dashboard(&self, project: &str, id: &str) -> Result<DashboardBundle, ApiError> {
        let s = self.finalized_session(project, id)?;
        let cfg = DashboardConfig {
            features: self.feature_config(project),
            ..DashboardConfig::default()
        };
        build_dashboard(&s, &cfg).map_err(|e| ApiError::Invalid(e.to_string()))
    }

    pub fn overlay(&self, project: &str, a: &str, b: &str, lag_s: Option<f64>) -> Result<Overlay, ApiError> {
        let sa = self.finalized_session(project, a)?;
        let sb = self.finalized_session(project, b)?;
        overlay(&sa, &sb, lag_s, &self.feature_config(project)).map_err(|e| ApiError::Invalid(e.to_string()))
    }

    // ---- ml ----

    /// Runs a training request to completion on the calling thread.
    pub fn train_now(&self, project: &str, req: &TrainRequest) -> Result<ExperimentResult, ApiError> {
        let proj = self.project(project)?;
        let labels: BTreeMap<String, String> = self
            .list_participants(project)
            .into_iter()
            .filter_map(|p| p.class_label.map(|l| (p.id, l)))
            .collect();
        let sessions: Vec<RecordingSession> = match &req.sessions {
            Some(ids) => ids
                .iter()
                .map(|id| self.finalized_session(project, id))
                .collect::<Result<_, _>>()?,
            None => self
                .list_sessions(project)
                .into_iter()
                .filter(|s| s.persisted && labels.contains_key(&s.participant_id))
                .map(|s| self.finalized_session(project, &s.id))
                .collect::<Result<_, _>>()?,
        };
        let class_names = match &req.class_names {
            Some(c) => c.clone(),
            None if !proj.label_set.is_empty() => proj.label_set.clone(),
            None => {
                let mut c: Vec<String> = labels.values().cloned().collect();
                c.sort();
                c.dedup();
                c
            }
        };
        let mut exp = req.experiment.clone();
        if let Some(k) = proj.step_length_k {
            exp.options.features.step_length_k = k;
        }
        Ok(run_experiment(&sessions, &labels, &class_names, &exp)?)
    }

    /// Starts a training run on a background thread and returns its id.
    pub fn start_run(self: &Arc<Self>, project: &str, req: TrainRequest) -> Result<String, ApiError> {
        self.project(project)?;
        req.experiment.spec.validate()?;
        let id = new_id();
        let slot = Arc::new(RunSlot {
            project_id: project.to_string(),
            record: Mutex::new(RunRecord {
                id: id.clone(),
                project_id: project.to_string(),
                status: RunStatus::Running,
                created_at_ms: now_ms(),
                finished_at_ms: None,
                request: req.clone(),
                error: None,
                result: None,
            }),
        });
        self.runs.insert(id.clone(), Arc::clone(&slot));
        let service = Arc::clone(self);
        let project = project.to_string();
        std::thread::spawn(move || {
            let outcome = service.train_now(&project, &req);
            let mut rec = slot.record.lock();
            rec.finished_at_ms = Some(now_ms());
            match outcome {
                Ok(result) => {
                    rec.status = RunStatus::Done;
                    rec.result = Some(result);
                }
                Err(e) => {
                    rec.status = RunStatus::Failed;
                    rec.error = Some(e.to_string());
                }
            }
            let path = service.data_dir.join(&project).join(RUNS_DIR).join(format!("{}.json", rec.id));
            if let Err(err) = write_json(&path, &*rec) {
                warn!(run = %rec.id, %err, "could not persist run");
            }
        });
        Ok(id)
    }

    pub fn run(&self, project: &str, id: &str) -> Result<RunRecord, ApiError> {
        let slot = self
            .runs
            .get(id)
            .map(|s| Arc::clone(&s))
            .ok_or_else(|| ApiError::NotFound(format!("run {id} not found")))?;
        if slot.project_id != project {
            return Err(ApiError::Forbidden(format!("run {id} belongs to another project")));
        }
        let rec = slot.record.lock().clone();
        Ok(rec)
    }

    pub fn list_runs(&self, project: &str) -> Vec<RunSummary> {
        let slots: Vec<Arc<RunSlot>> =
            self.runs.iter().filter(|r| r.project_id == project).map(|r| Arc::clone(&r)).collect();
        let mut out: Vec<RunSummary> = slots
            .iter()
            .map(|s| {
                let r = s.record.lock();
                RunSummary {
                    id: r.id.clone(),
                    status: r.status,
                    created_at_ms: r.created_at_ms,
                    finished_at_ms: r.finished_at_ms,
                    kind: r.request.experiment.spec.kind.as_str().to_string(),
                    accuracy: r.result.as_ref().map(|x| x.report.accuracy),
                    error: r.error.clone(),
                }
            })
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    pub fn run_model(&self, project: &str, id: &str) -> Result<RunModel, ApiError> {
        let rec = self.run(project, id)?;
        match (rec.status, rec.result) {
            (RunStatus::Done, Some(r)) => Ok(RunModel {
                run_id: rec.id,
                model: r.model,
                projection: r.projection,
            }),
            (RunStatus::Failed, _) => Err(ApiError::Conflict(format!("run {id} failed: {}", rec.error.unwrap_or_default()))),
            _ => Err(ApiError::Conflict(format!("run {id} is still running"))),
        }
    }

    // ---- streaming ----

    pub fn connect(&self, project_id: &str, tx: Outbox) -> Connection {
        Connection {
            id: self.next_conn.fetch_add(1, Ordering::Relaxed),
            project_id: project_id.to_string(),
            bound: None,
            tx,
        }
    }

    /// Handles one NDJSON line from a client.
    pub fn on_line(&self, conn: &mut Connection, line: &[u8]) {
        match gaitway_core::protocol::decode(line) {
            Ok(msg) => self.on_message(conn, msg),
            Err(e) => {
                let sid = conn.bound.clone().unwrap_or_default();
                conn.send(Message::error(&sid, ErrorCode::Malformed, e.to_string(), None));
            }
        }
    }

    pub fn on_message(&self, conn: &mut Connection, msg: Message) {
        let sid = msg.session_id().to_string();
        if let Message::Hello { participant, .. } = &msg {
            self.on_hello(conn, &sid, participant, &msg);
            return;
        }
        if conn.bound.as_deref() != Some(sid.as_str()) {
            conn.send(Message::error(&sid, ErrorCode::UnknownSession, "session not bound to this connection", None));
            return;
        }
        let Some(slot) = self.sessions.get(&sid).map(|s| Arc::clone(&s)) else {
            conn.send(Message::error(&sid, ErrorCode::UnknownSession, "unknown session", None));
            return;
        };
        let mut e = slot.entry.lock();
        if let Message::SampleBatch { seq, samples, .. } = &msg {
            if e.machine.state == SessionState::Streaming && *seq == e.machine.next_seq {
                let last = e.session.track.samples.last().map(|s| s.t);
                let first = samples.first().map(|s| s.t);
                let bad = match (last, first) {
                    (Some(l), Some(f)) => f <= l,
                    (None, Some(f)) => f < 0.0,
                    _ => false,
                };
                if bad {
                    conn.send(Message::error(&sid, ErrorCode::BadBatch, "batch does not continue the track in time", None));
                    return;
                }
            }
        }
        let (m, effects) = transition(e.machine, &msg, Origin::Client);
        for effect in effects {
            match effect {
                Effect::AcceptSamples => {
                    let Message::SampleBatch { samples, .. } = &msg else { continue };
                    if e.log.is_none() {
                        match IngestLog::open(&session_dir(&self.data_dir, &e.session.project_id, &sid)) {
                            Ok(l) => e.log = Some(l),
                            Err(err) => warn!(session = %sid, %err, "could not open ingest log"),
                        }
                    }
                    let logged = e.log.as_mut().map(|l| l.append(&msg));
                    if !matches!(logged, Some(Ok(()))) {
                        conn.send(Message::error(&sid, ErrorCode::Busy, "storage unavailable; retry", None));
                        return;
                    }
                    e.session.track.samples.extend(samples.iter().cloned());
                    if e.first_sample_at_ms.is_none() {
                        e.first_sample_at_ms = Some(now_ms());
                    }
                }
                Effect::SendAck { seq } => {
                    e.set_machine(m);
                    if m.state == SessionState::Finalized {
                        if let Err(err) = self.finalize_locked(&mut e, "stopped by client") {
                            warn!(session = %sid, %err, "finalize failed");
                        }
                    }
                    conn.send(Message::Ack { session_id: sid.clone(), seq });
                }
                Effect::Reject { reason, expected_seq } => {
                    let (code, text) = match (reason, &msg) {
                        (RejectReason::SeqGap, _) => (ErrorCode::SeqGap, "sequence gap"),
                        (RejectReason::Illegal, Message::SampleBatch { .. }) => (ErrorCode::NotStreaming, "session is not streaming"),
                        (RejectReason::Illegal, _) => (ErrorCode::IllegalTransition, "message not allowed in this state"),
                    };
                    conn.send(Message::error(&sid, code, text, expected_seq));
                }
                Effect::Arm => {}
            }
        }
        if e.machine != m {
            e.set_machine(m);
            if m.state == SessionState::Off {
                // Client stopped before recording started.
                self.release_live(&e);
                e.link = None;
                let _ = clear_pending(&session_dir(&self.data_dir, &e.session.project_id, &sid));
                conn.bound = None;
            }
        }
    }

    fn on_hello(&self, conn: &mut Connection, sid: &str, participant: &str, msg: &Message) {
        if let Some(b) = &conn.bound {
            if b != sid {
                conn.send(Message::error(sid, ErrorCode::IllegalTransition, format!("connection already bound to {b}"), None));
                return;
            }
        }
        let slot = match self.sessions.get(sid).map(|s| Arc::clone(&s)) {
            Some(s) if s.project_id == conn.project_id => s,
            _ => {
                conn.send(Message::error(sid, ErrorCode::UnknownSession, "unknown session", None));
                return;
            }
        };
        let mut e = slot.entry.lock();
        if e.session.participant_id != participant {
            conn.send(Message::error(sid, ErrorCode::UnknownSession, "session belongs to another participant", None));
            return;
        }
        if matches!(&e.link, Some((cid, _)) if *cid != conn.id) {
            conn.send(Message::error(sid, ErrorCode::Busy, "session is attached to another client", None));
            return;
        }
        let (m, effects) = transition(e.machine, msg, Origin::Client);
        if !effects.contains(&Effect::Arm) {
            conn.send(Message::error(sid, ErrorCode::IllegalTransition, "session cannot be armed in this state", None));
            return;
        }
        {
            let key = (e.session.project_id.clone(), e.session.participant_id.clone());
            let mut live = self.live.lock();
            match live.get(&key) {
                Some(other) if other != sid => {
                    conn.send(Message::error(sid, ErrorCode::Busy, format!("participant already streaming in {other}"), None));
                    return;
                }
                _ => {
                    live.insert(key, sid.to_string());
                }
            }
        }
        e.set_machine(m);
        e.link = Some((conn.id, conn.tx.clone()));
        conn.bound = Some(sid.to_string());
        let dir = session_dir(&self.data_dir, &e.session.project_id, sid);
        if let Err(err) = write_json(&pending_path(&dir), &e.pending()) {
            warn!(session = sid, %err, "could not write pending record");
        }
        conn.send(Message::Armed { session_id: sid.to_string() });
    }

    /// The client stream closed. Ready sessions fall back to Off; streaming
    /// sessions are finalized with the samples acked so far.
    pub fn disconnect(&self, conn: &mut Connection) {
        let Some(sid) = conn.bound.take() else { return };
        let Some(slot) = self.sessions.get(&sid).map(|s| Arc::clone(&s)) else { return };
        let mut e = slot.entry.lock();
        if !matches!(&e.link, Some((cid, _)) if *cid == conn.id) {
            return;
        }
        e.link = None;
        match e.machine.state {
            SessionState::Ready => {
                e.set_machine(Machine::new(SessionState::Off));
                self.release_live(&e);
                let _ = clear_pending(&session_dir(&self.data_dir, &e.session.project_id, &sid));
            }
            SessionState::Streaming => {
                let stop = Message::Stop {
                    session_id: sid.clone(),
                    reason: None,
                };
                let (m, _) = transition(e.machine, &stop, Origin::Server);
                e.set_machine(m);
                if let Err(err) = self.finalize_locked(&mut e, "client disconnected") {
                    warn!(session = %sid, %err, "finalize after disconnect failed");
                }
            }
            _ => {}
        }
    }
}

fn check_label(project: &Project, label: &str) -> Result<(), ApiError> {
    if project.has_label(label) {
        Ok(())
    } else {
        Err(ApiError::Invalid(format!(
            "label {label:?} not in project label set {:?}",
            project.label_set
        )))
    }
}
