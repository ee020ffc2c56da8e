//! Blocking HTTP client for the API and the simulator streaming client.

use std::collections::BTreeMap;
use std::net::TcpStream;
use std::time::{Duration, Instant};

use gaitway_core::model::SensorSample;
use gaitway_core::protocol::{self, ErrorCode, Message, FIRST_SEQ, MAX_BATCH};
use gaitway_core::rng::SeedStream;
use gaitway_core::sim::{synthesize, GaitProfile};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tungstenite::client::IntoClientRequest;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message as WsMessage, WebSocket};

use crate::error::ErrorBody;
use crate::service::{LoginResponse, SessionSummary};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("HTTP {status}: {}", body.message)]
    Http { status: u16, body: ErrorBody },
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            Self::Http { status, .. } => Some(*status),
            _ => None,
        }
    }
}

fn transport(e: impl std::fmt::Display) -> ClientError {
    ClientError::Transport(e.to_string())
}

/// `host:port` or a full `http://` URL, without trailing slash.
pub fn base_url(server: &str) -> String {
    let s = server.trim_end_matches('/');
    if s.starts_with("http://") || s.starts_with("https://") {
        s.to_string()
    } else {
        format!("http://{s}")
    }
}

/// Raw response: status and body text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct ApiClient {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl ApiClient {
    pub fn new(server: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            base: base_url(server),
            token: None,
            agent,
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn login(&mut self, project_id: &str, secret: &str) -> Result<LoginResponse, ClientError> {
        let body = serde_json::json!({ "project_id": project_id, "secret": secret });
        let resp: LoginResponse = self.call("POST", "/api/v1/login", Some(&body))?;
        self.token = Some(resp.token.clone());
        Ok(resp)
    }

    /// Sends a request and returns status and body without interpreting
    /// them. `path` starts with `/api/v1`.
    pub fn raw(&self, method: &str, path: &str, body: Option<&Value>) -> Result<RawResponse, ClientError> {
        let url = format!("{}{path}", self.base);
        let auth = self.token.as_ref().map(|t| format!("Bearer {t}"));
        let result = match method {
            "GET" => {
                let mut r = self.agent.get(&url);
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.call()
            }
            "POST" => {
                let mut r = self.agent.post(&url);
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                match body {
                    Some(b) => r.send_json(b),
                    None => r.send_empty(),
                }
            }
            other => return Err(ClientError::Config(format!("unsupported method {other}"))),
        };
        let mut resp = result.map_err(transport)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(transport)?;
        Ok(RawResponse { status, body })
    }

    /// Like [`raw`](Self::raw) but maps non-2xx to [`ClientError::Http`]
    /// and parses the JSON body.
    pub fn call<T: DeserializeOwned>(&self, method: &str, path: &str, body: Option<&Value>) -> Result<T, ClientError> {
        let r = self.raw(method, path, body)?;
        if !(200..300).contains(&r.status) {
            let body = serde_json::from_str(&r.body).unwrap_or(ErrorBody {
                error: "http".into(),
                message: r.body.clone(),
            });
            return Err(ClientError::Http { status: r.status, body });
        }
        serde_json::from_str(&r.body).map_err(|e| ClientError::Protocol(format!("unexpected response from {path}: {e}")))
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        self.call("GET", path, None)
    }

    pub fn post<T: DeserializeOwned>(&self, path: &str, body: &Value) -> Result<T, ClientError> {
        self.call("POST", path, Some(body))
    }

    pub fn ws_url(&self) -> String {
        let rest = self.base.strip_prefix("http").unwrap_or(&self.base);
        format!("ws{rest}/api/v1/stream")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Faults {
    /// Probability of resending an acked batch.
    pub dup_rate: f64,
    /// Probability of sending the following batch first.
    pub gap_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub server: String,
    pub project: String,
    pub secret: String,
    pub participant: String,
    /// Create the participant (with this label) if it does not exist.
    pub create_participant: Option<Option<String>>,
    pub profile: GaitProfile,
    pub duration_s: f64,
    pub rate_hz: f64,
    /// Wall-clock speedup of batch pacing; 0 sends as fast as acks allow.
    pub speedup: f64,
    pub batch_size: usize,
    /// Press record through the API once armed instead of waiting for a
    /// researcher to do it.
    pub auto_record: bool,
    pub start_timeout: Duration,
    pub faults: Faults,
    /// Drop the connection without Stop after this many acked batches.
    pub abort_after_batches: Option<usize>,
    pub device_meta: BTreeMap<String, String>,
}

impl ClientConfig {
    pub fn new(server: &str, project: &str, secret: &str, participant: &str, profile: GaitProfile) -> Self {
        Self {
            server: server.to_string(),
            project: project.to_string(),
            secret: secret.to_string(),
            participant: participant.to_string(),
            create_participant: None,
            profile,
            duration_s: 360.0,
            rate_hz: 50.0,
            speedup: 1.0,
            batch_size: 50,
            auto_record: false,
            start_timeout: Duration::from_secs(60),
            faults: Faults::default(),
            abort_after_batches: None,
            device_meta: BTreeMap::from([("device".to_string(), "simulator".to_string())]),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub session_id: String,
    pub participant_id: String,
    pub batches_total: usize,
    pub batches_acked: usize,
    pub acked_seq: u64,
    pub samples_acked: usize,
    pub duplicates_sent: usize,
    pub gaps_injected: usize,
    pub retransmits: usize,
    pub stopped_by_server: bool,
    pub aborted: bool,
    pub elapsed_s: f64,
}

type Socket = WebSocket<MaybeTlsStream<TcpStream>>;

struct Stream {
    ws: Socket,
}

impl Stream {
    fn open(api: &ApiClient) -> Result<Self, ClientError> {
        let mut req = api.ws_url().into_client_request().map_err(transport)?;
        let token = api.token().ok_or_else(|| ClientError::Config("not logged in".into()))?;
        req.headers_mut()
            .insert("Authorization", format!("Bearer {token}").parse().map_err(transport)?);
        let (ws, _) = tungstenite::connect(req).map_err(transport)?;
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_nodelay(true).map_err(transport)?;
        }
        Ok(Self { ws })
    }

    fn send(&mut self, msg: &Message) -> Result<(), ClientError> {
        let line = protocol::encode(msg).map_err(|e| ClientError::Protocol(e.to_string()))?;
        let text = String::from_utf8(line).map_err(transport)?;
        self.ws.send(WsMessage::Text(text.into())).map_err(transport)
    }

    /// Next message, or `None` when the deadline passes.
    fn recv(&mut self, deadline: Instant) -> Result<Option<Message>, ClientError> {
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            if let MaybeTlsStream::Plain(s) = self.ws.get_ref() {
                s.set_read_timeout(Some(left)).map_err(transport)?;
            }
            match self.ws.read() {
                Ok(WsMessage::Text(t)) => {
                    return protocol::decode(t.as_str().as_bytes())
                        .map(Some)
                        .map_err(|e| ClientError::Protocol(e.to_string()));
                }
                Ok(WsMessage::Close(_)) => return Err(ClientError::Transport("server closed the stream".into())),
                Ok(_) => continue,
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
                {
                    return Ok(None)
                }
                Err(e) => return Err(transport(e)),
            }
        }
    }

    fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}

const REPLY_TIMEOUT: Duration = Duration::from_secs(30);

enum Reply {
    Acked(u64),
    Gap(u64),
    Stopped,
}

fn await_reply(stream: &mut Stream) -> Result<Reply, ClientError> {
    let deadline = Instant::now() + REPLY_TIMEOUT;
    loop {
        match stream.recv(deadline)? {
            None => return Err(ClientError::Timeout("batch ack")),
            Some(Message::Ack { seq: Some(s), .. }) => return Ok(Reply::Acked(s)),
            Some(Message::Error {
                code: ErrorCode::SeqGap,
                expected_seq: Some(e),
                ..
            }) => return Ok(Reply::Gap(e)),
            Some(Message::Stop { .. }) => return Ok(Reply::Stopped),
            Some(Message::Error { code, message, .. }) => {
                return Err(ClientError::Protocol(format!("server rejected batch: {code:?}: {message}")))
            }
            Some(_) => continue,
        }
    }
}

/// Streams one synthetic session end to end: login, session creation,
/// Hello, wait for the record button, paced batches with optional fault
/// injection, Stop.
pub fn run_client(cfg: &ClientConfig) -> Result<ClientReport, ClientError> {
    if cfg.batch_size == 0 || cfg.batch_size > MAX_BATCH {
        return Err(ClientError::Config(format!("batch size must be 1..={MAX_BATCH}")));
    }
    if !(cfg.speedup >= 0.0 && cfg.speedup.is_finite()) {
        return Err(ClientError::Config("speedup must be a finite number ≥ 0".into()));
    }
    let (track, _) = synthesize(&cfg.profile, cfg.duration_s, cfg.rate_hz).map_err(|e| ClientError::Config(e.to_string()))?;
    let batches: Vec<Vec<SensorSample>> = track.samples.chunks(cfg.batch_size).map(<[_]>::to_vec).collect();

    let mut api = ApiClient::new(&cfg.server);
    api.login(&cfg.project, &cfg.secret)?;
    if let Some(label) = &cfg.create_participant {
        let body = serde_json::json!({ "id": cfg.participant, "class_label": label });
        match api.post::<Value>("/api/v1/participants", &body) {
            Ok(_) => {}
            Err(e) if e.status() == Some(409) => {}
            Err(e) => return Err(e),
        }
    }
    let session: SessionSummary = api.post(
        "/api/v1/sessions",
        &serde_json::json!({
            "participant_id": cfg.participant,
            "device_meta": cfg.device_meta,
            "nominal_rate_hz": cfg.rate_hz,
        }),
    )?;
    let sid = session.id.clone();
    let mut report = ClientReport {
        session_id: sid.clone(),
        participant_id: cfg.participant.clone(),
        batches_total: batches.len(),
        ..ClientReport::default()
    };

    let mut stream = Stream::open(&api)?;
    stream.send(&Message::Hello {
        session_id: sid.clone(),
        participant: cfg.participant.clone(),
    })?;
    let deadline = Instant::now() + REPLY_TIMEOUT;
    loop {
        match stream.recv(deadline)? {
            Some(Message::Armed { .. }) => break,
            Some(Message::Error { code, message, .. }) => {
                return Err(ClientError::Protocol(format!("hello rejected: {code:?}: {message}")))
            }
            Some(_) => continue,
            None => return Err(ClientError::Timeout("Armed")),
        }
    }
    if cfg.auto_record {
        api.post::<Value>(&format!("/api/v1/sessions/{sid}/record"), &Value::Null)?;
    }
    let deadline = Instant::now() + cfg.start_timeout;
    loop {
        match stream.recv(deadline)? {
            Some(Message::Start { .. }) => break,
            Some(Message::Stop { .. }) => {
                report.stopped_by_server = true;
                stream.close();
                return Ok(report);
            }
            Some(_) => continue,
            None => return Err(ClientError::Timeout("Start")),
        }
    }

    let started = Instant::now();
    let mut rng = SeedStream::new(cfg.faults.seed).derive("faults").derive(&cfg.participant).rng();
    let batch_msg = |i: usize| Message::SampleBatch {
        session_id: sid.clone(),
        seq: FIRST_SEQ + i as u64,
        samples: batches[i].clone(),
    };
    let mut i = 0;
    'send: while i < batches.len() {
        if cfg.speedup > 0.0 {
            let due = Duration::from_secs_f64(batches[i].last().map_or(0.0, |s| s.t) / cfg.speedup);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        if i + 1 < batches.len() && rng.random::<f64>() < cfg.faults.gap_rate {
            report.gaps_injected += 1;
            stream.send(&batch_msg(i + 1))?;
            match await_reply(&mut stream)? {
                Reply::Gap(_) => {}
                Reply::Stopped => {
                    report.stopped_by_server = true;
                    break 'send;
                }
                Reply::Acked(_) => return Err(ClientError::Protocol("server accepted a batch past a gap".into())),
            }
        }
        stream.send(&batch_msg(i))?;
        loop {
            match await_reply(&mut stream)? {
                Reply::Acked(s) if s >= FIRST_SEQ + i as u64 => break,
                Reply::Acked(_) => continue,
                Reply::Gap(expected) => {
                    // Resume from what the server has.
                    report.retransmits += 1;
                    i = (expected - FIRST_SEQ) as usize;
                    continue 'send;
                }
                Reply::Stopped => {
                    report.stopped_by_server = true;
                    break 'send;
                }
            }
        }
        report.batches_acked += 1;
        report.acked_seq = FIRST_SEQ + i as u64;
        report.samples_acked += batches[i].len();
        if rng.random::<f64>() < cfg.faults.dup_rate {
            report.duplicates_sent += 1;
            stream.send(&batch_msg(i))?;
            match await_reply(&mut stream)? {
                Reply::Acked(_) | Reply::Gap(_) => {}
                Reply::Stopped => {
                    report.stopped_by_server = true;
                    break 'send;
                }
            }
        }
        i += 1;
        if cfg.abort_after_batches == Some(report.batches_acked) {
            report.aborted = true;
            report.elapsed_s = started.elapsed().as_secs_f64();
            drop(stream);
            return Ok(report);
        }
    }
    if !report.stopped_by_server {
        stream.send(&Message::Stop {
            session_id: sid.clone(),
            reason: Some("recording complete".into()),
        })?;
        let deadline = Instant::now() + REPLY_TIMEOUT;
        loop {
            match stream.recv(deadline)? {
                Some(Message::Ack { seq: None, .. }) => break,
                Some(_) => continue,
                None => return Err(ClientError::Timeout("Stop ack")),
            }
        }
    }
    report.elapsed_s = started.elapsed().as_secs_f64();
    stream.close();
    Ok(report)
}
