use std::path::Path;

use gaitway_core::model::SensorSample;
use gaitway_core::protocol::{ErrorCode, Message, SessionState};
use gaitway_core::store::{load_session, session_dir};
use gaitway_server::service::{Connection, NewParticipant, NewSession};
use gaitway_server::{ProjectSecret, SecretFile, Service, ServiceConfig};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver};

fn secrets() -> SecretFile {
    SecretFile {
        projects: vec![ProjectSecret {
            id: "clinic".into(),
            name: None,
            secret: "s3cret".into(),
            labels: vec!["DMD".into(), "control".into()],
            step_length_k: None,
        }],
    }
}

fn open(dir: &Path) -> Service {
    Service::open(ServiceConfig::new(dir), Some(&secrets())).unwrap().0
}

fn session(svc: &Service, participant: &str) -> String {
    let _ = svc.create_participant(
        "clinic",
        NewParticipant {
            id: Some(participant.into()),
            class_label: Some("control".into()),
            ..Default::default()
        },
    );
    svc.create_session(
        "clinic",
        NewSession {
            participant_id: participant.into(),
            device_meta: Default::default(),
            nominal_rate_hz: Some(50.0),
        },
    )
    .unwrap()
    .id
}

fn conn(svc: &Service) -> (Connection, UnboundedReceiver<Message>) {
    let (tx, rx) = unbounded_channel();
    (svc.connect("clinic", tx), rx)
}

fn drain(rx: &mut UnboundedReceiver<Message>) -> Vec<Message> {
    let mut out = Vec::new();
    while let Ok(m) = rx.try_recv() {
        out.push(m);
    }
    out
}

fn batch(sid: &str, seq: u64, n: usize) -> Message {
    let t0 = (seq - 1) as f64 * n as f64 * 0.02;
    Message::SampleBatch {
        session_id: sid.into(),
        seq,
        samples: (0..n).map(|i| SensorSample::new(t0 + i as f64 * 0.02, 0.01, 0.02, 1.0)).collect(),
    }
}

fn hello(sid: &str, p: &str) -> Message {
    Message::Hello {
        session_id: sid.into(),
        participant: p.into(),
    }
}

fn error_code(m: &Message) -> Option<ErrorCode> {
    match m {
        Message::Error { code, .. } => Some(*code),
        _ => None,
    }
}

/// Hello, record, three batches.
fn streaming(svc: &Service, p: &str) -> (String, Connection, UnboundedReceiver<Message>) {
    let sid = session(svc, p);
    let (mut c, mut rx) = conn(svc);
    svc.on_message(&mut c, hello(&sid, p));
    assert_eq!(drain(&mut rx), vec![Message::Armed { session_id: sid.clone() }]);
    svc.press_record("clinic", &sid).unwrap();
    assert_eq!(drain(&mut rx), vec![Message::Start { session_id: sid.clone() }]);
    for seq in 1..=3 {
        svc.on_message(&mut c, batch(&sid, seq, 10));
    }
    let acks: Vec<Option<u64>> = drain(&mut rx)
        .into_iter()
        .map(|m| match m {
            Message::Ack { seq, .. } => seq,
            other => panic!("unexpected {other:?}"),
        })
        .collect();
    assert_eq!(acks, vec![Some(1), Some(2), Some(3)]);
    (sid, c, rx)
}

#[test]
fn batch_before_record_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let sid = session(&svc, "p1");
    let (mut c, mut rx) = conn(&svc);
    svc.on_message(&mut c, hello(&sid, "p1"));
    drain(&mut rx);
    svc.on_message(&mut c, batch(&sid, 1, 5));
    let out = drain(&mut rx);
    assert_eq!(error_code(&out[0]), Some(ErrorCode::NotStreaming));
    assert_eq!(svc.session("clinic", &sid).unwrap().n_samples, 0);
}

#[test]
fn record_requires_armed_client() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let sid = session(&svc, "p1");
    let e = svc.press_record("clinic", &sid).unwrap_err();
    assert_eq!(e.status(), 409);
    assert_eq!(e.to_string(), "client not armed");
    assert_eq!(svc.stop("clinic", &sid).unwrap_err().status(), 409);
}

#[test]
fn double_press_sends_one_start() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let sid = session(&svc, "p1");
    let (mut c, mut rx) = conn(&svc);
    svc.on_message(&mut c, hello(&sid, "p1"));
    drain(&mut rx);
    svc.press_record("clinic", &sid).unwrap();
    svc.press_record("clinic", &sid).unwrap();
    assert_eq!(drain(&mut rx), vec![Message::Start { session_id: sid }]);
}

#[test]
fn duplicate_and_gap_handling() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let (sid, mut c, mut rx) = streaming(&svc, "p1");
    svc.on_message(&mut c, batch(&sid, 2, 10));
    assert_eq!(drain(&mut rx), vec![Message::Ack { session_id: sid.clone(), seq: Some(3) }]);
    svc.on_message(&mut c, batch(&sid, 5, 10));
    match &drain(&mut rx)[0] {
        Message::Error { code, expected_seq, .. } => {
            assert_eq!(*code, ErrorCode::SeqGap);
            assert_eq!(*expected_seq, Some(4));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(svc.session("clinic", &sid).unwrap().n_samples, 30);
}

#[test]
fn batch_going_back_in_time_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let (sid, mut c, mut rx) = streaming(&svc, "p1");
    let mut b = batch(&sid, 4, 10);
    if let Message::SampleBatch { samples, .. } = &mut b {
        samples.iter_mut().for_each(|s| s.t -= 1.0);
    }
    svc.on_message(&mut c, b);
    assert_eq!(error_code(&drain(&mut rx)[0]), Some(ErrorCode::BadBatch));
    // seq did not advance
    svc.on_message(&mut c, batch(&sid, 4, 10));
    assert_eq!(drain(&mut rx), vec![Message::Ack { session_id: sid.clone(), seq: Some(4) }]);
}

#[test]
fn client_stop_finalizes_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let (sid, mut c, mut rx) = streaming(&svc, "p1");
    svc.on_message(
        &mut c,
        Message::Stop {
            session_id: sid.clone(),
            reason: None,
        },
    );
    assert_eq!(drain(&mut rx), vec![Message::Ack { session_id: sid.clone(), seq: None }]);
    let s = svc.session("clinic", &sid).unwrap();
    assert_eq!(s.state, SessionState::Finalized);
    assert!(s.persisted);
    let loaded = load_session(dir.path(), "clinic", &sid).unwrap();
    assert_eq!(loaded.track.len(), 30);
    assert_eq!(loaded.class_label.as_deref(), Some("control"));
    assert!(!session_dir(dir.path(), "clinic", &sid).join("ingest.log").exists());
    // late batch
    svc.on_message(&mut c, batch(&sid, 4, 10));
    assert_eq!(error_code(&drain(&mut rx)[0]), Some(ErrorCode::NotStreaming));
}

#[test]
fn researcher_stop_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let (sid, _c, mut rx) = streaming(&svc, "p1");
    let a = svc.stop("clinic", &sid).unwrap();
    assert!(matches!(drain(&mut rx)[..], [Message::Stop { .. }]));
    let b = svc.stop("clinic", &sid).unwrap();
    assert_eq!(a, b);
    assert!(drain(&mut rx).is_empty());
    assert_eq!(load_session(dir.path(), "clinic", &sid).unwrap().track.len(), 30);
}

#[test]
fn disconnect_keeps_acked_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let (sid, mut c, _rx) = streaming(&svc, "p1");
    svc.disconnect(&mut c);
    let s = svc.session("clinic", &sid).unwrap();
    assert_eq!(s.state, SessionState::Finalized);
    assert_eq!(s.stop_reason.as_deref(), Some("client disconnected"));
    assert_eq!(load_session(dir.path(), "clinic", &sid).unwrap().track.len(), 30);
}

#[test]
fn ready_client_stop_or_disconnect_returns_to_off() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let sid = session(&svc, "p1");
    let (mut c, mut rx) = conn(&svc);
    svc.on_message(&mut c, hello(&sid, "p1"));
    svc.on_message(
        &mut c,
        Message::Stop {
            session_id: sid.clone(),
            reason: None,
        },
    );
    drain(&mut rx);
    assert_eq!(svc.session("clinic", &sid).unwrap().state, SessionState::Off);
    // re-arm on a new connection, then drop it
    let (mut c2, mut rx2) = conn(&svc);
    svc.on_message(&mut c2, hello(&sid, "p1"));
    assert_eq!(drain(&mut rx2), vec![Message::Armed { session_id: sid.clone() }]);
    svc.disconnect(&mut c2);
    let s = svc.session("clinic", &sid).unwrap();
    assert_eq!(s.state, SessionState::Off);
    assert!(!s.connected);
}

#[test]
fn second_connection_is_busy() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let sid = session(&svc, "p1");
    let (mut a, _ra) = conn(&svc);
    let (mut b, mut rb) = conn(&svc);
    svc.on_message(&mut a, hello(&sid, "p1"));
    svc.on_message(&mut b, hello(&sid, "p1"));
    assert_eq!(error_code(&drain(&mut rb)[0]), Some(ErrorCode::Busy));
}

#[test]
fn one_live_session_per_participant() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let s1 = session(&svc, "p1");
    let s2 = session(&svc, "p1");
    let (mut a, _ra) = conn(&svc);
    svc.on_message(&mut a, hello(&s1, "p1"));
    let e = svc
        .create_session(
            "clinic",
            NewSession {
                participant_id: "p1".into(),
                device_meta: Default::default(),
                nominal_rate_hz: None,
            },
        )
        .unwrap_err();
    assert_eq!(e.status(), 409);
    let (mut b, mut rb) = conn(&svc);
    svc.on_message(&mut b, hello(&s2, "p1"));
    assert_eq!(error_code(&drain(&mut rb)[0]), Some(ErrorCode::Busy));
    svc.disconnect(&mut a);
    svc.on_message(&mut b, hello(&s2, "p1"));
    assert!(matches!(drain(&mut rb)[..], [Message::Armed { .. }]));
}

#[test]
fn hello_checks_participant_and_project() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let sid = session(&svc, "p1");
    let (mut c, mut rx) = conn(&svc);
    svc.on_message(&mut c, hello(&sid, "p2"));
    assert_eq!(error_code(&drain(&mut rx)[0]), Some(ErrorCode::UnknownSession));
    let (tx, mut rx2) = unbounded_channel();
    let mut other = svc.connect("elsewhere", tx);
    svc.on_message(&mut other, hello(&sid, "p1"));
    assert_eq!(error_code(&drain(&mut rx2)[0]), Some(ErrorCode::UnknownSession));
}

#[test]
fn malformed_line_gets_error() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let (mut c, mut rx) = conn(&svc);
    svc.on_line(&mut c, b"{\"kind\":\"Hello\"");
    assert_eq!(error_code(&drain(&mut rx)[0]), Some(ErrorCode::Malformed));
}

#[test]
fn crash_recovery_finalizes_logged_batches() {
    let dir = tempfile::tempdir().unwrap();
    let sid = {
        let svc = open(dir.path());
        let (sid, _c, _rx) = streaming(&svc, "p1");
        // an armed session with no samples is discarded on recovery
        let other = session(&svc, "p2");
        let (mut c2, _r2) = conn(&svc);
        svc.on_message(&mut c2, hello(&other, "p2"));
        sid
        // dropped without disconnect, as in a crash
    };
    let (svc, report) = Service::open(ServiceConfig::new(dir.path()), None).unwrap();
    assert_eq!(report.sessions_recovered, 1);
    assert_eq!(report.sessions_discarded, 1);
    let s = svc.session("clinic", &sid).unwrap();
    assert_eq!(s.state, SessionState::Finalized);
    assert_eq!(s.n_samples, 30);
    assert_eq!(load_session(dir.path(), "clinic", &sid).unwrap().track.len(), 30);
}
