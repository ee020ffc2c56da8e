//! On-disk session layout: `<root>/<project>/<session-id>/{track.csv,meta.json}`.
//!
//! `track.csv` has the header `t,ax,ay,az` followed by any auxiliary channel
//! names, then one row per sample with every number printed with exactly
//! nine decimals and `\n` line endings. A missing auxiliary value is an
//! empty cell. `meta.json` carries everything else about the session.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActivitySegment, EventMark, ModelError, RecordingSession, SensorSample, SignalTrack};
use crate::protocol::SessionState;

pub const TRACK_FILE: &str = "track.csv";
pub const META_FILE: &str = "meta.json";
const DECIMALS: usize = 9;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session is {0:?}; only finalized sessions can be saved")]
    NotFinalized(SessionState),
    #[error("session not found: {0}")]
    NotFound(PathBuf),
    #[error("{file} row {row}: {reason}")]
    MalformedRow { file: &'static str, row: usize, reason: String },
    #[error("track.csv row {row}: timestamp does not increase")]
    NonMonotone { row: usize },
    #[error("malformed meta.json: {0}")]
    MalformedMeta(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionMeta {
    session_id: String,
    project_id: String,
    participant_id: String,
    #[serde(default)]
    label: Option<String>,
    nominal_rate_hz: f64,
    #[serde(default)]
    aux_channels: Vec<String>,
    #[serde(default)]
    segments: Vec<ActivitySegment>,
    #[serde(default)]
    marks: Vec<EventMark>,
    #[serde(default)]
    video_sync_offset_s: Option<f64>,
    #[serde(default)]
    device_meta: BTreeMap<String, String>,
}

/// Directory holding one session's files.
pub fn session_dir(root: &Path, project_id: &str, session_id: &str) -> PathBuf {
    root.join(project_id).join(session_id)
}

/// Rounds a value to the precision used in `track.csv`.
pub fn quantize(x: f64) -> f64 {
    format!("{x:.DECIMALS$}").parse().expect("formatted float parses")
}

/// Returns a copy of the session with every sample value rounded to the
/// persisted precision. `load_session(save_session(s)) == quantized(s)`.
pub fn quantized(session: &RecordingSession) -> RecordingSession {
    let mut s = session.clone();
    for sample in &mut s.track.samples {
        sample.t = quantize(sample.t);
        sample.ax = quantize(sample.ax);
        sample.ay = quantize(sample.ay);
        sample.az = quantize(sample.az);
        for v in sample.aux.values_mut() {
            *v = quantize(*v);
        }
    }
    s
}

/// Renders the CSV body for a track.
pub fn track_to_csv(track: &SignalTrack) -> String {
    let aux = track.aux_channels();
    let mut out = String::with_capacity(track.len() * 64 + 32);
    out.push_str("t,ax,ay,az");
    for name in &aux {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for s in &track.samples {
        let _ = write!(out, "{:.9},{:.9},{:.9},{:.9}", s.t, s.ax, s.ay, s.az);
        for name in &aux {
            out.push(',');
            if let Some(v) = s.aux.get(name) {
                let _ = write!(out, "{v:.9}");
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a CSV body produced by [`track_to_csv`]. Row numbers in errors are
/// 1-based data rows (the header is not counted).
pub fn track_from_csv(body: &str, nominal_rate_hz: f64) -> Result<SignalTrack, StoreError> {
    let mut lines = body.lines();
    let header = lines.next().ok_or(StoreError::MalformedRow {
        file: TRACK_FILE,
        row: 0,
        reason: "missing header".into(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 4 || columns[..4] != ["t", "ax", "ay", "az"] {
        return Err(StoreError::MalformedRow {
            file: TRACK_FILE,
            row: 0,
            reason: format!("unexpected header {header:?}"),
        });
    }
    let aux_names = &columns[4..];

    let mut samples = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let bad = |reason: String| StoreError::MalformedRow {
            file: TRACK_FILE,
            row,
            reason,
        };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(bad(format!("expected {} cells, found {}", columns.len(), cells.len())));
        }
        let num = |cell: &str| -> Result<f64, StoreError> {
            let v: f64 = cell.parse().map_err(|_| bad(format!("not a number: {cell:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("non-finite value {cell:?}")))
            }
        };
        let mut sample = SensorSample::new(num(cells[0])?, num(cells[1])?, num(cells[2])?, num(cells[3])?);
        for (name, cell) in aux_names.iter().zip(&cells[4..]) {
            if !cell.is_empty() {
                sample.aux.insert((*name).to_string(), num(cell)?);
            }
        }
        if sample.t < 0.0 {
            return Err(bad("negative timestamp".into()));
        }
        if sample.t <= prev_t {
            return Err(StoreError::NonMonotone { row });
        }
        prev_t = sample.t;
        samples.push(sample);
    }
    Ok(SignalTrack {
        samples,
        nominal_rate_hz,
    })
}

/// Writes a finalized session and returns the paths written.
pub fn save_session(session: &RecordingSession, root: &Path) -> Result<Vec<PathBuf>, StoreError> {
    if session.state != SessionState::Finalized {
        return Err(StoreError::NotFinalized(session.state));
    }
    session.track.validate()?;
    if session.track.is_empty() {
        return Err(ModelError::EmptyTrack.into());
    }
    // Two timestamps closer than the printed precision would collapse.
    if let Some(index) = crate::model::first_non_increasing(session.track.samples.iter().map(|s| quantize(s.t))) {
        return Err(ModelError::NonMonotone { index }.into());
    }

    let dir = session_dir(root, &session.project_id, &session.id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let track_path = dir.join(TRACK_FILE);
    fs::write(&track_path, track_to_csv(&session.track)).map_err(io_err(&track_path))?;

    let meta = SessionMeta {
        session_id: session.id.clone(),
        project_id: session.project_id.clone(),
        participant_id: session.participant_id.clone(),
        label: session.class_label.clone(),
        nominal_rate_hz: session.track.nominal_rate_hz,
        aux_channels: session.track.aux_channels(),
        segments: session.activity_segments.clone(),
        marks: session.gait_event_marks.clone(),
        video_sync_offset_s: session.video_sync_offset_s,
        device_meta: session.device_meta.clone(),
    };
    let meta_path = dir.join(META_FILE);
    let mut body = serde_json::to_string_pretty(&meta)?;
    body.push('\n');
    fs::write(&meta_path, body).map_err(io_err(&meta_path))?;

    Ok(vec![track_path, meta_path])
}

/// Reads a session back from disk.
pub fn load_session(root: &Path, project_id: &str, session_id: &str) -> Result<RecordingSession, StoreError> {
    let dir = session_dir(root, project_id, session_id);
    let meta_path = dir.join(META_FILE);
    let track_path = dir.join(TRACK_FILE);
    let read = |path: &Path| match fs::read_to_string(path) {
        Ok(body) => Ok(body),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound(path.to_path_buf())),
        Err(e) => Err(io_err(path)(e)),
    };
    let meta: SessionMeta = serde_json::from_str(&read(&meta_path)?)?;
    let track = track_from_csv(&read(&track_path)?, meta.nominal_rate_hz)?;
    track.validate()?;

    Ok(RecordingSession {
        id: meta.session_id,
        project_id: meta.project_id,
        participant_id: meta.participant_id,
        state: SessionState::Finalized,
        track,
        activity_segments: meta.segments,
        gait_event_marks: meta.marks,
        video_sync_offset_s: meta.video_sync_offset_s,
        class_label: meta.label,
        device_meta: meta.device_meta,
    })
}

/// Ids of all persisted sessions of a project, sorted.
pub fn list_sessions(root: &Path, project_id: &str) -> Result<Vec<String>, StoreError> {
    let dir = root.join(project_id);
    let entries = match fs::read_dir(&dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&dir)(e)),
    };
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(io_err(&dir))?;
        if entry.path().join(META_FILE).is_file() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::GaitEventName;

    fn session(n: usize) -> RecordingSession {
        let mut s = RecordingSession::new("01TEST", "proj", "p1", 50.0);
        s.track.samples = (0..n)
            .map(|i| SensorSample::new(i as f64 * 0.02, 0.01 * i as f64, -0.25, 1.0))
            .collect();
        s.state = SessionState::Finalized;
        s
    }

    #[test]
    fn three_samples_four_lines() {
        let dir = tempfile::tempdir().unwrap();
        let paths = save_session(&session(3), dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let body = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(body.lines().count(), 4);
        assert_eq!(body.lines().next(), Some("t,ax,ay,az"));
        assert_eq!(body.lines().nth(1), Some("0.000000000,0.000000000,-0.250000000,1.000000000"));
        assert!(!body.contains('\r'));
    }

    #[test]
    fn two_segments_in_meta() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(100);
        s.add_segment(0.0, 1.0, "walk").unwrap();
        s.add_segment(0.5, 2.0, "6MWT").unwrap();
        let paths = save_session(&s, dir.path()).unwrap();
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(&paths[1]).unwrap()).unwrap();
        assert_eq!(meta["segments"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn refuses_live_session() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(3);
        s.state = SessionState::Streaming;
        assert!(matches!(save_session(&s, dir.path()), Err(StoreError::NotFinalized(_))));
    }

    #[test]
    fn round_trip_with_aux_and_marks() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(20);
        s.track.samples[3].aux.insert("gyro_x".into(), 0.123456789);
        s.add_mark(0.1, GaitEventName::InitialContact).unwrap();
        s.add_mark(0.1, GaitEventName::ToeOff).unwrap();
        s.set_video_sync(1.25).unwrap();
        s.class_label = Some("DMD".into());
        save_session(&s, dir.path()).unwrap();
        let back = load_session(dir.path(), "proj", "01TEST").unwrap();
        assert_eq!(back, quantized(&s));
    }

    #[test]
    fn backward_timestamp_names_row() {
        let mut body = String::from("t,ax,ay,az\n");
        for i in 0..10 {
            let t = if i == 6 { 0.01 } else { i as f64 * 0.02 };
            body.push_str(&format!("{t:.9},0,0,1\n"));
        }
        match track_from_csv(&body, 50.0) {
            Err(StoreError::NonMonotone { row }) => assert_eq!(row, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_cell() {
        let body = "t,ax,ay,az\n0.0,1,2,3\n0.1,x,2,3\n";
        assert!(matches!(
            track_from_csv(body, 50.0),
            Err(StoreError::MalformedRow { row: 2, .. })
        ));
    }

    #[test]
    fn empty_directory_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_session(dir.path(), "proj", "nope"),
            Err(StoreError::NotFound(_))
        ));
        assert!(list_sessions(dir.path(), "proj").unwrap().is_empty());
    }

    #[test]
    fn quantize_is_idempotent() {
        for x in [0.1, 1.0 / 3.0, -2.718281828459045, 359.98, 1e-10] {
            let q = quantize(x);
            assert_eq!(quantize(q), q);
        }
    }
}
