//! Shared domain types: samples, tracks, participants, projects and sessions.
//!
//! Acceleration is carried in g (1 g = 9.80665 m/s²) everywhere in this
//! module. Conversion to SI happens at the feature-extraction boundary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::SessionState;
use crate::signal::GaitEventName;

/// Standard gravity in m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Default device sampling rate.
pub const DEFAULT_RATE_HZ: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },
    #[error("timestamps must strictly increase (sample {index})")]
    NonMonotone { index: usize },
    #[error("track is empty")]
    EmptyTrack,
    #[error("nominal rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("segment [{start_s}, {end_s}] is invalid for a track ending at {track_end_s}")]
    BadSegment {
        start_s: f64,
        end_s: f64,
        track_end_s: f64,
    },
    #[error("mark time {t_s} is outside the track [0, {track_end_s}]")]
    MarkOutOfRange { t_s: f64, track_end_s: f64 },
    #[error("video sync offset must be finite")]
    NonFiniteOffset,
}

/// One tri-axial accelerometer reading, with optional named auxiliary channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    /// Seconds since the session entered streaming.
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aux: BTreeMap<String, f64>,
}

impl SensorSample {
    pub fn new(t: f64, ax: f64, ay: f64, az: f64) -> Self {
        Self {
            t,
            ax,
            ay,
            az,
            aux: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.t.is_finite() || self.t < 0.0 {
            return Err(format!("t must be finite and non-negative, got {}", self.t));
        }
        if !(self.ax.is_finite() && self.ay.is_finite() && self.az.is_finite()) {
            return Err("acceleration must be finite".into());
        }
        if let Some((name, _)) = self.aux.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("aux channel {name} is not finite"));
        }
        Ok(())
    }
}

/// A monotone stream of samples at a nominal rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrack {
    pub samples: Vec<SensorSample>,
    pub nominal_rate_hz: f64,
}

impl SignalTrack {
    pub fn new(nominal_rate_hz: f64) -> Self {
        Self {
            samples: Vec::new(),
            nominal_rate_hz,
        }
    }

    /// Builds a track, checking every sample and the timestamp ordering.
    pub fn from_samples(samples: Vec<SensorSample>, nominal_rate_hz: f64) -> Result<Self, ModelError> {
        let track = Self {
            samples,
            nominal_rate_hz,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.nominal_rate_hz.is_finite() && self.nominal_rate_hz > 0.0) {
            return Err(ModelError::BadRate(self.nominal_rate_hz));
        }
        for (index, s) in self.samples.iter().enumerate() {
            s.validate()
                .map_err(|reason| ModelError::InvalidSample { index, reason })?;
        }
        if let Some(index) = first_non_increasing(self.samples.iter().map(|s| s.t)) {
            return Err(ModelError::NonMonotone { index });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time covered by the samples: the span between the first and last
    /// timestamp plus one nominal sample period.
    pub fn duration_s(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(first), Some(last)) => last.t - first.t + 1.0 / self.nominal_rate_hz,
            _ => 0.0,
        }
    }

    /// End of the covered interval, measured on the session clock.
    pub fn end_s(&self) -> f64 {
        self.samples
            .last()
            .map(|s| s.t + 1.0 / self.nominal_rate_hz)
            .unwrap_or(0.0)
    }

    /// True when the median inter-sample gap deviates from the nominal
    /// period by more than 20%.
    pub fn is_irregular(&self) -> bool {
        if self.samples.len() < 2 {
            return false;
        }
        let mut gaps: Vec<f64> = self.samples.windows(2).map(|w| w[1].t - w[0].t).collect();
        gaps.sort_by(f64::total_cmp);
        let median = gaps[gaps.len() / 2];
        let period = 1.0 / self.nominal_rate_hz;
        (median - period).abs() > 0.2 * period
    }

    /// Sorted union of auxiliary channel names across all samples.
    pub fn aux_channels(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .samples
            .iter()
            .flat_map(|s| s.aux.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Index of the first element that does not strictly exceed its predecessor.
pub(crate) fn first_non_increasing(ts: impl Iterator<Item = f64>) -> Option<usize> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in ts.enumerate() {
        if t <= prev {
            return Some(i);
        }
        prev = t;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
    #[serde(default)]
    pub class_label: Option<String>,
}

impl Participant {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            demographics: BTreeMap::new(),
            class_label: None,
        }
    }
}

/// A research project with its own login and label vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub name: String,
    /// `salt$hash`, both hex encoded.
    pub credential_hash: String,
    #[serde(default)]
    pub label_set: Vec<String>,
    /// Per-project override of the step-length calibration constant.
    #[serde(default)]
    pub step_length_k: Option<f64>,
}

impl Project {
    pub fn has_label(&self, label: &str) -> bool {
        self.label_set.iter().any(|l| l == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySegment {
    pub start_s: f64,
    pub end_s: f64,
    pub activity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMark {
    pub time_s: f64,
    pub event: GaitEventName,
}

/// One participant activity capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSession {
    pub id: String,
    pub project_id: String,
    pub participant_id: String,
    pub state: SessionState,
    pub track: SignalTrack,
    #[serde(default)]
    pub activity_segments: Vec<ActivitySegment>,
    #[serde(default)]
    pub gait_event_marks: Vec<EventMark>,
    #[serde(default)]
    pub video_sync_offset_s: Option<f64>,
    /// Participant class label captured when the session was persisted.
    #[serde(default)]
    pub class_label: Option<String>,
    #[serde(default)]
    pub device_meta: BTreeMap<String, String>,
}

impl RecordingSession {
    pub fn new(
        id: impl Into<String>,
        project_id: impl Into<String>,
        participant_id: impl Into<String>,
        nominal_rate_hz: f64,
    ) -> Self {
        Self {
            id: id.into(),
            project_id: project_id.into(),
            participant_id: participant_id.into(),
            state: SessionState::Off,
            track: SignalTrack::new(nominal_rate_hz),
            activity_segments: Vec::new(),
            gait_event_marks: Vec::new(),
            video_sync_offset_s: None,
            class_label: None,
            device_meta: BTreeMap::new(),
        }
    }

    /// Appends an activity segment; overlapping segments are allowed.
    pub fn add_segment(&mut self, start_s: f64, end_s: f64, activity: impl Into<String>) -> Result<(), ModelError> {
        let track_end_s = self.track.end_s();
        let ok = start_s.is_finite()
            && end_s.is_finite()
            && start_s >= 0.0
            && start_s < end_s
            && end_s <= track_end_s + 1e-9;
        if !ok {
            return Err(ModelError::BadSegment {
                start_s,
                end_s,
                track_end_s,
            });
        }
        self.activity_segments.push(ActivitySegment {
            start_s,
            end_s,
            activity: activity.into(),
        });
        Ok(())
    }

    pub fn add_mark(&mut self, time_s: f64, event: GaitEventName) -> Result<(), ModelError> {
        let track_end_s = self.track.end_s();
        if !(time_s.is_finite() && time_s >= 0.0 && time_s <= track_end_s) {
            return Err(ModelError::MarkOutOfRange { t_s: time_s, track_end_s });
        }
        self.gait_event_marks.push(EventMark { time_s, event });
        Ok(())
    }

    pub fn set_video_sync(&mut self, offset_s: f64) -> Result<(), ModelError> {
        if !offset_s.is_finite() {
            return Err(ModelError::NonFiniteOffset);
        }
        self.video_sync_offset_s = Some(offset_s);
        Ok(())
    }

    pub fn segment_named(&self, activity: &str) -> Option<&ActivitySegment> {
        self.activity_segments.iter().find(|s| s.activity == activity)
    }
}

/// The eight per-session clinical gait features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub num_steps: usize,
    pub total_distance_m: f64,
    pub step_lengths_m: Vec<f64>,
    pub avg_step_length_m: f64,
    pub step_durations_s: Vec<f64>,
    pub total_duration_s: f64,
    pub step_frequency_hz: f64,
    pub avg_speed_mps: f64,
}

/// Column names of [`FeatureVector::as_row`].
pub const FEATURE_NAMES: [&str; 8] = [
    "num_steps",
    "total_distance_m",
    "step_length_std_m",
    "avg_step_length_m",
    "avg_step_duration_s",
    "total_duration_s",
    "step_frequency_hz",
    "avg_speed_mps",
];

impl FeatureVector {
    /// Assembles a vector from per-step lengths and durations, deriving
    /// the aggregate fields.
    pub fn from_steps(step_lengths_m: Vec<f64>, step_durations_s: Vec<f64>, total_duration_s: f64) -> Self {
        debug_assert_eq!(step_lengths_m.len(), step_durations_s.len());
        let num_steps = step_lengths_m.len();
        let total_distance_m: f64 = step_lengths_m.iter().sum();
        let avg_step_length_m = if num_steps > 0 {
            total_distance_m / num_steps as f64
        } else {
            0.0
        };
        let (step_frequency_hz, avg_speed_mps) = if total_duration_s > 0.0 {
            (num_steps as f64 / total_duration_s, total_distance_m / total_duration_s)
        } else {
            (0.0, 0.0)
        };
        Self {
            num_steps,
            total_distance_m,
            step_lengths_m,
            avg_step_length_m,
            step_durations_s,
            total_duration_s,
            step_frequency_hz,
            avg_speed_mps,
        }
    }

    /// Flattens the vector into eight scalar features. The per-step lists
    /// contribute their spread (length) and mean (duration).
    pub fn as_row(&self) -> [f64; 8] {
        let n = self.num_steps as f64;
        let avg_duration = if self.num_steps > 0 {
            self.step_durations_s.iter().sum::<f64>() / n
        } else {
            0.0
        };
        let length_std = if self.num_steps > 1 {
            let mean = self.avg_step_length_m;
            (self
                .step_lengths_m
                .iter()
                .map(|l| (l - mean) * (l - mean))
                .sum::<f64>()
                / n)
                .sqrt()
        } else {
            0.0
        };
        [
            n,
            self.total_distance_m,
            length_std,
            self.avg_step_length_m,
            avg_duration,
            self.total_duration_s,
            self.step_frequency_hz,
            self.avg_speed_mps,
        ]
    }

    /// Checks the arithmetic identities tying the derived fields together,
    /// at the given relative tolerance. Returns a description of the first
    /// violation.
    pub fn check_identities(&self, rel_tol: f64) -> Result<(), String> {
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        if self.num_steps != self.step_lengths_m.len() || self.num_steps != self.step_durations_s.len() {
            return Err(format!(
                "num_steps {} vs {} lengths and {} durations",
                self.num_steps,
                self.step_lengths_m.len(),
                self.step_durations_s.len()
            ));
        }
        let sum: f64 = self.step_lengths_m.iter().sum();
        if !close(self.total_distance_m, sum) && !(sum == 0.0 && self.total_distance_m == 0.0) {
            return Err(format!("total distance {} != sum {}", self.total_distance_m, sum));
        }
        if self.total_duration_s > 0.0 {
            let speed = self.total_distance_m / self.total_duration_s;
            if !close(self.avg_speed_mps, speed) && !(speed == 0.0 && self.avg_speed_mps == 0.0) {
                return Err(format!("avg speed {} != {}", self.avg_speed_mps, speed));
            }
            let freq = self.num_steps as f64 / self.total_duration_s;
            if !close(self.step_frequency_hz, freq) && !(freq == 0.0 && self.step_frequency_hz == 0.0) {
                return Err(format!("step frequency {} != {}", self.step_frequency_hz, freq));
            }
        }
        let scalars = [
            self.total_distance_m,
            self.avg_step_length_m,
            self.total_duration_s,
            self.step_frequency_hz,
            self.avg_speed_mps,
        ];
        let lists = self.step_lengths_m.iter().chain(&self.step_durations_s);
        if scalars.iter().chain(lists).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("negative or non-finite field".into());
        }
        Ok(())
    }
}
