//! Clinical gait features from a finalized accelerometer track.
//!
//! The pipeline is `reorient → detect_steps → step_length`, and
//! [`extract_features`] composes it into a [`FeatureVector`].

mod filter;
mod orient;
mod steps;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::lowpass;
pub use orient::{reorient, OrientedSignal};
pub use steps::{detect_steps, find_peaks, step_length, StepEvent};

use crate::model::{FeatureVector, ModelError, RecordingSession, FEATURE_NAMES};

/// Name of the activity segment used by default for feature extraction.
pub const SIX_MINUTE_WALK: &str = "6MWT";

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("signal lasts {duration_s:.3} s; at least 2 s required")]
    TooShort { duration_s: f64 },
    #[error("device orientation indeterminate: no axis shows gravity")]
    IndeterminateOrientation,
    #[error("cutoff {cutoff_hz} Hz outside (0, {rate_hz}/2)")]
    CutoffOutOfRange { cutoff_hz: f64, rate_hz: f64 },
    #[error("segment [{start_s}, {end_s}] is not within the track")]
    SegmentOutOfRange { start_s: f64, end_s: f64 },
    #[error("correlation needs at least 2 feature vectors, got {0}")]
    TooFewVectors(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Tunables of the feature pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Low-pass cutoff applied before band-power ranking and peak picking.
    pub cutoff_hz: f64,
    pub min_prominence_mps2: f64,
    pub min_step_spacing_s: f64,
    /// Step-length calibration constant (m per (m/s²)^¼).
    pub step_length_k: f64,
    /// Frequency band used to tell forward from lateral motion.
    pub gait_band_hz: (f64, f64),
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 3.0,
            min_prominence_mps2: 0.5,
            min_step_spacing_s: 0.25,
            step_length_k: 0.45,
            gait_band_hz: (0.5, 3.0),
        }
    }
}

impl FeatureConfig {
    pub fn with_k(mut self, k: f64) -> Self {
        self.step_length_k = k;
        self
    }
}

/// Time window used for extraction: the explicit one, else a `6MWT`
/// segment when present, else the whole track.
pub fn analysis_window(session: &RecordingSession, segment: Option<(f64, f64)>) -> Option<(f64, f64)> {
    segment.or_else(|| {
        session
            .segment_named(SIX_MINUTE_WALK)
            .map(|s| (s.start_s, s.end_s))
    })
}

/// Steps detected within the analysis window, together with the window
/// duration.
pub fn session_steps(
    session: &RecordingSession,
    segment: Option<(f64, f64)>,
    cfg: &FeatureConfig,
) -> Result<(Vec<StepEvent>, f64), FeatureError> {
    let oriented = reorient(&session.track, cfg)?;
    match analysis_window(session, segment) {
        Some((start_s, end_s)) => {
            let ok = start_s.is_finite()
                && end_s.is_finite()
                && start_s < end_s
                && start_s >= 0.0
                && end_s <= session.track.end_s() + 1e-9;
            if !ok {
                return Err(FeatureError::SegmentOutOfRange { start_s, end_s });
            }
            let steps = detect_steps(&oriented.slice(start_s, end_s), cfg)?;
            Ok((steps, end_s - start_s))
        }
        None => Ok((detect_steps(&oriented, cfg)?, session.track.duration_s())),
    }
}

/// The eight clinical features for a session (or one of its segments).
pub fn extract_features(
    session: &RecordingSession,
    segment: Option<(f64, f64)>,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let (steps, duration) = session_steps(session, segment, cfg)?;
    Ok(features_from_steps(&steps, duration))
}

pub fn features_from_steps(steps: &[StepEvent], total_duration_s: f64) -> FeatureVector {
    FeatureVector::from_steps(
        steps.iter().map(|s| s.length_m).collect(),
        steps.iter().map(|s| s.duration_s).collect(),
        total_duration_s,
    )
}

/// Pearson correlation between the eight scalar features. Entries that
/// involve a constant feature are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn feature_correlation(vectors: &[FeatureVector]) -> Result<CorrelationMatrix, FeatureError> {
    if vectors.len() < 2 {
        return Err(FeatureError::TooFewVectors(vectors.len()));
    }
    let rows: Vec<[f64; 8]> = vectors.iter().map(FeatureVector::as_row).collect();
    Ok(CorrelationMatrix {
        names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        values: pearson_matrix(&rows),
    })
}

pub(crate) fn pearson_matrix<const D: usize>(rows: &[[f64; D]]) -> Vec<Vec<Option<f64>>> {
    let n = rows.len() as f64;
    let mut means = [0.0; D];
    for r in rows {
        for j in 0..D {
            means[j] += r[j];
        }
    }
    means.iter_mut().for_each(|m| *m /= n);

    let mut cov = vec![vec![0.0; D]; D];
    for r in rows {
        for i in 0..D {
            let di = r[i] - means[i];
            for j in i..D {
                cov[i][j] += di * (r[j] - means[j]);
            }
        }
    }
    let mut out = vec![vec![None; D]; D];
    for i in 0..D {
        for j in i..D {
            let denom = (cov[i][i] * cov[j][j]).sqrt();
            let v = if cov[i][i] > 0.0 && cov[j][j] > 0.0 {
                Some((cov[i][j] / denom).clamp(-1.0, 1.0))
            } else {
                None
            };
            out[i][j] = if i == j { v.map(|_| 1.0) } else { v };
            out[j][i] = out[i][j];
        }
    }
    out
}
