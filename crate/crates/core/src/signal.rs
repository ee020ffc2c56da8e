//! Dashboard aggregates, two-signal alignment and overlay, and the
//! canonical gait-event vocabulary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{reorient, session_steps, FeatureConfig, FeatureError, StepEvent};
use crate::model::RecordingSession;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("series of {got} points; at least {need} required")]
    TooFewPoints { got: usize, need: usize },
    #[error("signal lasts {duration_s:.3} s; at least 2 s required")]
    TooShort { duration_s: f64 },
    #[error("max lag {max_lag_s} s exceeds half the shorter signal ({limit_s} s)")]
    LagTooLarge { max_lag_s: f64, limit_s: f64 },
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("sample rates must be positive and finite")]
    BadRate,
    #[error("unknown gait event {0:?}")]
    UnknownEvent(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// The eight within-stride landmarks a researcher may mark on a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GaitEventName {
    InitialContact,
    OppositeToeOff,
    HeelRise,
    OppositeInitialContact,
    ToeOff,
    FeetAdjacent,
    TibiaVertical,
    NextInitialContact,
}

impl GaitEventName {
    pub const ALL: [GaitEventName; 8] = [
        Self::InitialContact,
        Self::OppositeToeOff,
        Self::HeelRise,
        Self::OppositeInitialContact,
        Self::ToeOff,
        Self::FeetAdjacent,
        Self::TibiaVertical,
        Self::NextInitialContact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::InitialContact => "InitialContact",
            Self::OppositeToeOff => "OppositeToeOff",
            Self::HeelRise => "HeelRise",
            Self::OppositeInitialContact => "OppositeInitialContact",
            Self::ToeOff => "ToeOff",
            Self::FeetAdjacent => "FeetAdjacent",
            Self::TibiaVertical => "TibiaVertical",
            Self::NextInitialContact => "NextInitialContact",
        }
    }
}

impl fmt::Display for GaitEventName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GaitEventName {
    type Err = SignalError;

    /// Accepts `ToeOff`, `toe_off`, `Toe off` and similar spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Self::ALL
            .into_iter()
            .find(|e| e.as_str().to_ascii_lowercase() == key)
            .ok_or_else(|| SignalError::UnknownEvent(s.to_string()))
    }
}

/// Fixed-width histogram of step counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub bin_width: f64,
    /// `counts.len() + 1` edges; empty when there is no data.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Distance covered per step-length bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub bin_width: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub meters: Vec<f64>,
    pub percent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardBundle {
    pub session_id: String,
    pub num_steps: usize,
    pub total_distance_m: f64,
    pub steps_by_velocity: CountHistogram,
    pub distance_by_step_length: DistanceHistogram,
    /// `(peak forward acceleration m/s², step length m)` per step.
    pub steplen_vs_peak: Vec<(f64, f64)>,
    /// Raw device-frame `(ax, ay, az)` in g, stride-downsampled.
    pub trace3d: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DashboardConfig {
    pub velocity_bin_mps: f64,
    pub length_bin_m: f64,
    pub trace_cap: usize,
    pub features: FeatureConfig,
}

impl Default for DashboardConfig {
    fn default() -> Self {
        Self {
            velocity_bin_mps: 0.1,
            length_bin_m: 0.1,
            trace_cap: 5000,
            features: FeatureConfig::default(),
        }
    }
}

/// Bin index of `v` for bins `[i*w, (i+1)*w)`, consistent with edges
/// computed as `i as f64 * w`.
fn bin_index(v: f64, w: f64) -> i64 {
    let mut i = (v / w).floor() as i64;
    while v < i as f64 * w {
        i -= 1;
    }
    while v >= (i + 1) as f64 * w {
        i += 1;
    }
    i
}

fn bin_layout(values: &[f64], w: f64) -> (Vec<f64>, Vec<usize>) {
    let idx: Vec<i64> = values.iter().map(|&v| bin_index(v, w)).collect();
    let (Some(&lo), Some(&hi)) = (idx.iter().min(), idx.iter().max()) else {
        return (Vec::new(), Vec::new());
    };
    let edges = (lo..=hi + 1).map(|i| i as f64 * w).collect();
    let slots = idx.iter().map(|&i| (i - lo) as usize).collect();
    (edges, slots)
}

pub fn velocity_histogram(steps: &[StepEvent], bin_width: f64) -> CountHistogram {
    let velocities: Vec<f64> = steps.iter().map(|s| s.length_m / s.duration_s).collect();
    let (edges, slots) = bin_layout(&velocities, bin_width);
    let mut counts = vec![0; edges.len().saturating_sub(1)];
    for s in slots {
        counts[s] += 1;
    }
    CountHistogram {
        bin_width,
        edges,
        counts,
    }
}

pub fn distance_histogram(steps: &[StepEvent], bin_width: f64) -> DistanceHistogram {
    let lengths: Vec<f64> = steps.iter().map(|s| s.length_m).collect();
    let (edges, slots) = bin_layout(&lengths, bin_width);
    let bins = edges.len().saturating_sub(1);
    let mut counts = vec![0; bins];
    let mut meters = vec![0.0; bins];
    for (slot, len) in slots.into_iter().zip(&lengths) {
        counts[slot] += 1;
        meters[slot] += len;
    }
    let total: f64 = meters.iter().sum();
    let percent = if total > 0.0 {
        meters.iter().map(|m| 100.0 * m / total).collect()
    } else {
        vec![0.0; bins]
    };
    DistanceHistogram {
        bin_width,
        edges,
        counts,
        meters,
        percent,
    }
}

/// Every `ceil(n / cap)`-th element, so at most `cap` survive.
pub fn stride_downsample<T: Clone>(items: &[T], cap: usize) -> Vec<T> {
    if cap == 0 {
        return Vec::new();
    }
    let stride = items.len().div_ceil(cap).max(1);
    items.iter().step_by(stride).cloned().collect()
}

/// Chart data for one finalized session.
pub fn build_dashboard(session: &RecordingSession, cfg: &DashboardConfig) -> Result<DashboardBundle, SignalError> {
    let (steps, _) = session_steps(session, None, &cfg.features)?;
    let trace: Vec<(f64, f64, f64)> = session.track.samples.iter().map(|s| (s.ax, s.ay, s.az)).collect();
    Ok(DashboardBundle {
        session_id: session.id.clone(),
        num_steps: steps.len(),
        total_distance_m: steps.iter().map(|s| s.length_m).sum(),
        steps_by_velocity: velocity_histogram(&steps, cfg.velocity_bin_mps),
        distance_by_step_length: distance_histogram(&steps, cfg.length_bin_m),
        steplen_vs_peak: steps
            .iter()
            .map(|s| (s.peak_forward_accel_mps2, s.length_m))
            .collect(),
        trace3d: stride_downsample(&trace, cfg.trace_cap),
    })
}

/// Linear interpolation of a uniformly sampled series onto a new rate.
/// The first sample is kept, and the last one too whenever the span is a
/// whole number of output periods.
pub fn resample(series: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>, SignalError> {
    if !(from_hz.is_finite() && to_hz.is_finite() && from_hz > 0.0 && to_hz > 0.0) {
        return Err(SignalError::BadRate);
    }
    let n = series.len();
    if n < 2 {
        return Err(SignalError::TooFewPoints { got: n, need: 2 });
    }
    if from_hz == to_hz {
        return Ok(series.to_vec());
    }
    let span = (n - 1) as f64 / from_hz;
    let m = (span * to_hz + 1e-9).floor() as usize + 1;
    Ok((0..m)
        .map(|j| {
            let pos = j as f64 * from_hz / to_hz;
            let i = (pos.floor() as usize).min(n - 2);
            let frac = pos - i as f64;
            if frac == 0.0 {
                series[i]
            } else if frac >= 1.0 {
                series[i + 1]
            } else {
                series[i] + frac * (series[i + 1] - series[i])
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Delay of `b` relative to `a`: `b(t) ≈ a(t - lag_s)`.
    pub lag_s: f64,
    /// Normalized cross-correlation at that lag.
    pub correlation: f64,
}

fn overlap_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa * sbb).sqrt()
    } else {
        0.0
    }
}

fn has_variance(x: &[f64]) -> bool {
    x.iter().any(|v| *v != x[0])
}

/// Finds the lag within `±max_lag_s` that maximizes the normalized
/// cross-correlation of the overlapping parts. Ties go to the smaller
/// absolute lag, then to the negative one.
pub fn align(a: &[f64], b: &[f64], rate_hz: f64, max_lag_s: f64) -> Result<Alignment, SignalError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(SignalError::BadRate);
    }
    let duration = a.len().min(b.len()) as f64 / rate_hz;
    if duration < 2.0 {
        return Err(SignalError::TooShort { duration_s: duration });
    }
    if !(max_lag_s >= 0.0 && max_lag_s <= duration / 2.0) {
        return Err(SignalError::LagTooLarge {
            max_lag_s,
            limit_s: duration / 2.0,
        });
    }
    if !has_variance(a) || !has_variance(b) {
        return Err(SignalError::ZeroVariance);
    }
    let max_lag = (max_lag_s * rate_hz).floor() as i64;
    let corr_at = |lag: i64| {
        // Pairs (a[i], b[i + lag]).
        let (a_lo, b_lo) = if lag >= 0 { (0, lag as usize) } else { ((-lag) as usize, 0) };
        let len = (a.len() - a_lo).min(b.len() - b_lo);
        overlap_pearson(&a[a_lo..a_lo + len], &b[b_lo..b_lo + len])
    };

    let mut best_lag = 0i64;
    let mut best = corr_at(0);
    for step in 1..=max_lag {
        for lag in [-step, step] {
            let c = corr_at(lag);
            if c > best {
                best = c;
                best_lag = lag;
            }
        }
    }
    Ok(Alignment {
        lag_s: best_lag as f64 / rate_hz,
        correlation: best,
    })
}

/// Two forward-acceleration series on a shared time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub session_a: String,
    pub session_b: String,
    pub rate_hz: f64,
    pub lag_s: f64,
    /// Present when the lag was estimated rather than supplied.
    pub correlation: Option<f64>,
    /// Time on session A's clock.
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a_z: Vec<f64>,
    pub b_z: Vec<f64>,
}

fn zscore(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        x.iter().map(|v| (v - m) / sd).collect()
    } else {
        vec![0.0; x.len()]
    }
}

/// Upper bound on the automatic lag search.
pub const OVERLAY_MAX_LAG_S: f64 = 5.0;

/// Pairs the forward acceleration of two sessions after resampling both to
/// the higher nominal rate and shifting `b` by the lag (estimated with
/// [`align`] when not given).
pub fn overlay(
    a: &RecordingSession,
    b: &RecordingSession,
    lag_s: Option<f64>,
    cfg: &FeatureConfig,
) -> Result<Overlay, SignalError> {
    let oa = reorient(&a.track, cfg)?;
    let ob = reorient(&b.track, cfg)?;
    let rate = oa.rate_hz.max(ob.rate_hz);
    let fa = resample(&oa.forward, oa.rate_hz, rate)?;
    let fb = resample(&ob.forward, ob.rate_hz, rate)?;

    let (lag_s, correlation) = match lag_s {
        Some(lag) => (lag, None),
        None => {
            let limit = fa.len().min(fb.len()) as f64 / rate / 2.0;
            let found = align(&fa, &fb, rate, OVERLAY_MAX_LAG_S.min(limit))?;
            (found.lag_s, Some(found.correlation))
        }
    };
    let shift = (lag_s * rate).round() as i64;
    let (mut t, mut pa, mut pb) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &va) in fa.iter().enumerate() {
        let j = i as i64 + shift;
        if j >= 0 && (j as usize) < fb.len() {
            t.push(oa.t[0] + i as f64 / rate);
            pa.push(va);
            pb.push(fb[j as usize]);
        }
    }
    Ok(Overlay {
        session_a: a.id.clone(),
        session_b: b.id.clone(),
        rate_hz: rate,
        lag_s,
        correlation,
        a_z: zscore(&pa),
        b_z: zscore(&pb),
        t,
        a: pa,
        b: pb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn step(length_m: f64, duration_s: f64) -> StepEvent {
        StepEvent {
            t_peak_s: 0.0,
            duration_s,
            peak_forward_accel_mps2: 3.0,
            trough_forward_accel_mps2: -1.0,
            length_m,
        }
    }

    #[test]
    fn event_names() {
        assert_eq!("ToeOff".parse::<GaitEventName>().unwrap(), GaitEventName::ToeOff);
        assert_eq!("toe_off".parse::<GaitEventName>().unwrap(), GaitEventName::ToeOff);
        assert_eq!(
            "Opposite initial contact".parse::<GaitEventName>().unwrap(),
            GaitEventName::OppositeInitialContact
        );
        assert!("Midswing".parse::<GaitEventName>().is_err());
        let json = serde_json::to_string(&GaitEventName::HeelRise).unwrap();
        assert_eq!(json, "\"HeelRise\"");
    }

    #[test]
    fn identical_steps_share_one_velocity_bin() {
        let steps = vec![step(0.9, 0.5); 60];
        let h = velocity_histogram(&steps, 0.1);
        assert_eq!(h.counts, vec![60]);
        assert!(h.edges[0] <= 1.8 && 1.8 < h.edges[1]);
    }

    #[test]
    fn distance_percent_normalized() {
        let steps: Vec<_> = (0..37).map(|i| step(0.3 + 0.017 * i as f64, 0.5)).collect();
        let h = distance_histogram(&steps, 0.1);
        assert!((h.percent.iter().sum::<f64>() - 100.0).abs() < 1e-6);
        assert_eq!(h.counts.iter().sum::<usize>(), 37);
        let total: f64 = steps.iter().map(|s| s.length_m).sum();
        assert!((h.meters.iter().sum::<f64>() - total).abs() < 1e-9);
    }

    #[test]
    fn empty_histograms() {
        let h = velocity_histogram(&[], 0.1);
        assert!(h.edges.is_empty() && h.counts.is_empty());
        let d = distance_histogram(&[], 0.1);
        assert!(d.percent.is_empty());
    }

    #[test]
    fn edge_values_land_in_upper_bin() {
        for i in 0..50 {
            let v = i as f64 * 0.1;
            let b = bin_index(v, 0.1);
            assert!(b as f64 * 0.1 <= v && v < (b + 1) as f64 * 0.1);
        }
    }

    #[test]
    fn downsample_cap() {
        let v: Vec<usize> = (0..18_000).collect();
        let d = stride_downsample(&v, 5000);
        assert!(d.len() <= 5000);
        assert_eq!(d[1], 4);
        assert_eq!(stride_downsample(&v[..10], 5000).len(), 10);
    }

    #[test]
    fn resample_identity_and_ramp() {
        let x: Vec<f64> = (0..11).map(|i| 0.5 * i as f64).collect();
        assert_eq!(resample(&x, 10.0, 10.0).unwrap(), x);
        let up = resample(&x, 10.0, 20.0).unwrap();
        assert_eq!(up.len(), 21);
        for (j, v) in up.iter().enumerate() {
            assert!((v - 0.25 * j as f64).abs() < 1e-12);
        }
        assert_eq!(*up.last().unwrap(), *x.last().unwrap());
        assert!(resample(&[1.0], 10.0, 20.0).is_err());
    }

    #[test]
    fn align_self_is_zero() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() + 0.1 * (i as f64 * 1.3).cos()).collect();
        let r = align(&a, &a, 50.0, 2.0).unwrap();
        assert_eq!(r.lag_s, 0.0);
        assert!((r.correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn align_errors() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 * 0.1).sin()).collect();
        assert!(matches!(align(&a, &vec![1.0; 500], 50.0, 1.0), Err(SignalError::ZeroVariance)));
        assert!(matches!(align(&a, &a, 50.0, 6.0), Err(SignalError::LagTooLarge { .. })));
        assert!(matches!(align(&a[..50], &a[..50], 50.0, 0.1), Err(SignalError::TooShort { .. })));
    }

    #[test]
    fn resample_round_trip_sine() {
        let x: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 1.5 * i as f64 / 50.0).sin()).collect();
        let up = resample(&x, 50.0, 100.0).unwrap();
        let back = resample(&up, 100.0, 50.0).unwrap();
        assert_eq!(back.len(), x.len());
        let rms = (x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        assert!(rms < 1e-3, "{rms}");
    }
}
