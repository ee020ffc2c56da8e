//! Step detection on forward acceleration and the amplitude step-length model.

use serde::{Deserialize, Serialize};

use super::{lowpass, FeatureConfig, FeatureError, OrientedSignal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub t_peak_s: f64,
    pub duration_s: f64,
    pub peak_forward_accel_mps2: f64,
    pub trough_forward_accel_mps2: f64,
    pub length_m: f64,
}

/// Indices of strict local maxima; a flat top counts once, at its middle.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// Drops peaks closer than `min_gap` samples to a taller kept peak.
/// Taller peaks win; equal heights favour the later index.
fn enforce_spacing(x: &[f64], peaks: &[usize], min_gap: usize) -> Vec<usize> {
    if min_gap <= 1 || peaks.len() < 2 {
        return peaks.to_vec();
    }
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| x[peaks[a]].total_cmp(&x[peaks[b]]).then(a.cmp(&b)));
    let mut keep = vec![true; peaks.len()];
    for &i in order.iter().rev() {
        if !keep[i] {
            continue;
        }
        let mut j = i;
        while j > 0 && peaks[i] - peaks[j - 1] < min_gap {
            j -= 1;
            keep[j] = false;
        }
        let mut j = i + 1;
        while j < peaks.len() && peaks[j] - peaks[i] < min_gap {
            keep[j] = false;
            j += 1;
        }
    }
    peaks.iter().zip(keep).filter(|(_, k)| *k).map(|(&p, _)| p).collect()
}

/// Height of a peak above the higher of the two lowest points reachable
/// on either side before meeting a taller sample.
pub(crate) fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Peak indices of `x` satisfying the spacing and prominence thresholds.
pub fn find_peaks(x: &[f64], min_gap_samples: usize, min_prominence: f64) -> Vec<usize> {
    let peaks = local_maxima(x);
    let peaks = enforce_spacing(x, &peaks, min_gap_samples);
    peaks
        .into_iter()
        .filter(|&p| prominence(x, p) >= min_prominence)
        .collect()
}

/// Step length from the forward acceleration swing:
/// `k * (peak - trough)^(1/4)`.
pub fn step_length(peak_mps2: f64, trough_mps2: f64, k: f64) -> f64 {
    k * (peak_mps2 - trough_mps2).max(0.0).powf(0.25)
}

/// Detects steps as prominent peaks of low-passed forward acceleration.
///
/// A step lasts until the next peak; the last step reuses the preceding
/// gap and a lone step spans the whole signal. Peak and trough come from
/// the filtered signal between a peak and its successor (predecessor for
/// the last step).
pub fn detect_steps(sig: &OrientedSignal, cfg: &FeatureConfig) -> Result<Vec<StepEvent>, FeatureError> {
    let duration = sig.duration_s();
    if duration < 2.0 {
        return Err(FeatureError::TooShort { duration_s: duration });
    }
    let smooth = lowpass(&sig.forward, sig.rate_hz, cfg.cutoff_hz)?;
    let min_gap = (cfg.min_step_spacing_s * sig.rate_hz).ceil() as usize;
    let peaks = find_peaks(&smooth, min_gap, cfg.min_prominence_mps2);

    let trough_between = |a: usize, b: usize| smooth[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
    let steps = peaks
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (duration_s, trough) = if i + 1 < peaks.len() {
                let next = peaks[i + 1];
                (sig.t[next] - sig.t[p], trough_between(p, next))
            } else if i > 0 {
                let prev = peaks[i - 1];
                (sig.t[p] - sig.t[prev], trough_between(prev, p))
            } else {
                (duration, trough_between(0, smooth.len() - 1))
            };
            let peak = smooth[p];
            StepEvent {
                t_peak_s: sig.t[p],
                duration_s,
                peak_forward_accel_mps2: peak,
                trough_forward_accel_mps2: trough,
                length_m: step_length(peak, trough, cfg.step_length_k),
            }
        })
        .collect();
    Ok(steps)
}
