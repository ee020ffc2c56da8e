//! Device-to-body reorientation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{lowpass, FeatureConfig, FeatureError};
use crate::model::{SignalTrack, STANDARD_GRAVITY};

/// Acceleration resolved onto body axes, in m/s².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedSignal {
    pub t: Vec<f64>,
    /// Gravity-removed vertical acceleration.
    pub vertical: Vec<f64>,
    pub forward: Vec<f64>,
    pub lateral: Vec<f64>,
    pub rate_hz: f64,
    /// Mean of the vertical axis before gravity removal.
    pub gravity_mps2: f64,
    /// Device axes (0 = x, 1 = y, 2 = z) chosen as vertical, forward, lateral.
    pub axes: [usize; 3],
}

impl OrientedSignal {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        match (self.t.first(), self.t.last()) {
            (Some(a), Some(b)) => b - a + 1.0 / self.rate_hz,
            _ => 0.0,
        }
    }

    /// Samples with `start_s <= t < end_s`.
    pub fn slice(&self, start_s: f64, end_s: f64) -> OrientedSignal {
        let lo = self.t.partition_point(|&t| t < start_s);
        let hi = self.t.partition_point(|&t| t < end_s);
        OrientedSignal {
            t: self.t[lo..hi].to_vec(),
            vertical: self.vertical[lo..hi].to_vec(),
            forward: self.forward[lo..hi].to_vec(),
            lateral: self.lateral[lo..hi].to_vec(),
            rate_hz: self.rate_hz,
            gravity_mps2: self.gravity_mps2,
            axes: self.axes,
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn third_moment(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(3)).sum::<f64>()
}

/// Spectral power of `x` (mean removed) between `lo_hz` and `hi_hz`.
pub(crate) fn band_power(x: &[f64], rate_hz: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = rate_hz / n as f64;
    buf[..=n / 2]
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * df;
            f >= lo_hz && f <= hi_hz
        })
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// Resolves a device-frame track onto vertical, forward and lateral axes.
///
/// The vertical axis is the device axis with the largest absolute mean,
/// flipped so gravity is positive, with its mean subtracted. Of the other
/// two axes the forward one carries more low-passed power in the gait band;
/// both horizontal axes are signed so their third central moment is
/// non-negative, which makes the result independent of device axis order
/// and polarity.
pub fn reorient(track: &SignalTrack, cfg: &FeatureConfig) -> Result<OrientedSignal, FeatureError> {
    let duration = track.duration_s();
    if duration < 2.0 {
        return Err(FeatureError::TooShort { duration_s: duration });
    }
    let rate = track.nominal_rate_hz;
    let channels: [Vec<f64>; 3] = [
        track.samples.iter().map(|s| s.ax * STANDARD_GRAVITY).collect(),
        track.samples.iter().map(|s| s.ay * STANDARD_GRAVITY).collect(),
        track.samples.iter().map(|s| s.az * STANDARD_GRAVITY).collect(),
    ];
    let means = channels.each_ref().map(|c| mean(c));

    let mut vertical_axis = 0;
    for axis in 1..3 {
        if means[axis].abs() > means[vertical_axis].abs() {
            vertical_axis = axis;
        }
    }
    if means[vertical_axis].abs() < 0.5 * STANDARD_GRAVITY {
        return Err(FeatureError::IndeterminateOrientation);
    }
    let sign = means[vertical_axis].signum();
    let gravity = means[vertical_axis].abs();
    let vertical: Vec<f64> = channels[vertical_axis].iter().map(|v| sign * v - gravity).collect();

    let others: Vec<usize> = (0..3).filter(|&a| a != vertical_axis).collect();
    let (lo, hi) = cfg.gait_band_hz;
    let mut filtered = Vec::with_capacity(2);
    let mut powers = Vec::with_capacity(2);
    for &axis in &others {
        let f = lowpass(&channels[axis], rate, cfg.cutoff_hz)?;
        powers.push(band_power(&f, rate, lo, hi));
        filtered.push(f);
    }
    let (fwd_i, lat_i) = if powers[1] > powers[0] { (1, 0) } else { (0, 1) };

    let signed = |i: usize| -> Vec<f64> {
        let raw = &channels[others[i]];
        if third_moment(&filtered[i]) < 0.0 {
            raw.iter().map(|v| -v).collect()
        } else {
            raw.clone()
        }
    };

    Ok(OrientedSignal {
        t: track.samples.iter().map(|s| s.t).collect(),
        vertical,
        forward: signed(fwd_i),
        lateral: signed(lat_i),
        rate_hz: rate,
        gravity_mps2: gravity,
        axes: [vertical_axis, others[fwd_i], others[lat_i]],
    })
}
