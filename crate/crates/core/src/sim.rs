//! Synthetic gait generator with exact ground truth.
//!
//! Forward acceleration is a train of Gaussian-windowed cosine pulses, one
//! per step, centred on jittered step times. The vertical axis is gravity
//! plus a zero-mean harmonic at twice the cadence, and a slow lateral sway
//! runs at half the cadence. A pitch tilt then rotates body axes into the
//! device frame (x forward, y lateral, z vertical) and white noise is added
//! on every axis. Output is in g.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::step_length;
use crate::model::{SensorSample, SignalTrack, STANDARD_GRAVITY};
use crate::rng::SeedStream;

/// Calibration constant used to assign ground-truth step lengths.
pub const GROUND_TRUTH_K: f64 = 0.45;
/// Relative standard deviation of step-to-step timing.
const STEP_JITTER: f64 = 0.02;
const VERTICAL_HARMONIC: f64 = 0.3;
const LATERAL_SWAY: f64 = 0.15;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{field} = {value} is out of range ({range})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        range: &'static str,
    },
}

fn check(field: &'static str, value: f64, ok: bool, range: &'static str) -> Result<(), SimError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(SimError::OutOfRange { field, value, range })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitProfile {
    /// Steps per second.
    pub cadence_hz: f64,
    /// Peak forward acceleration of a nominal step, m/s².
    pub step_amplitude_mps2: f64,
    /// Coefficient of variation of step amplitude.
    pub amplitude_cv: f64,
    /// Odd steps are scaled by `1 - asymmetry`.
    pub asymmetry: f64,
    pub noise_std_mps2: f64,
    pub device_tilt_deg: f64,
    pub seed: u64,
}

impl GaitProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        check("cadence_hz", self.cadence_hz, (0.3..=3.5).contains(&self.cadence_hz), "[0.3, 3.5]")?;
        check("step_amplitude_mps2", self.step_amplitude_mps2, self.step_amplitude_mps2 > 0.0, "> 0")?;
        check("amplitude_cv", self.amplitude_cv, self.amplitude_cv >= 0.0, ">= 0")?;
        check("asymmetry", self.asymmetry, (0.0..=1.0).contains(&self.asymmetry), "[0, 1]")?;
        check("noise_std_mps2", self.noise_std_mps2, self.noise_std_mps2 >= 0.0, ">= 0")?;
        check("device_tilt_deg", self.device_tilt_deg, self.device_tilt_deg.abs() <= 60.0, "[-60, 60]")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    TypicalChild,
    ImpairedGait,
}

impl PresetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PresetKind::TypicalChild => "typical_child",
            PresetKind::ImpairedGait => "impaired_gait",
        }
    }
}

impl std::str::FromStr for PresetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "typical_child" => Ok(Self::TypicalChild),
            "impaired_gait" => Ok(Self::ImpairedGait),
            other => Err(format!("unknown preset {other:?} (typical_child, impaired_gait)")),
        }
    }
}

/// Draws a subject profile for a cohort.
pub fn preset(kind: PresetKind, seed: u64) -> GaitProfile {
    let mut rng = SeedStream::new(seed).derive("preset").derive(kind.as_str()).rng();
    let (cadence_mean, cadence_sd, amplitude, cv, asymmetry) = match kind {
        PresetKind::TypicalChild => (2.0, 0.1, 4.0, 0.05, 0.02),
        PresetKind::ImpairedGait => (1.2, 0.15, 2.0, 0.25, 0.15),
    };
    let cadence: f64 = Normal::new(cadence_mean, cadence_sd).unwrap().sample(&mut rng);
    let tilt: f64 = Normal::new(0.0, 3.0).unwrap().sample(&mut rng);
    GaitProfile {
        cadence_hz: cadence.clamp(0.3, 3.5),
        step_amplitude_mps2: amplitude,
        amplitude_cv: cv,
        asymmetry,
        noise_std_mps2: amplitude / 20.0,
        device_tilt_deg: tilt.clamp(-10.0, 10.0),
        seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub step_times_s: Vec<f64>,
    /// Amplitude of each injected pulse, m/s².
    pub step_amplitudes_mps2: Vec<f64>,
    pub per_step_length_m: Vec<f64>,
    pub total_distance_m: f64,
}

fn clamped_normal(rng: &mut impl Rng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z.clamp(-3.0, 3.0)
}

struct PulseTrain {
    times: Vec<f64>,
    amplitudes: Vec<f64>,
    sigma: f64,
    carrier_hz: f64,
}

impl PulseTrain {
    fn eval(&self, t: f64) -> f64 {
        let reach = 6.0 * self.sigma;
        let lo = self.times.partition_point(|&tk| tk < t - reach);
        let hi = self.times.partition_point(|&tk| tk <= t + reach);
        (lo..hi)
            .map(|k| {
                let d = t - self.times[k];
                self.amplitudes[k] * (-d * d / (2.0 * self.sigma * self.sigma)).exp() * (2.0 * PI * self.carrier_hz * d).cos()
            })
            .sum()
    }

    /// Minimum over `[a, b]` on a fine grid.
    fn min_between(&self, a: f64, b: f64) -> f64 {
        const GRID: usize = 400;
        (0..=GRID)
            .map(|i| self.eval(a + (b - a) * i as f64 / GRID as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Generates a device-frame track and the exact steps injected into it.
///
/// Ground-truth step length applies the amplitude model to the clean,
/// unfiltered forward pulse train: the value at the step time against the
/// lowest point before the next step (before the previous one for the
/// last step).
pub fn synthesize(profile: &GaitProfile, duration_s: f64, rate_hz: f64) -> Result<(SignalTrack, GroundTruth), SimError> {
    profile.validate()?;
    check("duration_s", duration_s, duration_s >= 5.0, ">= 5")?;
    check("rate_hz", rate_hz, (20.0..=200.0).contains(&rate_hz), "[20, 200]")?;

    let root = SeedStream::new(profile.seed).derive("synthesize");
    let mut step_rng = root.derive("steps").rng();
    let period = 1.0 / profile.cadence_hz;

    let mut times = Vec::new();
    let mut amplitudes = Vec::new();
    let mut t = period / 2.0;
    while t <= duration_s - period / 2.0 {
        let k = times.len();
        let side = if k % 2 == 1 { 1.0 - profile.asymmetry } else { 1.0 };
        let variation = (1.0 + profile.amplitude_cv * clamped_normal(&mut step_rng)).max(0.25);
        times.push(t);
        amplitudes.push(profile.step_amplitude_mps2 * side * variation);
        t += period * (1.0 + STEP_JITTER * clamped_normal(&mut step_rng));
    }
    let train = PulseTrain {
        times,
        amplitudes,
        sigma: period / 4.0,
        carrier_hz: profile.cadence_hz,
    };

    let n = (duration_s * rate_hz).round() as usize;
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / rate_hz).collect();
    let forward: Vec<f64> = ts.iter().map(|&t| train.eval(t)).collect();
    let harmonic_amp = VERTICAL_HARMONIC * profile.step_amplitude_mps2;
    let mut harmonic: Vec<f64> = ts
        .iter()
        .map(|&t| harmonic_amp * (2.0 * PI * 2.0 * profile.cadence_hz * t).sin())
        .collect();
    let harmonic_mean = harmonic.iter().sum::<f64>() / n as f64;
    harmonic.iter_mut().for_each(|h| *h -= harmonic_mean);
    let sway_amp = LATERAL_SWAY * profile.step_amplitude_mps2;

    let tilt = profile.device_tilt_deg.to_radians();
    let (sin_t, cos_t) = tilt.sin_cos();
    let mut noise_rng = root.derive("noise").rng();
    let mut noise = || -> f64 {
        if profile.noise_std_mps2 > 0.0 {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            profile.noise_std_mps2 * z
        } else {
            0.0
        }
    };

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let vertical = STANDARD_GRAVITY + harmonic[i];
        let lateral = sway_amp * (PI * profile.cadence_hz * ts[i]).sin();
        let (dx, dz) = if tilt == 0.0 {
            (forward[i], vertical)
        } else {
            (forward[i] * cos_t - vertical * sin_t, forward[i] * sin_t + vertical * cos_t)
        };
        let (nx, ny, nz) = (noise(), noise(), noise());
        samples.push(SensorSample::new(
            ts[i],
            (dx + nx) / STANDARD_GRAVITY,
            (lateral + ny) / STANDARD_GRAVITY,
            (dz + nz) / STANDARD_GRAVITY,
        ));
    }

    let steps = train.times.len();
    let per_step_length_m: Vec<f64> = (0..steps)
        .map(|k| {
            let peak = train.eval(train.times[k]);
            let trough = if k + 1 < steps {
                train.min_between(train.times[k], train.times[k + 1])
            } else if k > 0 {
                train.min_between(train.times[k - 1], train.times[k])
            } else {
                train.min_between(0.0, duration_s)
            };
            step_length(peak, trough, GROUND_TRUTH_K)
        })
        .collect();
    let truth = GroundTruth {
        total_distance_m: per_step_length_m.iter().sum(),
        per_step_length_m,
        step_times_s: train.times,
        step_amplitudes_mps2: train.amplitudes,
    };
    let track = SignalTrack {
        samples,
        nominal_rate_hz: rate_hz,
    };
    Ok((track, truth))
}
