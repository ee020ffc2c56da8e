//! Zero-phase Butterworth low-pass.

use super::FeatureError;

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn butterworth_lowpass(rate_hz: f64, cutoff_hz: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz / rate_hz).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * k + k2);
        let a1 = 2.0 * (k2 - 1.0) * norm;
        let a2 = (1.0 - std::f64::consts::SQRT_2 * k + k2) * norm;
        // Numerator taken from the denominator sum so the DC gain is 1
        // to the last bit instead of merely analytically.
        let b0 = (1.0 + a1 + a2) / 4.0;
        Self {
            b: [b0, 2.0 * b0, b0],
            a1,
            a2,
        }
    }

    /// Transposed direct form II, started in steady state for `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let [b0, b1, b2] = self.b;
        let mut z1 = (1.0 - b0) * x0;
        let mut z2 = (b2 - self.a2) * x0;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z1;
            z1 = b1 * input - self.a1 * y + z2;
            z2 = b2 * input - self.a2 * y;
            *v = y;
        }
    }
}

/// Second-order Butterworth low-pass applied forward and backward, so the
/// result has no phase shift and the squared magnitude response.
///
/// The ends are padded with an odd reflection to suppress start-up
/// transients.
pub fn lowpass(signal: &[f64], rate_hz: f64, cutoff_hz: f64) -> Result<Vec<f64>, FeatureError> {
    if !(rate_hz.is_finite() && cutoff_hz.is_finite() && cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0) {
        return Err(FeatureError::CutoffOutOfRange { cutoff_hz, rate_hz });
    }
    let n = signal.len();
    if n < 2 {
        return Ok(signal.to_vec());
    }
    let filter = Biquad::butterworth_lowpass(rate_hz, cutoff_hz);
    let pad = (3.0 * (rate_hz / cutoff_hz).ceil()) as usize;
    let pad = pad.min(n - 1);

    let first = signal[0];
    let last = signal[n - 1];
    let mut buf = Vec::with_capacity(n + 2 * pad);
    buf.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    buf.extend_from_slice(signal);
    buf.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    filter.run(&mut buf);
    buf.reverse();
    filter.run(&mut buf);
    buf.reverse();

    Ok(buf[pad..pad + n].to_vec())
}
