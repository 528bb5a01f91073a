//! FFT peak estimation for oscillation traces.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spin::C64;

/// Zero-padding factor applied before the transform.
pub const PAD_FACTOR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftPeak {
    /// Peak frequency (inverse of the sample-time unit; MHz for µs).
    pub frequency: f64,
    /// Width of one zero-padded frequency bin.
    pub bin_width: f64,
    pub magnitude: f64,
    /// Peak magnitude over the median magnitude of the nonzero bins.
    pub peak_to_floor: f64,
}

/// Hann-windowed, mean-subtracted, zero-padded magnitude spectrum.
/// Returns `(frequencies, magnitudes)` for bins `0..=N/2`.
pub fn magnitude_spectrum(signal: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if signal.len() < 4 {
        return Err(invalid("signal", "need at least four samples"));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "sample spacing must be positive"));
    }
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let padded = (n * PAD_FACTOR).next_power_of_two();
    let mut buf = vec![C64::new(0.0, 0.0); padded];
    for (k, (&s, b)) in signal.iter().zip(buf.iter_mut()).enumerate() {
        let w = 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / (n - 1) as f64).cos();
        *b = C64::new((s - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let df = 1.0 / (padded as f64 * dt);
    let half = padded / 2;
    let freqs = (0..=half).map(|k| k as f64 * df).collect();
    let mags = buf[..=half].iter().map(|z| z.norm()).collect();
    Ok((freqs, mags))
}

/// Largest nonzero-frequency bin refined by a parabola through its
/// neighbours.
pub fn fft_peak(signal: &[f64], dt: f64) -> Result<FftPeak> {
    let (freqs, mags) = magnitude_spectrum(signal, dt)?;
    let df = freqs[1];
    // skip the DC lobe of the window
    let start = (PAD_FACTOR * 2).min(mags.len() - 2);
    let (k, &m) = mags[start..mags.len() - 1]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, m)| (i + start, m))
        .unwrap();
    let (a, b, c) = (mags[k - 1], mags[k], mags[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let mut rest: Vec<f64> = mags[start..].to_vec();
    rest.sort_by(|x, y| x.total_cmp(y));
    let floor = rest[rest.len() / 2];
    Ok(FftPeak {
        frequency: (k as f64 + shift) * df,
        bin_width: df,
        magnitude: m,
        peak_to_floor: if floor > 0.0 { m / floor } else if m > 0.0 { f64::INFINITY } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_tone_23_mhz() {
        // 1 µs window, 1 ns sampling
        let dt = 1e-3;
        let sig: Vec<f64> = (0..1000)
            .map(|k| 0.625 + 0.375 * (std::f64::consts::TAU * 23.0 * k as f64 * dt).cos())
            .collect();
        let peak = fft_peak(&sig, dt).unwrap();
        assert!((peak.frequency - 23.0).abs() < 0.5 * peak.bin_width, "{peak:?}");
        assert!(peak.peak_to_floor > 5.0);
    }

    #[test]
    fn constant_signal_has_no_peak() {
        let peak = fft_peak(&[1.0; 256], 0.01).unwrap();
        assert_eq!(peak.magnitude, 0.0);
        assert_eq!(peak.peak_to_floor, 0.0);
    }

    #[test]
    fn rejects_short_or_bad_input() {
        assert!(fft_peak(&[1.0, 2.0], 0.1).is_err());
        assert!(fft_peak(&[1.0; 16], 0.0).is_err());
    }
}
