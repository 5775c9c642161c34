//! Zero-phase Butterworth filtering.
//!
//! Each band edge is a 4th-order Butterworth section pair obtained by the
//! bilinear transform with frequency pre-warping. The cascade runs forward
//! and then backward over a mirrored extension of the signal, with
//! steady-state initial conditions, so the result has no phase shift and the
//! magnitude response is squared.

use std::f64::consts::PI;

use ndarray::Axis;

use super::recording::Recording;
use crate::error::{Error, Result};

/// Order of each band edge.
pub const BUTTERWORTH_ORDER: usize = 4;

/// Second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Gain at DC.
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state that yields a steady output for a unit constant input.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    /// Complex magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = -(self.b[1] * s1 + self.b[2] * s2);
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = -(self.a[0] * s1 + self.a[1] * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }
}

#[derive(Clone, Copy)]
enum Edge {
    Low,
    High,
}

fn butterworth(order: usize, cutoff_hz: f64, sample_rate_hz: f64, edge: Edge) -> Vec<Biquad> {
    assert!(order.is_multiple_of(2) && order > 0, "even order only");
    let k = (PI * cutoff_hz / sample_rate_hz).tan();
    let k2 = k * k;
    (1..=order / 2)
        .map(|i| {
            // Analog prototype section s^2 + q s + 1, with q = 2 sin((2i-1) pi / 2n).
            let q = 2.0 * (PI * (2 * i - 1) as f64 / (2 * order) as f64).sin();
            let d = 1.0 + q * k + k2;
            let a = [2.0 * (k2 - 1.0) / d, (1.0 - q * k + k2) / d];
            let b = match edge {
                Edge::Low => [k2 / d, 2.0 * k2 / d, k2 / d],
                Edge::High => [1.0 / d, -2.0 / d, 1.0 / d],
            };
            Biquad { b, a }
        })
        .collect()
}

/// Butterworth low-pass sections (order must be even).
pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Vec<Biquad> {
    butterworth(order, cutoff_hz, sample_rate_hz, Edge::Low)
}

/// Butterworth high-pass sections (order must be even).
pub fn butterworth_highpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Vec<Biquad> {
    butterworth(order, cutoff_hz, sample_rate_hz, Edge::High)
}

/// Runs the cascade in place. `zi_scale` multiplies the steady-state initial conditions.
pub fn sosfilt_in_place(sections: &[Biquad], x: &mut [f64], zi_scale: Option<f64>) {
    let mut scale = zi_scale.unwrap_or(0.0);
    for s in sections {
        let zi = s.steady_state();
        let (mut z1, mut z2) = (zi[0] * scale, zi[1] * scale);
        for v in x.iter_mut() {
            let input = *v;
            let y = s.b[0] * input + z1;
            z1 = s.b[1] * input - s.a[0] * y + z2;
            z2 = s.b[2] * input - s.a[1] * y;
            *v = y;
        }
        scale *= s.dc_gain();
    }
}

/// Forward–backward filtering with mirror padding of `padlen` samples per side.
///
/// Odd reflection would shift the local level of the pad by twice the edge
/// value, which the high-pass turns into a slow ring; mirroring keeps it.
pub fn sosfiltfilt(sections: &[Biquad], x: &[f64], padlen: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = padlen.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| x[n - 1 - i]));

    let first = ext[0];
    sosfilt_in_place(sections, &mut ext, Some(first));
    ext.reverse();
    let first = ext[0];
    sosfilt_in_place(sections, &mut ext, Some(first));
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase band-pass between `low_hz` and `high_hz`.
pub fn bandpass_filter(rec: &Recording, low_hz: f64, high_hz: f64) -> Result<Recording> {
    let nyquist = rec.sample_rate_hz() / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::invalid(format!(
            "band edges must satisfy 0 < low < high < {nyquist} Hz, got {low_hz}..{high_hz}"
        )));
    }
    let fs = rec.sample_rate_hz();
    let mut sections = butterworth_highpass(BUTTERWORTH_ORDER, low_hz, fs);
    sections.extend(butterworth_lowpass(BUTTERWORTH_ORDER, high_hz, fs));
    // The slowest high-pass pole decays at about 1.2 low_hz per second; three
    // periods of the low edge bring the edge transient below 1e-3.
    let padlen = (3.0 * fs / low_hz).ceil() as usize;

    let mut data = rec.data().clone();
    for mut row in data.axis_iter_mut(Axis(0)) {
        let src = row.to_vec();
        let out = sosfiltfilt(&sections, &src, padlen);
        row.iter_mut().zip(out).for_each(|(dst, v)| *dst = v);
    }
    Ok(rec.with_data(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn tone(freq: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn filter_one(x: Vec<f64>, rate: f64, low: f64, high: f64) -> Vec<f64> {
        let n = x.len();
        let rec = Recording::with_default_names(Array2::from_shape_vec((1, n), x).unwrap(), rate).unwrap();
        bandpass_filter(&rec, low, high).unwrap().data().row(0).to_vec()
    }

    #[test]
    fn butterworth_magnitude_at_cutoff_is_half_power() {
        let lp = butterworth_lowpass(4, 80.0, 5000.0);
        let mag: f64 = lp.iter().map(|s| s.magnitude(80.0, 5000.0)).product();
        assert!((mag - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        let hp = butterworth_highpass(4, 0.5, 5000.0);
        let mag: f64 = hp.iter().map(|s| s.magnitude(0.5, 5000.0)).product();
        assert!((mag - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn steady_state_initial_conditions_pass_constants() {
        let lp = butterworth_lowpass(4, 10.0, 1000.0);
        let mut x = vec![3.0; 50];
        sosfilt_in_place(&lp, &mut x, Some(3.0));
        assert!(x.iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn passband_sine_keeps_unit_amplitude() {
        let rate = 5000.0;
        let out = filter_one(tone(10.0, rate, 5 * 5000), rate, 0.5, 80.0);
        let inner = &out[5000..out.len() - 5000];
        let amp = rms(inner) * 2f64.sqrt();
        assert!((0.95..=1.05).contains(&amp), "amplitude {amp}");
    }

    #[test]
    fn stopband_sine_is_attenuated() {
        let rate = 5000.0;
        let out = filter_one(tone(500.0, rate, 3 * 5000), rate, 0.5, 80.0);
        assert!(rms(&out[5000..10000]) < 0.05);
    }

    #[test]
    fn slow_drift_ramp_is_removed() {
        let rate = 250.0;
        let n = 60 * 250;
        let ramp: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 100.0).collect();
        let out = filter_one(ramp.clone(), rate, 0.5, 80.0);
        assert!(rms(&out) < 0.1 * rms(&ramp), "{} vs {}", rms(&out), rms(&ramp));
    }

    #[test]
    fn invalid_band_edges_error() {
        let rec = Recording::with_default_names(Array2::zeros((1, 100)), 100.0).unwrap();
        assert!(bandpass_filter(&rec, 0.0, 10.0).is_err());
        assert!(bandpass_filter(&rec, 10.0, 5.0).is_err());
        assert!(bandpass_filter(&rec, 1.0, 50.0).is_err());
    }
}
