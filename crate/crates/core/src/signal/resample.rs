//! Rational polyphase resampling with a Kaiser-windowed anti-aliasing low-pass.

use std::f64::consts::PI;

use ndarray::Array2;

use super::recording::Recording;
use crate::error::{Error, Result};

/// Largest numerator/denominator accepted for the up/down factors.
pub const MAX_RATIO_TERM: u64 = 10_000;
/// Kaiser window shape parameter.
pub const KAISER_BETA: f64 = 5.0;
/// Filter half-length in units of `max(up, down)`.
pub const HALF_LEN_FACTOR: usize = 10;

/// Reduces `ratio` to `(up, down)` with both terms at most [`MAX_RATIO_TERM`].
pub fn rational_ratio(ratio: f64) -> Result<(usize, usize)> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::invalid(format!(
            "resampling ratio must be positive, got {ratio}"
        )));
    }
    // Continued-fraction convergents p/q.
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut x = ratio;
    for _ in 0..64 {
        let a = x.floor();
        if a > MAX_RATIO_TERM as f64 {
            break;
        }
        let a = a as u64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if p2 > MAX_RATIO_TERM || q2 > MAX_RATIO_TERM {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let approx = p1 as f64 / q1 as f64;
        if ((approx - ratio) / ratio).abs() < 1e-12 {
            return Ok((p1 as usize, q1 as usize));
        }
        let frac = x - a as f64;
        if frac < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    Err(Error::invalid(format!(
        "ratio {ratio} is not a rational with terms <= {MAX_RATIO_TERM}"
    )))
}

fn bessel_i0(x: f64) -> f64 {
    let y = x * x / 4.0;
    let (mut sum, mut term, mut k) = (1.0, 1.0, 1.0);
    while term > sum * 1e-17 {
        term *= y / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Anti-aliasing prototype for an `up/down` conversion; DC gain equals `up`.
pub fn design_antialias(up: usize, down: usize) -> Vec<f64> {
    let max_rate = up.max(down);
    let half_len = HALF_LEN_FACTOR * max_rate;
    let n_taps = 2 * half_len + 1;
    let cutoff = 1.0 / max_rate as f64;
    let norm = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..n_taps)
        .map(|i| {
            let m = i as f64 - half_len as f64;
            let r = m / half_len as f64;
            let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
            cutoff * sinc(cutoff * m) * window
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v *= up as f64 / sum);
    h
}

/// Polyphase `up/down` conversion of one channel, aligned so output sample 0 sits at input time 0.
pub fn resample_poly(x: &[f64], up: usize, down: usize, h: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let half_len = (h.len() - 1) / 2;
    let n_out = (n * up).div_ceil(down);
    let mut y = Vec::with_capacity(n_out);
    for m in 0..n_out {
        // y[m] = sum_k x[k] h[m*down + half_len - k*up]
        let center = m * down + half_len;
        let k_max = (center / up).min(n - 1);
        let k_min = (center + 1).saturating_sub(h.len()).div_ceil(up);
        let mut acc = 0.0;
        let mut k = k_min;
        while k <= k_max {
            acc += x[k] * h[center - k * up];
            k += 1;
        }
        y.push(acc);
    }
    y
}

/// Resamples every channel to `target_hz`.
pub fn resample(rec: &Recording, target_hz: f64) -> Result<Recording> {
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(Error::invalid(format!("target rate must be positive, got {target_hz}")));
    }
    let (up, down) = rational_ratio(target_hz / rec.sample_rate_hz())?;
    if up == 1 && down == 1 {
        return Ok(rec.clone());
    }
    let h = design_antialias(up, down);
    let n_out = (rec.n_samples() * up).div_ceil(down);
    let mut out = Array2::zeros((rec.n_channels(), n_out));
    for (src, mut dst) in rec.data().outer_iter().zip(out.outer_iter_mut()) {
        let src = src.to_vec();
        for (d, v) in dst.iter_mut().zip(resample_poly(&src, up, down, &h)) {
            *d = v;
        }
    }
    Recording::new(out, target_hz, rec.channel_names().to_vec(), rec.start_time_s())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_eeg_rates() {
        assert_eq!(rational_ratio(256.0 / 5000.0).unwrap(), (32, 625));
        assert_eq!(rational_ratio(256.0 / 1000.0).unwrap(), (32, 125));
        assert_eq!(rational_ratio(2.0).unwrap(), (2, 1));
    }

    #[test]
    fn rejects_irrational_ratio() {
        assert!(rational_ratio(std::f64::consts::PI).is_err());
        assert!(rational_ratio(1.0 / 20_001.0).is_err());
    }

    #[test]
    fn one_second_stays_one_second() {
        let rec = Recording::with_default_names(Array2::zeros((2, 5000)), 5000.0).unwrap();
        let out = resample(&rec, 256.0).unwrap();
        assert_eq!(out.n_samples(), 256);
        assert_eq!(out.sample_rate_hz(), 256.0);
    }

    #[test]
    fn bessel_matches_reference() {
        // I0(1) and I0(5) to 12 significant digits.
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008).abs() < 1e-12);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_44).abs() < 1e-10);
    }

    #[test]
    fn filter_has_unit_passband_gain_per_phase() {
        let h = design_antialias(32, 625);
        let sum: f64 = h.iter().sum();
        assert!((sum - 32.0).abs() < 1e-9);
    }
}
