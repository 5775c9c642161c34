//! Per-channel magnitude spectra and band powers of fixed-length epochs.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Epoch;

/// One-sided magnitude spectrum, `[bins × channels]` with `bins = L/2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Array2<f64>,
    pub bin_hz: f64,
}

impl Spectrum {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    /// `ln(1 + |X|)` applied elementwise; the classifier's frequency-tower input.
    pub fn log_compressed(&self) -> Array2<f64> {
        self.magnitudes.mapv(f64::ln_1p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    #[default]
    None,
    Hann,
}

/// Canonical EEG bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl Band {
    pub const ALL: [Band; 5] = [Band::Delta, Band::Theta, Band::Alpha, Band::Beta, Band::Gamma];

    /// `[low, high)` edges in Hz.
    pub fn edges(self) -> (f64, f64) {
        match self {
            Band::Delta => (0.5, 4.0),
            Band::Theta => (4.0, 8.0),
            Band::Alpha => (8.0, 12.0),
            Band::Beta => (12.0, 30.0),
            Band::Gamma => (30.0, 80.0),
        }
    }
}

/// Reusable forward transform for one epoch length.
pub struct SpectrumPlan {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
    taper: Vec<f64>,
}

impl SpectrumPlan {
    pub fn new(len: usize, taper: Taper) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::invalid(format!(
                "epoch length must be a power of two, got {len}"
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(len);
        let taper = match taper {
            Taper::None => vec![1.0; len],
            Taper::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
                .collect(),
        };
        Ok(Self { len, fft, taper })
    }

    pub fn n_bins(&self) -> usize {
        self.len / 2 + 1
    }

    /// Magnitudes of a time-major `[L × d]` window.
    pub fn magnitudes(&self, window: &Array2<f64>) -> Result<Array2<f64>> {
        if window.nrows() != self.len {
            return Err(Error::ShapeMismatch {
                expected: format!("{} samples", self.len),
                got: format!("{} samples", window.nrows()),
            });
        }
        let bins = self.n_bins();
        let mut out = Array2::zeros((bins, window.ncols()));
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        for (c, column) in window.columns().into_iter().enumerate() {
            for ((slot, &v), &w) in buf.iter_mut().zip(column.iter()).zip(&self.taper) {
                *slot = Complex::new(v * w, 0.0);
            }
            self.fft.process(&mut buf);
            for k in 0..bins {
                out[[k, c]] = buf[k].norm();
            }
        }
        Ok(out)
    }
}

/// Unnormalized one-sided magnitude spectrum of every channel, without tapering.
pub fn fft_magnitude(epoch: &Epoch, sample_rate_hz: f64) -> Result<Spectrum> {
    fft_magnitude_tapered(epoch, sample_rate_hz, Taper::None)
}

pub fn fft_magnitude_tapered(epoch: &Epoch, sample_rate_hz: f64, taper: Taper) -> Result<Spectrum> {
    let plan = SpectrumPlan::new(epoch.len(), taper)?;
    Ok(Spectrum {
        magnitudes: plan.magnitudes(&epoch.window)?,
        bin_hz: sample_rate_hz / epoch.len() as f64,
    })
}

/// Sum of squared magnitudes over bins whose centre lies in `[low_hz, high_hz)`, per channel.
pub fn band_power(spec: &Spectrum, low_hz: f64, high_hz: f64) -> Result<Vec<f64>> {
    let nyquist = spec.bin_frequency(spec.n_bins() - 1);
    if !(low_hz >= 0.0 && low_hz < high_hz && high_hz <= nyquist + 1e-9) {
        return Err(Error::invalid(format!(
            "band must satisfy 0 <= low < high <= {nyquist} Hz, got {low_hz}..{high_hz}"
        )));
    }
    let mut power = vec![0.0; spec.magnitudes.ncols()];
    for k in 0..spec.n_bins() {
        let f = spec.bin_frequency(k);
        if f >= low_hz && f < high_hz {
            for (p, m) in power.iter_mut().zip(spec.magnitudes.row(k)) {
                *p += m * m;
            }
        }
    }
    Ok(power)
}

pub fn preset_band_power(spec: &Spectrum, band: Band) -> Result<Vec<f64>> {
    let (low, high) = band.edges();
    band_power(spec, low, high.min(spec.bin_frequency(spec.n_bins() - 1)))
}

/// Two-sided periodogram power `|X_k|^2` of a real signal of arbitrary length, one-sided bins.
pub fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf.into_iter().map(|c| c.norm_sqr()).collect()
}

/// Biased autocorrelation normalized so lag 0 equals 1, for lags `0..max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for (b, &v) in buf.iter_mut().zip(x) {
        *b = Complex::new(v - mean, 0.0);
    }
    fwd.process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex::new(c.norm_sqr(), 0.0));
    inv.process(&mut buf);
    let zero = buf[0].re;
    if zero <= 0.0 {
        return vec![0.0; max_lag.min(n)];
    }
    buf.iter().take(max_lag.min(n)).map(|c| c.re / zero).collect()
}
