//! Synthetic EEG-like recordings: pink background per channel, class-dependent
//! narrowband responses during real/fake intervals, and optional artifacts.
//!
//! Amplitudes are RMS microvolts. The class signature is a band-limited power
//! increase carried by one spatial pattern; it is synthetic and makes no
//! physiological claim.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::filter::{butterworth_highpass, butterworth_lowpass, sosfilt_in_place};
use crate::signal::{LabelTrack, Recording, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSignature {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub amplitude_uv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactSpec {
    pub line_noise_hz: f64,
    pub line_noise_uv: f64,
    /// Mean burst rate (Poisson).
    pub muscle_rate_hz: f64,
    pub muscle_uv: f64,
    pub heartbeat_bpm: f64,
    pub heartbeat_uv: f64,
    pub drift_uv: f64,
}

impl Default for ArtifactSpec {
    fn default() -> Self {
        Self {
            line_noise_hz: 50.0,
            line_noise_uv: 4.0,
            muscle_rate_hz: 0.2,
            muscle_uv: 15.0,
            heartbeat_bpm: 70.0,
            heartbeat_uv: 6.0,
            drift_uv: 20.0,
        }
    }
}

impl ArtifactSpec {
    pub fn none() -> Self {
        Self {
            line_noise_uv: 0.0,
            muscle_uv: 0.0,
            heartbeat_uv: 0.0,
            drift_uv: 0.0,
            ..Self::default()
        }
    }
}

/// Linear drift of the fake response over the session, toward the real response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureDrift {
    /// Fake-response centre frequency reached at the end of the session.
    pub fake_center_end_hz: f64,
    /// Share of the real spatial pattern in the fake pattern at session end, in `[0, 1]`.
    pub pattern_mix_end: f64,
    /// Fake-response amplitude reached at session end; unchanged when absent.
    #[serde(default)]
    pub fake_amplitude_end_uv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignatureSpec {
    /// RMS of the pink background on each channel.
    pub background_uv: f64,
    pub real_signature: BandSignature,
    pub fake_signature: BandSignature,
    pub artifacts: ArtifactSpec,
    pub drift: Option<SignatureDrift>,
}

impl Default for SignatureSpec {
    fn default() -> Self {
        Self {
            background_uv: 10.0,
            real_signature: BandSignature {
                center_hz: 10.0,
                bandwidth_hz: 4.0,
                amplitude_uv: 0.0,
            },
            fake_signature: BandSignature {
                center_hz: 38.0,
                bandwidth_hz: 10.0,
                amplitude_uv: 6.0,
            },
            artifacts: ArtifactSpec::default(),
            drift: None,
        }
    }
}

impl SignatureSpec {
    fn validate(&self, rate_hz: f64) -> Result<()> {
        let nyquist = rate_hz / 2.0;
        for (name, s) in [("real", &self.real_signature), ("fake", &self.fake_signature)] {
            if s.amplitude_uv < 0.0 || s.bandwidth_hz <= 0.0 {
                return Err(Error::invalid(format!(
                    "{name} signature needs amplitude >= 0 and bandwidth > 0"
                )));
            }
            if s.center_hz - s.bandwidth_hz / 2.0 <= 0.0 || s.center_hz + s.bandwidth_hz / 2.0 >= nyquist {
                return Err(Error::invalid(format!(
                    "{name} signature band must lie inside (0, {nyquist}) Hz"
                )));
            }
        }
        let a = &self.artifacts;
        if [
            self.background_uv,
            a.line_noise_uv,
            a.muscle_uv,
            a.heartbeat_uv,
            a.drift_uv,
            a.muscle_rate_hz,
        ]
        .iter()
        .any(|v| *v < 0.0)
        {
            return Err(Error::invalid("amplitudes and rates must be non-negative"));
        }
        if a.line_noise_uv > 0.0 && a.line_noise_hz >= nyquist {
            return Err(Error::invalid("line-noise frequency must be below Nyquist"));
        }
        if let Some(d) = &self.drift {
            let half = self.fake_signature.bandwidth_hz / 2.0;
            if d.fake_center_end_hz - half <= 0.0 || d.fake_center_end_hz + half >= nyquist {
                return Err(Error::invalid("drift end band must lie inside (0, Nyquist)"));
            }
            if !(0.0..=1.0).contains(&d.pattern_mix_end) {
                return Err(Error::invalid("pattern_mix_end must lie in [0, 1]"));
            }
            if d.fake_amplitude_end_uv.is_some_and(|a| a.is_nan() || a < 0.0) {
                return Err(Error::invalid("fake_amplitude_end_uv must be non-negative"));
            }
        }
        Ok(())
    }
}

const EASYCAP_64: [&str; 64] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "T7", "C3", "Cz", "C4", "T8", "TP9", "CP5",
    "CP1", "CP2", "CP6", "TP10", "P7", "P3", "Pz", "P4", "P8", "PO9", "O1", "Oz", "O2", "PO10", "AF7", "AF3", "AF4",
    "AF8", "F5", "F1", "F2", "F6", "FT9", "FT7", "FC3", "FC4", "FT8", "FT10", "C5", "C1", "C2", "C6", "TP7", "CP3",
    "CPz", "CP4", "TP8", "P5", "P1", "P2", "P6", "PO7", "PO3", "POz", "PO4", "PO8",
];

/// Left and right mastoid channel names used by [`channel_names`].
pub const MASTOIDS: (&str, &str) = ("TP9", "TP10");

/// Electrode names for `n` channels; the two mastoids are always present when `n >= 2`.
pub fn channel_names(n: usize) -> Vec<String> {
    if n >= 64 {
        let mut names: Vec<String> = EASYCAP_64.iter().map(|s| s.to_string()).collect();
        names.extend((64..n).map(|i| format!("X{i}")));
        return names;
    }
    if n < 2 {
        return EASYCAP_64[..n].iter().map(|s| s.to_string()).collect();
    }
    let mut names: Vec<String> = EASYCAP_64
        .iter()
        .filter(|s| **s != MASTOIDS.0 && **s != MASTOIDS.1)
        .take(n - 2)
        .map(|s| s.to_string())
        .collect();
    names.push(MASTOIDS.0.into());
    names.push(MASTOIDS.1.into());
    names
}

/// Independent random stream `stream` of generator `seed`.
fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

mod streams {
    pub const PATTERNS: u64 = 1;
    pub const REAL: u64 = 2;
    pub const FAKE: u64 = 3;
    pub const LINE: u64 = 4;
    pub const MUSCLE: u64 = 5;
    pub const HEART: u64 = 6;
    pub const DRIFT: u64 = 7;
    pub const CHANNEL_BASE: u64 = 1000;
}

/// Pink noise from Paul Kellet's refined filter on white Gaussian input, scaled to `rms`.
pub fn pink_noise(n: usize, rms: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let white: f64 = StandardNormal.sample(rng);
            b[0] = 0.99886 * b[0] + white * 0.0555179;
            b[1] = 0.99332 * b[1] + white * 0.0750759;
            b[2] = 0.96900 * b[2] + white * 0.1538520;
            b[3] = 0.86650 * b[3] + white * 0.3104856;
            b[4] = 0.55000 * b[4] + white * 0.5329522;
            b[5] = -0.7616 * b[5] - white * 0.0168980;
            let pink = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + white * 0.5362;
            b[6] = white * 0.115926;
            pink
        })
        .collect();
    normalize_rms(&mut out, rms);
    out
}

fn normalize_rms(x: &mut [f64], rms: f64) {
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let cur = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    let scale = if cur > 0.0 { rms / cur } else { 0.0 };
    x.iter_mut().for_each(|v| *v = (*v - mean) * scale);
}

/// Band-limited Gaussian noise of length `n` with the given RMS.
pub fn narrowband_noise(
    n: usize,
    center_hz: f64,
    bandwidth_hz: f64,
    rms: f64,
    rate_hz: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    // Half a second of lead-in lets the filter settle before the kept part.
    let lead = (0.5 * rate_hz) as usize;
    let mut x: Vec<f64> = (0..n + lead).map(|_| StandardNormal.sample(rng)).collect();
    let mut sections = butterworth_highpass(4, center_hz - bandwidth_hz / 2.0, rate_hz);
    sections.extend(butterworth_lowpass(4, center_hz + bandwidth_hz / 2.0, rate_hz));
    sosfilt_in_place(&sections, &mut x, None);
    let mut out = x.split_off(lead);
    normalize_rms(&mut out, rms);
    out
}

/// Unit-RMS spatial pattern.
fn random_pattern(channels: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut p: Vec<f64> = (0..channels).map(|_| StandardNormal.sample(rng)).collect();
    let rms = (p.iter().map(|v| v * v).sum::<f64>() / channels as f64).sqrt();
    p.iter_mut().for_each(|v| *v /= rms.max(f64::MIN_POSITIVE));
    p
}

/// Pattern concentrated on a few neighbouring channels, as for temporal muscle activity.
fn focal_pattern(channels: usize, rng: &mut impl Rng) -> Vec<f64> {
    let center = rng.random_range(0..channels);
    let mut p: Vec<f64> = (0..channels)
        .map(|c| {
            let d = (c as f64 - center as f64).abs();
            (-d * d / 2.0).exp() * (0.5 + rng.random::<f64>())
        })
        .collect();
    let rms = (p.iter().map(|v| v * v).sum::<f64>() / channels as f64).sqrt();
    p.iter_mut().for_each(|v| *v /= rms);
    p
}

fn add_source(data: &mut Array2<f64>, pattern: &[f64], start: usize, source: &[f64]) {
    for (c, &w) in pattern.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut row = data.row_mut(c);
        for (i, v) in source.iter().enumerate() {
            row[start + i] += w * v;
        }
    }
}

/// Raised-cosine edges of `ramp` samples on a burst.
fn taper_edges(x: &mut [f64], ramp: usize) {
    let n = x.len();
    let ramp = ramp.min(n / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
}

/// Generates a recording spanning `track`; deterministic in `seed`.
pub fn gen_recording(
    track: &LabelTrack,
    sig: &SignatureSpec,
    channels: usize,
    rate_hz: f64,
    seed: u64,
) -> Result<Recording> {
    if channels == 0 {
        return Err(Error::invalid("at least one channel is required"));
    }
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    sig.validate(rate_hz)?;
    let t0 = track.start_s();
    let n = ((track.end_s() - t0) * rate_hz).round() as usize;
    let mut data = Array2::zeros((channels, n));

    for c in 0..channels {
        let mut rng = stream(seed, streams::CHANNEL_BASE + c as u64);
        let noise = pink_noise(n, sig.background_uv, &mut rng);
        data.row_mut(c).iter_mut().zip(noise).for_each(|(d, v)| *d = v);
    }

    let mut pat_rng = stream(seed, streams::PATTERNS);
    let real_pattern = random_pattern(channels, &mut pat_rng);
    let fake_pattern = random_pattern(channels, &mut pat_rng);
    let line_pattern = random_pattern(channels, &mut pat_rng);
    let muscle_pattern = focal_pattern(channels, &mut pat_rng);
    let heart_pattern = random_pattern(channels, &mut pat_rng);

    let session = (track.end_s() - t0).max(f64::MIN_POSITIVE);
    let ramp = (0.05 * rate_hz) as usize;
    let mut real_rng = stream(seed, streams::REAL);
    let mut fake_rng = stream(seed, streams::FAKE);
    for iv in track.intervals() {
        let (first, last) = (
            (((iv.start_s - t0) * rate_hz).round() as usize).min(n),
            (((iv.end_s - t0) * rate_hz).round() as usize).min(n),
        );
        if last <= first {
            continue;
        }
        let len = last - first;
        let (band, pattern, rng) = match iv.tag {
            Tag::Real => (sig.real_signature, real_pattern.clone(), &mut real_rng),
            Tag::Fake => {
                let mut band = sig.fake_signature;
                let mut pattern = fake_pattern.clone();
                if let Some(d) = &sig.drift {
                    let progress = ((iv.start_s + iv.end_s) / 2.0 - t0) / session;
                    band.center_hz += (d.fake_center_end_hz - band.center_hz) * progress;
                    if let Some(end) = d.fake_amplitude_end_uv {
                        band.amplitude_uv += (end - band.amplitude_uv) * progress;
                    }
                    let mix = d.pattern_mix_end * progress;
                    pattern = fake_pattern
                        .iter()
                        .zip(&real_pattern)
                        .map(|(f, r)| (1.0 - mix) * f + mix * r)
                        .collect();
                }
                (band, pattern, &mut fake_rng)
            }
            Tag::Silence | Tag::Baseline => continue,
        };
        if band.amplitude_uv == 0.0 {
            continue;
        }
        let mut burst = narrowband_noise(len, band.center_hz, band.bandwidth_hz, band.amplitude_uv, rate_hz, rng);
        taper_edges(&mut burst, ramp);
        add_source(&mut data, &pattern, first, &burst);
    }

    let a = &sig.artifacts;
    if a.line_noise_uv > 0.0 {
        let phase = stream(seed, streams::LINE).random::<f64>() * 2.0 * PI;
        // RMS of a sine is amplitude / sqrt(2).
        let amp = a.line_noise_uv * 2f64.sqrt();
        let line: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * PI * a.line_noise_hz * i as f64 / rate_hz + phase).sin())
            .collect();
        add_source(&mut data, &line_pattern, 0, &line);
    }
    if a.muscle_uv > 0.0 && a.muscle_rate_hz > 0.0 {
        let mut rng = stream(seed, streams::MUSCLE);
        let mut t = 0.0;
        loop {
            t += -rng.random::<f64>().max(f64::MIN_POSITIVE).ln() / a.muscle_rate_hz;
            let dur = rng.random_range(0.2..0.5);
            let first = (t * rate_hz) as usize;
            let len = (dur * rate_hz) as usize;
            if first + len >= n || len < 4 {
                break;
            }
            let mut burst: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let hp = butterworth_highpass(4, 30.0_f64.min(rate_hz / 4.0), rate_hz);
            sosfilt_in_place(&hp, &mut burst, None);
            normalize_rms(&mut burst, a.muscle_uv);
            taper_edges(&mut burst, len / 4);
            add_source(&mut data, &muscle_pattern, first, &burst);
        }
    }
    if a.heartbeat_uv > 0.0 && a.heartbeat_bpm > 0.0 {
        let mut rng = stream(seed, streams::HEART);
        let period = 60.0 / a.heartbeat_bpm;
        let width = 0.012 * rate_hz;
        let half = (5.0 * width).ceil() as isize;
        let mut ecg = vec![0.0; n];
        let mut t = rng.random::<f64>() * period;
        while t * rate_hz < n as f64 {
            let center = (t * rate_hz) as isize;
            for k in -half..=half {
                let idx = center + k;
                if idx >= 0 && (idx as usize) < n {
                    ecg[idx as usize] += (-(k as f64 / width).powi(2) / 2.0).exp();
                }
            }
            t += period * (1.0 + 0.02 * (rng.random::<f64>() - 0.5));
        }
        normalize_rms(&mut ecg, a.heartbeat_uv);
        add_source(&mut data, &heart_pattern, 0, &ecg);
    }
    if a.drift_uv > 0.0 {
        let mut rng = stream(seed, streams::DRIFT);
        for c in 0..channels {
            let f = rng.random_range(0.01..0.05);
            let phase = rng.random::<f64>() * 2.0 * PI;
            let amp = a.drift_uv * 2f64.sqrt();
            data.row_mut(c).iter_mut().enumerate().for_each(|(i, v)| {
                *v += amp * (2.0 * PI * f * i as f64 / rate_hz + phase).sin();
            });
        }
    }

    Recording::new(data, rate_hz, channel_names(channels), t0)
}
