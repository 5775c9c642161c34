//! Rule-based component labeling.
//!
//! Stands in for a trained component classifier. Each component's time course
//! and mixing column are reduced to a handful of features, an ordered rule list
//! picks the category, and the scores put the winning category strictly above
//! every other one:
//!
//! 1. `eye_blink`: only when eyes are open, at least 70% of power below 3 Hz.
//! 2. `line_noise`: at least 60% of power within ±1 Hz of the mains frequency.
//! 3. `muscle`: more than 50% of power above 30 Hz, spread so that no 10 Hz
//!    window holds more than 40% of it. Narrowband high-frequency sources
//!    are oscillations rather than muscle.
//! 4. `heartbeat`: autocorrelation peak in the 0.6–1.5 s lag range standing
//!    at least 0.3 above the mean of that range.
//! 5. `channel_noise`: at least 90% of the mixing-column energy on one channel.
//! 6. `brain` if the log-log spectral slope over 1–40 Hz is at most −0.5,
//!    otherwise `other`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fastica::IcaModel;
use crate::error::{Error, Result};
use crate::signal::Recording;
use crate::spectral::{autocorrelation, power_spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Muscle,
    Heartbeat,
    LineNoise,
    ChannelNoise,
    EyeBlink,
    Brain,
    Other,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Muscle,
        Category::Heartbeat,
        Category::LineNoise,
        Category::ChannelNoise,
        Category::EyeBlink,
        Category::Brain,
        Category::Other,
    ];

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|&c| c == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Muscle => "muscle",
            Category::Heartbeat => "heartbeat",
            Category::LineNoise => "line_noise",
            Category::ChannelNoise => "channel_noise",
            Category::EyeBlink => "eye_blink",
            Category::Brain => "brain",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown component category `{s}`")))
    }
}

/// Thresholds of the rule list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerConfig {
    pub mains_hz: f64,
    pub line_halfwidth_hz: f64,
    pub line_fraction: f64,
    pub muscle_cutoff_hz: f64,
    pub muscle_fraction: f64,
    pub muscle_window_hz: f64,
    pub muscle_max_concentration: f64,
    pub heart_min_period_s: f64,
    pub heart_max_period_s: f64,
    pub heart_prominence: f64,
    pub channel_concentration: f64,
    pub slope_low_hz: f64,
    pub slope_high_hz: f64,
    pub brain_max_slope: f64,
    pub eyes_closed: bool,
    pub eye_cutoff_hz: f64,
    pub eye_fraction: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            mains_hz: 50.0,
            line_halfwidth_hz: 1.0,
            line_fraction: 0.6,
            muscle_cutoff_hz: 30.0,
            muscle_fraction: 0.5,
            muscle_window_hz: 10.0,
            muscle_max_concentration: 0.4,
            heart_min_period_s: 0.6,
            heart_max_period_s: 1.5,
            heart_prominence: 0.3,
            channel_concentration: 0.9,
            slope_low_hz: 1.0,
            slope_high_hz: 40.0,
            brain_max_slope: -0.5,
            eyes_closed: true,
            eye_cutoff_hz: 3.0,
            eye_fraction: 0.7,
        }
    }
}

/// Features the rules look at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentFeatures {
    pub line_fraction: f64,
    pub high_fraction: f64,
    /// Share of the above-cutoff power inside its densest `muscle_window_hz` window.
    pub high_concentration: f64,
    pub low_fraction: f64,
    pub heart_prominence: f64,
    pub channel_concentration: f64,
    pub spectral_slope: f64,
    pub dominant_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores {
    /// Probabilities indexed by [`Category::index`].
    pub probabilities: [f64; 7],
    pub features: ComponentFeatures,
}

impl ComponentScores {
    pub fn get(&self, c: Category) -> f64 {
        self.probabilities[c.index()]
    }

    pub fn argmax(&self) -> Category {
        let mut best = Category::ALL[0];
        for &c in &Category::ALL[1..] {
            if self.get(c) > self.get(best) {
                best = c;
            }
        }
        best
    }
}

fn features(source: &[f64], mixing_column: &[f64], fs: f64, cfg: &LabelerConfig) -> ComponentFeatures {
    let n = source.len();
    let power = power_spectrum(source);
    let df = fs / n as f64;
    let freq = |k: usize| k as f64 * df;
    let total: f64 = power.iter().skip(1).sum::<f64>().max(f64::MIN_POSITIVE);
    let fraction = |pred: &dyn Fn(f64) -> bool| {
        power
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(k, _)| pred(freq(*k)))
            .map(|(_, p)| p)
            .sum::<f64>()
            / total
    };
    let line_fraction = fraction(&|f| (f - cfg.mains_hz).abs() <= cfg.line_halfwidth_hz);
    let high_fraction = fraction(&|f| f > cfg.muscle_cutoff_hz);
    let low_fraction = fraction(&|f| f < cfg.eye_cutoff_hz);
    let high: Vec<f64> = power
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(k, _)| freq(*k) > cfg.muscle_cutoff_hz)
        .map(|(_, p)| *p)
        .collect();
    let high_total: f64 = high.iter().sum();
    let span = ((cfg.muscle_window_hz / df).round() as usize).clamp(1, high.len().max(1));
    let high_concentration = if high_total > 0.0 {
        let mut run: f64 = high.iter().take(span).sum();
        let mut best = run;
        for k in span..high.len() {
            run += high[k] - high[k - span];
            best = best.max(run);
        }
        (best / high_total).min(1.0)
    } else {
        0.0
    };
    let dominant_hz = power
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0.0, |(k, _)| freq(k));

    let lo_lag = (cfg.heart_min_period_s * fs).round() as usize;
    let hi_lag = (cfg.heart_max_period_s * fs).round() as usize;
    let heart_prominence = if hi_lag < n && hi_lag > lo_lag {
        let ac = autocorrelation(source, hi_lag + 1);
        let window = &ac[lo_lag..=hi_lag];
        let peak = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        peak - mean
    } else {
        0.0
    };

    let energy: f64 = mixing_column.iter().map(|v| v * v).sum();
    let channel_concentration = if energy > 0.0 {
        mixing_column.iter().map(|v| v * v).fold(0.0, f64::max) / energy
    } else {
        0.0
    };

    // Least-squares slope of log10 power on log10 frequency over 1 Hz bins.
    let mut pts = Vec::new();
    let mut f0 = cfg.slope_low_hz;
    while f0 + 1.0 <= cfg.slope_high_hz.min(fs / 2.0) + 1e-9 {
        let (mut acc, mut cnt) = (0.0, 0usize);
        for (k, p) in power.iter().enumerate().skip(1) {
            let f = freq(k);
            if f >= f0 && f < f0 + 1.0 {
                acc += p;
                cnt += 1;
            }
        }
        if cnt > 0 && acc > 0.0 {
            pts.push(((f0 + 0.5).log10(), (acc / cnt as f64).log10()));
        }
        f0 += 1.0;
    }
    let spectral_slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };

    ComponentFeatures {
        line_fraction,
        high_fraction,
        high_concentration,
        low_fraction,
        heart_prominence,
        channel_concentration,
        spectral_slope,
        dominant_hz,
    }
}

/// Applies the rule list and spreads probability mass so the winner is the strict argmax.
pub fn score_features(f: &ComponentFeatures, cfg: &LabelerConfig) -> ComponentScores {
    let mut evidence = [0.0; 7];
    evidence[Category::LineNoise.index()] = f.line_fraction / cfg.line_fraction;
    let spread = (cfg.muscle_max_concentration / f.high_concentration.max(f64::MIN_POSITIVE)).min(1.0);
    evidence[Category::Muscle.index()] = f.high_fraction / cfg.muscle_fraction * spread;
    evidence[Category::Heartbeat.index()] = f.heart_prominence.max(0.0) / cfg.heart_prominence;
    evidence[Category::ChannelNoise.index()] = f.channel_concentration / cfg.channel_concentration;
    evidence[Category::EyeBlink.index()] = if cfg.eyes_closed {
        0.0
    } else {
        f.low_fraction / cfg.eye_fraction
    };
    evidence[Category::Brain.index()] = (f.spectral_slope / cfg.brain_max_slope).clamp(0.0, 2.0);
    evidence[Category::Other.index()] = 0.5;

    let ev = |c: Category| evidence[c.index()];
    let winner = if !cfg.eyes_closed && ev(Category::EyeBlink) >= 1.0 {
        Category::EyeBlink
    } else if ev(Category::LineNoise) >= 1.0 {
        Category::LineNoise
    } else if f.high_fraction > cfg.muscle_fraction && f.high_concentration <= cfg.muscle_max_concentration {
        Category::Muscle
    } else if ev(Category::Heartbeat) >= 1.0 {
        Category::Heartbeat
    } else if ev(Category::ChannelNoise) >= 1.0 {
        Category::ChannelNoise
    } else if f.spectral_slope <= cfg.brain_max_slope {
        Category::Brain
    } else {
        Category::Other
    };

    let top = 0.6 + 0.3 * ev(winner).tanh();
    let rest_weight = |c: Category| {
        if c == winner || (c == Category::EyeBlink && cfg.eyes_closed) {
            0.0
        } else {
            ev(c) + 0.05
        }
    };
    let rest_total: f64 = Category::ALL.iter().map(|&c| rest_weight(c)).sum();
    let mut probabilities = [0.0; 7];
    for &c in &Category::ALL {
        probabilities[c.index()] = if c == winner {
            top
        } else {
            (1.0 - top) * rest_weight(c) / rest_total
        };
    }
    ComponentScores {
        probabilities,
        features: *f,
    }
}

/// Scores every component of `model` from its time course in `rec` and its mixing column.
pub fn label_components(model: &IcaModel, rec: &Recording, cfg: &LabelerConfig) -> Result<IcaModel> {
    let sources = model.sources(rec)?;
    let scores = sources
        .outer_iter()
        .zip(model.mixing.columns())
        .map(|(s, m)| {
            let f = features(&s.to_vec(), &m.to_vec(), rec.sample_rate_hz(), cfg);
            score_features(&f, cfg)
        })
        .collect();
    let mut out = model.clone();
    out.scores = scores;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats() -> ComponentFeatures {
        ComponentFeatures {
            line_fraction: 0.01,
            high_fraction: 0.05,
            high_concentration: 0.3,
            low_fraction: 0.3,
            heart_prominence: 0.02,
            channel_concentration: 0.2,
            spectral_slope: -1.0,
            dominant_hz: 2.0,
        }
    }

    #[test]
    fn scores_sum_to_one_with_winner_on_top() {
        let cfg = LabelerConfig::default();
        let mut f = feats();
        for (line, high, slope) in [(0.9, 0.95, -0.2), (0.0, 0.7, 0.3), (0.0, 0.0, -1.2), (0.0, 0.1, 0.5)] {
            f.line_fraction = line;
            f.high_fraction = high;
            f.spectral_slope = slope;
            let s = score_features(&f, &cfg);
            let sum: f64 = s.probabilities.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert_eq!(s.get(Category::EyeBlink), 0.0);
        }
    }

    #[test]
    fn rule_order() {
        let cfg = LabelerConfig::default();
        let mut f = feats();
        assert_eq!(score_features(&f, &cfg).argmax(), Category::Brain);
        f.spectral_slope = 0.1;
        assert_eq!(score_features(&f, &cfg).argmax(), Category::Other);
        f.channel_concentration = 0.95;
        assert_eq!(score_features(&f, &cfg).argmax(), Category::ChannelNoise);
        f.heart_prominence = 0.5;
        assert_eq!(score_features(&f, &cfg).argmax(), Category::Heartbeat);
        f.high_fraction = 0.6;
        assert_eq!(score_features(&f, &cfg).argmax(), Category::Muscle);
        f.high_concentration = 0.8;
        assert_ne!(score_features(&f, &cfg).argmax(), Category::Muscle);
        f.high_concentration = 0.3;
        f.line_fraction = 0.7;
        assert_eq!(score_features(&f, &cfg).argmax(), Category::LineNoise);
    }

    #[test]
    fn eye_blink_only_with_eyes_open() {
        let mut f = feats();
        f.low_fraction = 0.95;
        let closed = LabelerConfig::default();
        assert_ne!(score_features(&f, &closed).argmax(), Category::EyeBlink);
        let open = LabelerConfig {
            eyes_closed: false,
            ..LabelerConfig::default()
        };
        assert_eq!(score_features(&f, &open).argmax(), Category::EyeBlink);
    }

    #[test]
    fn category_names_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.name().parse::<Category>().unwrap(), c);
        }
        assert!("blink".parse::<Category>().is_err());
    }
}
