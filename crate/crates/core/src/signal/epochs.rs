//! Overlapping-window segmentation and interval labeling.

use ndarray::{s, Array2};

use super::recording::{Label, LabelTrack, Recording, Tag};
use crate::error::{Error, Result};

/// One fixed-length window, stored time-major as `[L × d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub window: Array2<f64>,
    pub label: Option<Label>,
    pub origin_time_s: f64,
}

impl Epoch {
    pub fn len(&self) -> usize {
        self.window.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.window.nrows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.window.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub epochs: Vec<Epoch>,
    pub window_s: f64,
    pub overlap_fraction: f64,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
}

impl EpochSet {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Window length in samples.
    pub fn window_len(&self) -> usize {
        (self.window_s * self.sample_rate_hz).round() as usize
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn is_time_ordered(&self) -> bool {
        self.epochs.windows(2).all(|w| w[0].origin_time_s <= w[1].origin_time_s)
    }

    /// Labels of every epoch; errors if any epoch is unlabeled.
    pub fn labels(&self) -> Result<Vec<Label>> {
        self.epochs
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.label
                    .ok_or_else(|| Error::invalid(format!("epoch {i} carries no label")))
            })
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.epochs.iter().filter(|e| e.label == Some(label)).count()
    }

    /// New set holding clones of the epochs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        EpochSet {
            epochs: indices.iter().map(|&i| self.epochs[i].clone()).collect(),
            window_s: self.window_s,
            overlap_fraction: self.overlap_fraction,
            sample_rate_hz: self.sample_rate_hz,
            channel_names: self.channel_names.clone(),
        }
    }
}

fn integral(x: f64, what: &str) -> Result<usize> {
    let r = x.round();
    if r < 1.0 || (x - r).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "{what} must be a positive integer sample count, got {x}"
        )));
    }
    Ok(r as usize)
}

/// Window length and hop in samples for the given rate.
pub fn window_and_hop(sample_rate_hz: f64, window_s: f64, overlap_fraction: f64) -> Result<(usize, usize)> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::invalid(format!(
            "overlap fraction must lie in [0, 1), got {overlap_fraction}"
        )));
    }
    let len = integral(window_s * sample_rate_hz, "window length")?;
    let hop = integral(len as f64 * (1.0 - overlap_fraction), "hop")?;
    Ok((len, hop))
}

/// Number of full windows of `len` samples at `hop` spacing in `n` samples.
pub fn window_count(n: usize, len: usize, hop: usize) -> usize {
    if n < len {
        0
    } else {
        (n - len) / hop + 1
    }
}

/// Cuts the recording into overlapping windows; the trailing partial window is dropped.
pub fn segment(rec: &Recording, window_s: f64, overlap_fraction: f64) -> Result<EpochSet> {
    let (len, hop) = window_and_hop(rec.sample_rate_hz(), window_s, overlap_fraction)?;
    let count = window_count(rec.n_samples(), len, hop);
    let epochs = (0..count)
        .map(|k| {
            let start = k * hop;
            let window = rec.data().slice(s![.., start..start + len]).t().to_owned();
            Epoch {
                window,
                label: None,
                origin_time_s: rec.start_time_s() + start as f64 / rec.sample_rate_hz(),
            }
        })
        .collect();
    Ok(EpochSet {
        epochs,
        window_s,
        overlap_fraction,
        sample_rate_hz: rec.sample_rate_hz(),
        channel_names: rec.channel_names().to_vec(),
    })
}

/// Label for the span `[start, end)`, `None` if it touches silence or baseline.
pub fn label_span(track: &LabelTrack, start_s: f64, end_s: f64) -> Result<Option<Label>> {
    let span = end_s - start_s;
    // Tolerance for float round-off in epoch origins.
    let tol = 1e-9 * span.max(1.0);
    let (mut covered, mut real, mut fake) = (0.0, 0.0, 0.0);
    let mut excluded = false;
    for iv in track.overlapping(start_s, end_s) {
        let ov = iv.overlap_with(start_s, end_s);
        covered += ov;
        match iv.tag {
            Tag::Real => real += ov,
            Tag::Fake => fake += ov,
            Tag::Silence | Tag::Baseline => excluded |= ov > tol,
        }
    }
    if covered < span - tol {
        return Err(Error::UnlabeledRegion { start_s, end_s });
    }
    if excluded {
        return Ok(None);
    }
    Ok(Some(if real > fake { Label::Real } else { Label::Fake }))
}

/// Drops windows touching silence or baseline and labels the rest by majority overlap (tie → fake).
pub fn label_epochs(set: &EpochSet, track: &LabelTrack) -> Result<EpochSet> {
    let dur = set.window_len() as f64 / set.sample_rate_hz;
    let mut epochs = Vec::with_capacity(set.len());
    for e in &set.epochs {
        if let Some(label) = label_span(track, e.origin_time_s, e.origin_time_s + dur)? {
            epochs.push(Epoch {
                window: e.window.clone(),
                label: Some(label),
                origin_time_s: e.origin_time_s,
            });
        }
    }
    Ok(EpochSet {
        epochs,
        window_s: set.window_s,
        overlap_fraction: set.overlap_fraction,
        sample_rate_hz: set.sample_rate_hz,
        channel_names: set.channel_names.clone(),
    })
}
