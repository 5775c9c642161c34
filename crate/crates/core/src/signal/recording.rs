use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class of a stimulus segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Fake];

    /// Class index used by the classifier head (real = 0, fake = 1).
    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Interval tag on the session timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Real,
    Fake,
    Silence,
    Baseline,
}

impl Tag {
    pub fn label(self) -> Option<Label> {
        match self {
            Tag::Real => Some(Label::Real),
            Tag::Fake => Some(Label::Fake),
            Tag::Silence | Tag::Baseline => None,
        }
    }
}

/// Multichannel, uniformly sampled signal in microvolts.
///
/// `data` is laid out channel-major: one row per channel, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    data: Array2<f64>,
    sample_rate_hz: f64,
    channel_names: Vec<String>,
    start_time_s: f64,
}

impl Recording {
    pub fn new(data: Array2<f64>, sample_rate_hz: f64, channel_names: Vec<String>, start_time_s: f64) -> Result<Self> {
        if channel_names.len() != data.nrows() {
            return Err(Error::invalid(format!(
                "{} channel names for {} data rows",
                channel_names.len(),
                data.nrows()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !start_time_s.is_finite() {
            return Err(Error::invalid("start time must be finite"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at flat index {pos}")));
        }
        Ok(Self {
            data,
            sample_rate_hz,
            channel_names,
            start_time_s,
        })
    }

    /// Builds a recording with generated channel names `ch0`, `ch1`, ...
    pub fn with_default_names(data: Array2<f64>, sample_rate_hz: f64) -> Result<Self> {
        let names = (0..data.nrows()).map(|i| format!("ch{i}")).collect();
        Self::new(data, sample_rate_hz, names, 0.0)
    }

    /// Same metadata, new samples. Callers guarantee the row count is unchanged.
    pub(crate) fn with_data(&self, data: Array2<f64>) -> Self {
        debug_assert_eq!(data.nrows(), self.channel_names.len());
        Self {
            data,
            sample_rate_hz: self.sample_rate_hz,
            channel_names: self.channel_names.clone(),
            start_time_s: self.start_time_s,
        }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    pub fn end_time_s(&self) -> f64 {
        self.start_time_s + self.duration_s()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|n| n == name)
    }

    /// Sample index range `[first, last)` whose sample times fall in `[start_s, end_s)`.
    pub fn sample_range(&self, start_s: f64, end_s: f64) -> (usize, usize) {
        let to_index = |t: f64| {
            let idx = ((t - self.start_time_s) * self.sample_rate_hz - 1e-9).ceil();
            idx.clamp(0.0, self.n_samples() as f64) as usize
        };
        (to_index(start_s), to_index(end_s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
    pub tag: Tag,
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64, tag: Tag) -> Self {
        Self { start_s, end_s, tag }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Length of the intersection with `[a, b)`.
    pub fn overlap_with(&self, a: f64, b: f64) -> f64 {
        (self.end_s.min(b) - self.start_s.max(a)).max(0.0)
    }
}

/// Session timeline of tagged, sorted, non-overlapping intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    intervals: Vec<Interval>,
}

impl LabelTrack {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        for iv in &intervals {
            if !(iv.start_s.is_finite() && iv.end_s.is_finite()) || iv.start_s >= iv.end_s {
                return Err(Error::invalid(format!(
                    "interval [{}, {}) must satisfy start < end",
                    iv.start_s, iv.end_s
                )));
            }
        }
        for pair in intervals.windows(2) {
            if pair[1].start_s < pair[0].end_s {
                return Err(Error::invalid(format!(
                    "intervals [{}, {}) and [{}, {}) overlap or are unsorted",
                    pair[0].start_s, pair[0].end_s, pair[1].start_s, pair[1].end_s
                )));
            }
        }
        let baselines: Vec<usize> = intervals
            .iter()
            .enumerate()
            .filter(|(_, iv)| iv.tag == Tag::Baseline)
            .map(|(i, _)| i)
            .collect();
        if baselines.len() != 1 {
            return Err(Error::invalid(format!(
                "expected exactly one baseline interval, found {}",
                baselines.len()
            )));
        }
        let b = baselines[0];
        if intervals[..b].iter().any(|iv| matches!(iv.tag, Tag::Real | Tag::Fake)) {
            return Err(Error::invalid("baseline must precede all stimulus intervals"));
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn baseline(&self) -> &Interval {
        self.intervals
            .iter()
            .find(|iv| iv.tag == Tag::Baseline)
            .expect("validated on construction")
    }

    pub fn start_s(&self) -> f64 {
        self.intervals.first().map_or(0.0, |iv| iv.start_s)
    }

    pub fn end_s(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.end_s)
    }

    /// Total duration carrying `tag`.
    pub fn total_s(&self, tag: Tag) -> f64 {
        self.intervals
            .iter()
            .filter(|iv| iv.tag == tag)
            .map(Interval::duration_s)
            .sum()
    }

    /// Intervals intersecting `[a, b)` with a positive-length overlap.
    pub fn overlapping(&self, a: f64, b: f64) -> impl Iterator<Item = &Interval> {
        // Sorted, so a binary search finds the first candidate.
        let first = self.intervals.partition_point(|iv| iv.end_s <= a);
        self.intervals[first..]
            .iter()
            .take_while(move |iv| iv.start_s < b)
            .filter(move |iv| iv.overlap_with(a, b) > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_name_count_mismatch() {
        let data = array![[1.0, 2.0], [3.0, 4.0]];
        assert!(Recording::new(data, 100.0, vec!["a".into()], 0.0).is_err());
    }

    #[test]
    fn rejects_non_finite_samples() {
        let data = array![[1.0, f64::NAN]];
        assert!(Recording::with_default_names(data, 100.0).is_err());
    }

    #[test]
    fn track_requires_single_leading_baseline() {
        let ok = LabelTrack::new(vec![
            Interval::new(0.0, 10.0, Tag::Baseline),
            Interval::new(10.0, 20.0, Tag::Real),
        ]);
        assert!(ok.is_ok());

        let late = LabelTrack::new(vec![
            Interval::new(0.0, 10.0, Tag::Real),
            Interval::new(10.0, 20.0, Tag::Baseline),
        ]);
        assert!(late.is_err());

        let none = LabelTrack::new(vec![Interval::new(0.0, 10.0, Tag::Real)]);
        assert!(none.is_err());
    }

    #[test]
    fn track_rejects_overlap() {
        let r = LabelTrack::new(vec![
            Interval::new(0.0, 10.0, Tag::Baseline),
            Interval::new(9.0, 20.0, Tag::Real),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn overlapping_query_skips_touching_intervals() {
        let t = LabelTrack::new(vec![
            Interval::new(0.0, 10.0, Tag::Baseline),
            Interval::new(10.0, 20.0, Tag::Real),
            Interval::new(20.0, 30.0, Tag::Fake),
        ])
        .unwrap();
        let hits: Vec<Tag> = t.overlapping(10.0, 20.0).map(|iv| iv.tag).collect();
        assert_eq!(hits, vec![Tag::Real]);
        let hits: Vec<Tag> = t.overlapping(15.0, 25.0).map(|iv| iv.tag).collect();
        assert_eq!(hits, vec![Tag::Real, Tag::Fake]);
    }
}
