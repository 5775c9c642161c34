//! Baseline correction and re-referencing.

use ndarray::Axis;

use super::recording::{LabelTrack, Recording};
use crate::error::{Error, Result};

/// Subtracts, per channel, the mean over the baseline interval from the whole channel.
pub fn baseline_correct(rec: &Recording, track: &LabelTrack) -> Result<Recording> {
    let base = track.baseline();
    let eps = 0.5 / rec.sample_rate_hz();
    if base.start_s < rec.start_time_s() - eps || base.end_s > rec.end_time_s() + eps {
        return Err(Error::NoBaseline(format!(
            "baseline [{}, {}) s lies outside the recording [{}, {}) s",
            base.start_s,
            base.end_s,
            rec.start_time_s(),
            rec.end_time_s()
        )));
    }
    let (first, last) = rec.sample_range(base.start_s, base.end_s);
    if last <= first {
        return Err(Error::NoBaseline("baseline interval contains no samples".into()));
    }
    let mut data = rec.data().clone();
    for mut row in data.axis_iter_mut(Axis(0)) {
        let mean = row.slice(ndarray::s![first..last]).mean().expect("non-empty baseline");
        row.mapv_inplace(|v| v - mean);
    }
    Ok(rec.with_data(data))
}

/// Re-expresses every channel relative to the instantaneous mean over channels.
pub fn rereference_common_average(rec: &Recording) -> Result<Recording> {
    if rec.n_channels() < 2 {
        return Err(Error::invalid("common average reference needs at least two channels"));
    }
    let mut data = rec.data().clone();
    let mean = data.mean_axis(Axis(0)).expect("at least two channels");
    for mut row in data.axis_iter_mut(Axis(0)) {
        row -= &mean;
    }
    Ok(rec.with_data(data))
}

/// Subtracts the average of two mastoid channels from every channel, sample by sample.
pub fn rereference_mastoid(rec: &Recording, left_name: &str, right_name: &str) -> Result<Recording> {
    let find = |name: &str| {
        rec.channel_index(name)
            .ok_or_else(|| Error::invalid(format!("mastoid channel `{name}` not found")))
    };
    let (left, right) = (find(left_name)?, find(right_name)?);
    let mut data = rec.data().clone();
    let reference = (&data.row(left) + &data.row(right)) * 0.5;
    for mut row in data.axis_iter_mut(Axis(0)) {
        row -= &reference;
    }
    Ok(rec.with_data(data))
}
