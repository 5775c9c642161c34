//! Labeled point clouds and their file format: a TOML header with the labels
//! plus a row-major `f32` sidecar.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, FORMAT_VERSION};
use crate::signal::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    /// `[n × dim]`.
    pub points: Array2<f64>,
    pub labels: Vec<Label>,
    /// Origin tag such as `eeg` or `audio-repr`.
    pub source: String,
}

impl PointCloud {
    pub fn new(points: Array2<f64>, labels: Vec<Label>, source: impl Into<String>) -> Result<Self> {
        if labels.len() != points.nrows() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", points.nrows()),
                got: format!("{} labels", labels.len()),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point cloud holds non-finite coordinates"));
        }
        Ok(Self {
            points,
            labels,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Points reordered by `order` (new position `i` holds old point `order[i]`).
    pub fn permuted(&self, order: &[usize]) -> PointCloud {
        PointCloud {
            points: self.points.select(ndarray::Axis(0), order),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            source: self.source.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CloudHeader {
    format_version: u32,
    source: String,
    n_points: usize,
    dim: usize,
    data_file: String,
    labels: Vec<Label>,
}

pub fn write_cloud(header: &Path, cloud: &PointCloud) -> Result<()> {
    let data_file = io::default_sidecar_name(header, "f32");
    io::write_bytes(
        &io::sidecar(header, &data_file),
        &io::f32_bytes(cloud.points.iter().copied()),
    )?;
    io::write_toml(
        header,
        &CloudHeader {
            format_version: FORMAT_VERSION,
            source: cloud.source.clone(),
            n_points: cloud.len(),
            dim: cloud.dim(),
            data_file,
            labels: cloud.labels.clone(),
        },
    )
}

pub fn read_cloud(header: &Path) -> Result<PointCloud> {
    let h: CloudHeader = io::read_toml(header)?;
    if h.labels.len() != h.n_points {
        return Err(Error::format(
            header,
            format!("{} labels for {} points", h.labels.len(), h.n_points),
        ));
    }
    let values = io::read_f32s(&io::sidecar(header, &h.data_file), h.n_points * h.dim)?;
    let points =
        Array2::from_shape_vec((h.n_points, h.dim), values).map_err(|e| Error::format(header, e.to_string()))?;
    PointCloud::new(points, h.labels, h.source).map_err(|e| Error::format(header, e.to_string()))
}
