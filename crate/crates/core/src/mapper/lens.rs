//! Lens functions: principal components, kernel density and coordinate selection.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LensKind {
    /// Scores on the first two principal components.
    Pca2,
    /// Gaussian kernel density of every point, relative to the densest point.
    Density,
    /// Selected coordinates, used as-is.
    CustomAxis { axes: Vec<usize> },
}

impl LensKind {
    pub fn name(&self) -> String {
        match self {
            LensKind::Pca2 => "pca2".into(),
            LensKind::Density => "density".into(),
            LensKind::CustomAxis { axes } => format!(
                "custom-axis({})",
                axes.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
            ),
        }
    }
}

/// Lens values `[n × m]` for every point.
pub fn lens(cloud: &PointCloud, kind: &LensKind) -> Result<Array2<f64>> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::invalid(format!("a lens needs at least 2 points, got {n}")));
    }
    match kind {
        LensKind::Pca2 => pca2(&cloud.points),
        LensKind::Density => {
            let rel = relative_density(&cloud.points);
            Ok(rel.insert_axis(Axis(1)))
        }
        LensKind::CustomAxis { axes } => {
            if axes.is_empty() {
                return Err(Error::invalid("custom-axis lens needs at least one axis"));
            }
            if let Some(&bad) = axes.iter().find(|&&a| a >= cloud.dim()) {
                return Err(Error::invalid(format!(
                    "axis {bad} out of range for {}-dimensional points",
                    cloud.dim()
                )));
            }
            Ok(cloud.points.select(Axis(1), axes))
        }
    }
}

fn pca2(points: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, dim) = points.dim();
    let mean = points.mean_axis(Axis(0)).expect("non-empty");
    let centered = points - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if !(top > 1e-12 * (1.0 + cov.diag().iter().map(|v| v.abs()).sum::<f64>())) {
        return Err(Error::invalid("pca2 lens on a zero-variance cloud"));
    }
    let mut out = Array2::zeros((n, 2));
    for (slot, &idx) in order.iter().take(2).enumerate() {
        let mut axis: Array1<f64> = (0..dim).map(|r| eig.eigenvectors[(r, idx)]).collect();
        // Largest loading positive, so the lens does not depend on solver sign.
        let peak = axis
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if peak < 0.0 {
            axis.mapv_inplace(|v| -v);
        }
        out.column_mut(slot).assign(&centered.dot(&axis));
    }
    Ok(out)
}

/// Per-dimension Scott bandwidths `σⱼ · n^(-1/(dim+4))`; constant dimensions get 0.
pub fn scott_bandwidth(points: &Array2<f64>) -> Array1<f64> {
    let (n, dim) = points.dim();
    let factor = (n as f64).powf(-1.0 / (dim as f64 + 4.0));
    points.std_axis(Axis(0), if n > 1 { 1.0 } else { 0.0 }) * factor
}

/// Log of the Gaussian product-kernel density estimate at each query point.
/// Dimensions with zero bandwidth are left out of the kernel.
pub fn kde_log_density(points: &Array2<f64>, queries: &Array2<f64>) -> Vec<f64> {
    let h = scott_bandwidth(points);
    let active: Vec<usize> = (0..h.len()).filter(|&j| h[j] > 0.0).collect();
    let log_norm: f64 = active
        .iter()
        .map(|&j| -(h[j] * (2.0 * std::f64::consts::PI).sqrt()).ln())
        .sum::<f64>()
        - (points.nrows() as f64).ln();
    queries
        .rows()
        .into_iter()
        .map(|q| {
            let exps: Vec<f64> = points
                .rows()
                .into_iter()
                .map(|p| -0.5 * active.iter().map(|&j| ((q[j] - p[j]) / h[j]).powi(2)).sum::<f64>())
                .collect();
            let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln() + log_norm
        })
        .collect()
}

/// Density of every point divided by the largest, in `(0, 1]`.
pub fn relative_density(points: &Array2<f64>) -> Array1<f64> {
    let logs = kde_log_density(points, points);
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| (l - max).exp()).collect()
}
