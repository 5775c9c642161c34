//! Labeled point clouds with known class geometry.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::PointCloud;
use crate::signal::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudSpec {
    pub points_per_class: usize,
    pub dim: usize,
    /// Distance between class means, in units of the within-class spread.
    pub separation: f64,
    pub seed: u64,
}

impl Default for CloudSpec {
    fn default() -> Self {
        Self {
            points_per_class: 100,
            dim: 8,
            separation: 6.0,
            seed: 0,
        }
    }
}

fn check(spec: &CloudSpec) -> Result<()> {
    if spec.points_per_class == 0 || spec.dim == 0 {
        return Err(Error::invalid("cloud needs points_per_class ≥ 1 and dim ≥ 1"));
    }
    Ok(())
}

/// Two isotropic Gaussian blobs, one per class, `separation` apart along a
/// random direction.
pub fn separated_cloud(spec: &CloudSpec) -> Result<PointCloud> {
    check(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut dir: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    dir.iter_mut().for_each(|v| *v /= norm);
    let n = 2 * spec.points_per_class;
    let mut labels = Vec::with_capacity(n);
    let mut points = Array2::zeros((n, spec.dim));
    for (i, mut row) in points.rows_mut().into_iter().enumerate() {
        let label = if i % 2 == 0 { Label::Real } else { Label::Fake };
        let sign = if label == Label::Fake { 0.5 } else { -0.5 };
        for (x, d) in row.iter_mut().zip(&dir) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = z + sign * spec.separation * d;
        }
        labels.push(label);
    }
    PointCloud::new(points, labels, "eeg")
}

/// Three Gaussian blobs whose points get labels independently of position,
/// so the classes interleave everywhere.
pub fn interleaved_cloud(spec: &CloudSpec) -> Result<PointCloud> {
    check(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_c10d);
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            (0..spec.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    spec.separation * z / 2.0
                })
                .collect()
        })
        .collect();
    let n = 2 * spec.points_per_class;
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i % 2 == 0 { Label::Real } else { Label::Fake })
        .collect();
    // Labels are shuffled independently of the blob each point is drawn from.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    let mut points = Array2::zeros((n, spec.dim));
    for mut row in points.rows_mut() {
        let c = &centers[rng.random_range(0..3)];
        for (x, m) in row.iter_mut().zip(c) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = m + z;
        }
    }
    PointCloud::new(points, labels, "audio-repr")
}
