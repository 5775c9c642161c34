//! ICA model files and the per-component report.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::fastica::IcaModel;
use super::labeler::{Category, ComponentFeatures, ComponentScores};
use crate::error::{Error, Result};
use crate::io::{self, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentRow {
    pub index: usize,
    pub category: Category,
    pub dominant_hz: f64,
    pub removed: bool,
    pub scores: BTreeMap<Category, f64>,
    pub features: ComponentFeatures,
}

/// One row per labeled component.
pub fn component_report(model: &IcaModel, removed: &[usize]) -> Vec<ComponentRow> {
    model
        .scores
        .iter()
        .enumerate()
        .map(|(index, s)| ComponentRow {
            index,
            category: s.argmax(),
            dominant_hz: s.features.dominant_hz,
            removed: removed.contains(&index),
            scores: Category::ALL.iter().map(|&c| (c, s.get(c))).collect(),
            features: s.features,
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    format_version: u32,
    iterations: usize,
    converged: bool,
    matrices_file: String,
    components: Vec<ComponentRow>,
}

/// Writes the manifest plus a matrix bundle holding mean, unmixing and mixing.
pub fn write_ica_model(manifest: &Path, model: &IcaModel) -> Result<()> {
    let matrices_file = io::default_sidecar_name(manifest, "nwm");
    let mean = model.mean.clone().insert_axis(ndarray::Axis(0));
    io::write_matrices(
        &io::sidecar(manifest, &matrices_file),
        &[&mean, &model.unmixing, &model.mixing],
    )?;
    io::write_toml(
        manifest,
        &ModelManifest {
            format_version: FORMAT_VERSION,
            iterations: model.iterations,
            converged: model.converged,
            matrices_file,
            components: component_report(model, &[]),
        },
    )
}

pub fn read_ica_model(manifest: &Path) -> Result<IcaModel> {
    let m: ModelManifest = io::read_toml(manifest)?;
    let mats = io::read_matrices(&io::sidecar(manifest, &m.matrices_file))?;
    let [mean, unmixing, mixing]: [Array2<f64>; 3] = mats
        .try_into()
        .map_err(|_| Error::format(manifest, "expected three matrices"))?;
    let (k, ch) = unmixing.dim();
    if mean.dim() != (1, ch) || mixing.dim() != (ch, k) {
        return Err(Error::format(manifest, "matrix shapes disagree"));
    }
    if !m.components.is_empty() && m.components.len() != k {
        return Err(Error::format(manifest, "component rows disagree with matrices"));
    }
    let scores = m
        .components
        .iter()
        .map(|row| {
            let mut probabilities = [0.0; 7];
            for (&c, &p) in &row.scores {
                probabilities[c.index()] = p;
            }
            ComponentScores {
                probabilities,
                features: row.features,
            }
        })
        .collect();
    Ok(IcaModel {
        mean: mean.row(0).to_owned(),
        unmixing,
        mixing,
        iterations: m.iterations,
        converged: m.converged,
        scores,
    })
}
