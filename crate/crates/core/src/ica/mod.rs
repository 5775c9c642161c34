//! ICA decomposition, component labeling, and artifact removal.

mod fastica;
mod labeler;
mod store;

use std::collections::BTreeSet;

pub use fastica::{effective_rank, fit_ica, fit_ica_with, IcaModel, IcaOptions};
pub use labeler::{label_components, score_features, Category, ComponentFeatures, ComponentScores, LabelerConfig};
pub use store::{component_report, read_ica_model, write_ica_model, ComponentRow};

use crate::error::{Error, Result};
use crate::signal::Recording;

/// Zeroes components whose argmax category is in `remove` with score ≥ `threshold`,
/// then maps back to channel space.
///
/// With `keep_residual`, the part of the data outside the retained PCA subspace is
/// added back, so nothing but the removed components is lost.
pub fn remove_and_reconstruct(
    model: &IcaModel,
    rec: &Recording,
    remove: &BTreeSet<Category>,
    threshold: f64,
    keep_residual: bool,
) -> Result<Recording> {
    if !model.is_labeled() && !remove.is_empty() {
        return Err(Error::invalid("components must be labeled before removal"));
    }
    let mut sources = model.sources(rec)?;
    for i in removed_components(model, remove, threshold) {
        sources.row_mut(i).fill(0.0);
    }
    let mut out = model.mixing.dot(&sources);
    if keep_residual {
        let xc = fastica::centered(rec.data(), &model.mean);
        let projected = model.mixing.dot(&model.unmixing.dot(&xc));
        out += &(&xc - &projected);
    }
    for (mut row, m) in out.outer_iter_mut().zip(model.mean.iter()) {
        row.mapv_inplace(|v| v + m);
    }
    Ok(rec.with_data(out))
}

/// Indices of the components [`remove_and_reconstruct`] would zero.
pub fn removed_components(model: &IcaModel, remove: &BTreeSet<Category>, threshold: f64) -> Vec<usize> {
    model
        .scores
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let c = s.argmax();
            remove.contains(&c) && s.get(c) >= threshold
        })
        .map(|(i, _)| i)
        .collect()
}
