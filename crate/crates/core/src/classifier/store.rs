//! Parameter files: a TOML manifest plus a raw little-endian `f64` sidecar.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::io::{self, FORMAT_VERSION};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    data_file: String,
    parameter_count: usize,
    checksum: String,
    config: ModelConfig,
    blocks: Vec<BlockEntry>,
}

pub fn write_params(manifest: &Path, params: &ModelParams) -> Result<()> {
    let data_file = io::default_sidecar_name(manifest, "f64");
    let bytes: Vec<u8> = params.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    io::write_bytes(&io::sidecar(manifest, &data_file), &bytes)?;
    let m = Manifest {
        format_version: FORMAT_VERSION,
        data_file,
        parameter_count: params.len(),
        checksum: params.checksum(),
        config: params.config().clone(),
        blocks: params
            .blocks()
            .map(|(name, [rows, cols], _)| BlockEntry {
                name: name.to_string(),
                rows,
                cols,
            })
            .collect(),
    };
    io::write_toml(manifest, &m)
}

/// Reads parameters and verifies count, block layout and checksum.
pub fn read_params(manifest: &Path) -> Result<ModelParams> {
    let m: Manifest = io::read_toml(manifest)?;
    let path = io::sidecar(manifest, &m.data_file);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != m.parameter_count * 8 {
        return Err(Error::format(
            &path,
            format!("expected {} bytes, found {}", m.parameter_count * 8, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let params = ModelParams::from_flat(m.config, values)?;
    let layout_matches = params.blocks().count() == m.blocks.len()
        && params
            .blocks()
            .zip(&m.blocks)
            .all(|((n, [r, c], _), b)| n == b.name && r == b.rows && c == b.cols);
    if !layout_matches {
        return Err(Error::format(manifest, "block layout does not match the config"));
    }
    if params.checksum() != m.checksum {
        return Err(Error::format(manifest, "parameter checksum mismatch"));
    }
    Ok(params)
}
