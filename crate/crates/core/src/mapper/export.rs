//! Graph export to Graphviz dot and versioned TOML.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MapperGraph;
use crate::error::{Error, Result};
use crate::io::{parse_toml, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Toml,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "toml" | "structured-text" => Ok(ExportFormat::Toml),
            other => Err(Error::invalid(format!(
                "unknown graph format `{other}` (expected dot or toml)"
            ))),
        }
    }
}

/// Real members are purple, fake members blue.
pub const REAL_RGB: [u8; 3] = [0x80, 0x00, 0x80];
pub const FAKE_RGB: [u8; 3] = [0x00, 0x00, 0xff];

/// Fill color `#rrggbbaa`: hue interpolated by fake fraction, opacity rising
/// with density so denser nodes render darker on a white background.
pub fn node_color(fake_fraction: f64, density: f64) -> String {
    let f = fake_fraction.clamp(0.0, 1.0);
    let mix = |r: u8, k: u8| ((1.0 - f) * r as f64 + f * k as f64).round() as u8;
    let alpha = (255.0 * (0.25 + 0.75 * density.clamp(0.0, 1.0))).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}{:02x}",
        mix(REAL_RGB[0], FAKE_RGB[0]),
        mix(REAL_RGB[1], FAKE_RGB[1]),
        mix(REAL_RGB[2], FAKE_RGB[2]),
        alpha
    )
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    format_version: u32,
    graph: MapperGraph,
}

pub fn export_graph(graph: &MapperGraph, format: ExportFormat) -> Result<Vec<u8>> {
    match format {
        ExportFormat::Toml => {
            let file = GraphFile {
                format_version: FORMAT_VERSION,
                graph: graph.clone(),
            };
            toml::to_string(&file)
                .map(String::into_bytes)
                .map_err(|e| Error::invalid(format!("graph serialization failed: {e}")))
        }
        ExportFormat::Dot => Ok(to_dot(graph).into_bytes()),
    }
}

pub fn import_graph(bytes: &[u8], path: &Path) -> Result<MapperGraph> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::format(path, e.to_string()))?;
    let file: GraphFile = parse_toml(text, path)?;
    Ok(file.graph)
}

fn to_dot(graph: &MapperGraph) -> String {
    let mut out = String::from("graph mapper {\n  node [shape=circle, style=filled, fontsize=8];\n");
    let largest = graph.nodes.iter().map(|n| n.members.len()).max().unwrap_or(1) as f64;
    for (id, node) in graph.nodes.iter().enumerate() {
        let size = 0.2 + 0.8 * (node.members.len() as f64 / largest).sqrt();
        let _ = writeln!(
            out,
            "  n{id} [label=\"{}\", width={size:.3}, fillcolor=\"{}\", tooltip=\"fake {:.3}, density {:.3}\"];",
            node.members.len(),
            node_color(node.fake_fraction, node.density),
            node.fake_fraction,
            node.density
        );
    }
    for [a, b] in &graph.edges {
        let _ = writeln!(out, "  n{a} -- n{b};");
    }
    out.push_str("}\n");
    out
}
