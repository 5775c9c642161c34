//! On-disk formats.
//!
//! Every structured-text file is TOML carrying a mandatory `format_version`.
//! Bulk numbers live in sidecar files next to the header:
//!
//! * recordings, epoch archives and point clouds: raw little-endian `f32`,
//!   channel-major (recordings) or row-major (epochs, points);
//! * matrix bundles (`.nwm`): magic `NWMATRIX`, `u32` version, `u32` matrix
//!   count, then per matrix `u64` rows, `u64` cols and row-major `f64` values.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Epoch, EpochSet, Interval, Label, LabelTrack, Recording};

pub const FORMAT_VERSION: u32 = 1;
const MATRIX_MAGIC: &[u8; 8] = b"NWMATRIX";

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses TOML, rejecting unknown keys (via the target type) and wrong versions.
pub fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    #[derive(Deserialize)]
    struct Versioned {
        format_version: Option<u32>,
    }
    let probe: Versioned = toml::from_str::<toml::Table>(text)
        .map_err(|e| Error::format(path, e.to_string()))
        .and_then(|table| {
            Versioned::deserialize(toml::Value::Table(table)).map_err(|e| Error::format(path, e.to_string()))
        })?;
    match probe.format_version {
        Some(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::format(
                path,
                format!("unsupported format_version {v} (expected {FORMAT_VERSION})"),
            ))
        }
        None => return Err(Error::format(path, "missing format_version")),
    }
    toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_toml(&read_text(path)?, path)
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::format(path, e.to_string()))?;
    write_bytes(path, text.as_bytes())
}

pub(crate) fn sidecar(header: &Path, name: &str) -> PathBuf {
    header.parent().unwrap_or_else(|| Path::new("")).join(name)
}

pub(crate) fn default_sidecar_name(header: &Path, ext: &str) -> String {
    let stem = header
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    format!("{stem}.{ext}")
}

pub(crate) fn f32_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

pub(crate) fn read_f32s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordingHeader {
    format_version: u32,
    sample_rate_hz: f64,
    start_time_s: f64,
    sample_count: usize,
    channel_names: Vec<String>,
    data_file: String,
}

/// Writes `header` (TOML) and its `f32` sidecar; returns the sidecar path.
pub fn write_recording(header: &Path, rec: &Recording) -> Result<PathBuf> {
    let data_file = default_sidecar_name(header, "f32");
    let h = RecordingHeader {
        format_version: FORMAT_VERSION,
        sample_rate_hz: rec.sample_rate_hz(),
        start_time_s: rec.start_time_s(),
        sample_count: rec.n_samples(),
        channel_names: rec.channel_names().to_vec(),
        data_file: data_file.clone(),
    };
    let data_path = sidecar(header, &data_file);
    write_bytes(&data_path, &f32_bytes(rec.data().iter().copied()))?;
    write_toml(header, &h)?;
    Ok(data_path)
}

pub fn read_recording(header: &Path) -> Result<Recording> {
    let h: RecordingHeader = read_toml(header)?;
    let channels = h.channel_names.len();
    let values = read_f32s(&sidecar(header, &h.data_file), channels * h.sample_count)?;
    let data =
        Array2::from_shape_vec((channels, h.sample_count), values).map_err(|e| Error::format(header, e.to_string()))?;
    Recording::new(data, h.sample_rate_hz, h.channel_names, h.start_time_s)
        .map_err(|e| Error::format(header, e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackFile {
    format_version: u32,
    intervals: Vec<Interval>,
}

pub fn write_track(path: &Path, track: &LabelTrack) -> Result<()> {
    write_toml(
        path,
        &TrackFile {
            format_version: FORMAT_VERSION,
            intervals: track.intervals().to_vec(),
        },
    )
}

pub fn read_track(path: &Path) -> Result<LabelTrack> {
    let f: TrackFile = read_toml(path)?;
    LabelTrack::new(f.intervals).map_err(|e| Error::format(path, e.to_string()))
}

/// Serializes named `f64` matrices into one bundle.
pub fn encode_matrices(mats: &[&Array2<f64>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(mats.len() as u32).to_le_bytes());
    for m in mats {
        out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_matrices(bytes: &[u8], path: &Path) -> Result<Vec<Array2<f64>>> {
    let mut cursor = bytes;
    let bad = |why: &str| Error::format(path, why.to_string());
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(bad("truncated matrix bundle"));
        }
        let (head, tail) = cursor.split_at(n);
        cursor = tail;
        Ok(head)
    };
    if take(8)? != MATRIX_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad("unsupported matrix bundle version"));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let mut mats = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let cols = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| bad("matrix too large"))?;
        let raw = take(len)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        mats.push(Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(&e.to_string()))?);
    }
    if !cursor.is_empty() {
        return Err(bad("trailing bytes after matrix bundle"));
    }
    Ok(mats)
}

pub fn write_matrices(path: &Path, mats: &[&Array2<f64>]) -> Result<()> {
    write_bytes(path, &encode_matrices(mats))
}

pub fn read_matrices(path: &Path) -> Result<Vec<Array2<f64>>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_matrices(&bytes, path)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpochEntry {
    origin_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpochManifest {
    format_version: u32,
    window_s: f64,
    overlap_fraction: f64,
    sample_rate_hz: f64,
    window_len: usize,
    channel_names: Vec<String>,
    data_file: String,
    epochs: Vec<EpochEntry>,
}

/// Writes an epoch archive: TOML manifest plus `[n × L × d]` `f32` sidecar.
pub fn write_epochs(manifest: &Path, set: &EpochSet) -> Result<()> {
    let data_file = default_sidecar_name(manifest, "f32");
    let mut file = BufWriter::new(
        fs::File::create(sidecar(manifest, &data_file)).map_err(|e| Error::io(sidecar(manifest, &data_file), e))?,
    );
    for e in &set.epochs {
        file.write_all(&f32_bytes(e.window.iter().copied()))
            .map_err(|err| Error::io(manifest, err))?;
    }
    file.flush().map_err(|e| Error::io(manifest, e))?;
    let m = EpochManifest {
        format_version: FORMAT_VERSION,
        window_s: set.window_s,
        overlap_fraction: set.overlap_fraction,
        sample_rate_hz: set.sample_rate_hz,
        window_len: set.window_len(),
        channel_names: set.channel_names.clone(),
        data_file,
        epochs: set
            .epochs
            .iter()
            .map(|e| EpochEntry {
                origin_time_s: e.origin_time_s,
                label: e.label,
            })
            .collect(),
    };
    write_toml(manifest, &m)
}

pub fn read_epochs(manifest: &Path) -> Result<EpochSet> {
    let m: EpochManifest = read_toml(manifest)?;
    let (len, d) = (m.window_len, m.channel_names.len());
    let values = read_f32s(&sidecar(manifest, &m.data_file), m.epochs.len() * len * d)?;
    let epochs = m
        .epochs
        .iter()
        .zip(values.chunks_exact((len * d).max(1)))
        .map(|(entry, chunk)| Epoch {
            window: Array2::from_shape_vec((len, d), chunk.to_vec()).expect("sized chunk"),
            label: entry.label,
            origin_time_s: entry.origin_time_s,
        })
        .collect();
    Ok(EpochSet {
        epochs,
        window_s: m.window_s,
        overlap_fraction: m.overlap_fraction,
        sample_rate_hz: m.sample_rate_hz,
        channel_names: m.channel_names,
    })
}
