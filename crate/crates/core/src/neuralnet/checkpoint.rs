use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

use super::model::Sequential;
use super::train::TrainHistory;

/// One entry in the checkpoint's parameter table. `offset` and `len` are in
/// f64 elements within the binary blob.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// JSON manifest stored next to the binary parameter blob.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub architecture: String,
    pub input_channels: usize,
    pub window: usize,
    pub seed: u64,
    #[serde(default)]
    pub hyper: serde_json::Value,
    #[serde(default)]
    pub norm: serde_json::Value,
    #[serde(default)]
    pub history: Option<TrainHistory>,
    pub params: Vec<ParamEntry>,
}

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const BLOB_FILE: &str = "checkpoint.bin";

/// Serialize the model's parameters to a little-endian f64 blob plus the
/// matching table of name/shape/offset entries.
pub fn encode_params(model: &Sequential) -> (Vec<ParamEntry>, Vec<u8>) {
    let mut table = Vec::new();
    let mut blob = Vec::new();
    let mut offset = 0usize;
    for p in model.params() {
        table.push(ParamEntry {
            name: p.name.clone(),
            shape: p.value.shape.clone(),
            offset,
            len: p.value.numel(),
        });
        for &v in &p.value.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += p.value.numel();
    }
    (table, blob)
}

/// Decode a parameter blob against its table, validating bounds and shapes.
pub fn decode_params(table: &[ParamEntry], blob: &[u8]) -> Result<Vec<Vec<f64>>> {
    if blob.len() % 8 != 0 {
        return Err(Error::parse("parameter blob length is not a multiple of 8"));
    }
    let n_vals = blob.len() / 8;
    let mut out = Vec::with_capacity(table.len());
    for entry in table {
        let numel: usize = entry.shape.iter().product();
        if numel != entry.len {
            return Err(Error::parse(format!(
                "parameter {}: shape {:?} does not match len {}",
                entry.name, entry.shape, entry.len
            )));
        }
        let end = entry.offset.checked_add(entry.len).ok_or_else(|| {
            Error::parse(format!("parameter {}: offset overflow", entry.name))
        })?;
        if end > n_vals {
            return Err(Error::parse(format!(
                "parameter {}: range {}..{end} exceeds blob of {n_vals} values",
                entry.name, entry.offset
            )));
        }
        let values: Vec<f64> = (entry.offset..end)
            .map(|i| f64::from_le_bytes(blob[i * 8..(i + 1) * 8].try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(format!(
                "parameter {}: non-finite value in blob",
                entry.name
            )));
        }
        out.push(values);
    }
    Ok(out)
}

/// Write `checkpoint.json` and `checkpoint.bin` into `dir`.
pub fn save(dir: &Path, model: &Sequential, mut manifest: Manifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (table, blob) = encode_params(model);
    manifest.format_version = FORMAT_VERSION;
    manifest.params = table;
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    fs::write(dir.join(BLOB_FILE), blob)?;
    Ok(())
}

/// Read a manifest and its decoded parameter values from `dir`.
pub fn load(dir: &Path) -> Result<(Manifest, Vec<Vec<f64>>)> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::parse(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }
    let blob = fs::read(dir.join(BLOB_FILE))?;
    let values = decode_params(&manifest.params, &blob)?;
    Ok((manifest, values))
}

/// Copy decoded parameter values into a freshly built model, matching the
/// table entries to the model's parameters by position and validating names
/// and shapes.
pub fn apply(model: &mut Sequential, manifest: &Manifest, values: &[Vec<f64>]) -> Result<()> {
    let mut params = model.params_mut();
    if params.len() != manifest.params.len() {
        return Err(Error::parse(format!(
            "checkpoint has {} parameters, model {} expects {}",
            manifest.params.len(),
            manifest.architecture,
            params.len()
        )));
    }
    for ((p, entry), vals) in params.iter_mut().zip(&manifest.params).zip(values) {
        if p.name != entry.name || p.value.shape != entry.shape {
            return Err(Error::parse(format!(
                "checkpoint entry {} {:?} does not match model parameter {} {:?}",
                entry.name, entry.shape, p.name, p.value.shape
            )));
        }
        p.value.data.copy_from_slice(vals);
    }
    Ok(())
}
