//! Versioned file formats: models, datasets, run manifests, checkpoints.
//!
//! Every JSON document carries `format` and `version`; reading a document
//! with a different format tag or an unknown version fails.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::doe::Sample;
use crate::error::{DmnError, Result};
use crate::network::MaterialNetwork;
use crate::tensor::{EulerAngles, Mat6};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MODEL_FORMAT: &str = "dmn-model";
pub const DATASET_FORMAT: &str = "dmn-dataset";
pub const MANIFEST_FORMAT: &str = "dmn-manifest";
pub const CHECKPOINT_FORMAT: &str = "dmn-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

pub const MANDEL_ORDER: [&str; 6] = ["11", "22", "33", "sqrt2*23", "sqrt2*13", "sqrt2*12"];

/// Row-major nested arrays for 6×6 matrices.
pub mod mat6_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn to_rows(m: &Mat6) -> [[f64; 6]; 6] {
        let mut r = [[0.0; 6]; 6];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = m[(i, j)];
            }
        }
        r
    }

    pub fn from_rows(r: &[[f64; 6]; 6]) -> Mat6 {
        Mat6::from_fn(|i, j| r[i][j])
    }

    pub fn serialize<S: Serializer>(m: &Mat6, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat6, D::Error> {
        let r = <[[f64; 6]; 6]>::deserialize(d)?;
        Ok(from_rows(&r))
    }
}

pub mod opt_mat6_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        m: &Option<Mat6>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(mat6_rows::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Mat6>, D::Error> {
        let r = Option::<[[f64; 6]; 6]>::deserialize(d)?;
        Ok(r.as_ref().map(mat6_rows::from_rows))
    }
}

#[derive(Debug, Deserialize)]
struct Tag {
    format: String,
    version: u32,
}

/// Checks the `format`/`version` tag of a JSON value.
pub fn check_tag(value: &serde_json::Value, format: &str) -> Result<()> {
    let tag: Tag = serde_json::from_value(value.clone())
        .map_err(|_| DmnError::Format(format!("missing format/version tag (expected {format})")))?;
    if tag.format != format {
        return Err(DmnError::Format(format!(
            "expected {format}, found {}",
            tag.format
        )));
    }
    if tag.version != FORMAT_VERSION {
        return Err(DmnError::Format(format!(
            "{format} version {} is not supported (expected {FORMAT_VERSION})",
            tag.version
        )));
    }
    Ok(())
}

fn read_tagged<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    check_tag(&value, format)?;
    Ok(serde_json::from_value(value)?)
}

/// Writes through a temporary sibling so failures never leave partial files.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

// ---------------------------------------------------------------------------
// Model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub depth: usize,
    pub z: Vec<f64>,
    /// `[α, β, γ]` per node, radians.
    pub angles: Vec<[f64; 3]>,
    pub phases: Vec<u8>,
    pub collapsed: Vec<bool>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl ModelFile {
    pub fn new(net: &MaterialNetwork, metadata: serde_json::Value) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: FORMAT_VERSION,
            depth: net.depth,
            z: net.z.clone(),
            angles: net.angles.iter().map(|a| a.as_array()).collect(),
            phases: net.phases.clone(),
            collapsed: net.collapsed.clone(),
            metadata,
        }
    }

    pub fn network(&self) -> Result<MaterialNetwork> {
        let net = MaterialNetwork {
            depth: self.depth,
            z: self.z.clone(),
            angles: self
                .angles
                .iter()
                .map(|&a| EulerAngles::from_array(a))
                .collect(),
            phases: self.phases.clone(),
            collapsed: self.collapsed.clone(),
        };
        net.validate()?;
        Ok(net)
    }
}

pub fn save_model(path: &Path, net: &MaterialNetwork, metadata: serde_json::Value) -> Result<()> {
    write_json(path, &ModelFile::new(net, metadata))
}

pub fn load_model_file(path: &Path) -> Result<ModelFile> {
    read_tagged(path, MODEL_FORMAT)
}

pub fn load_model(path: &Path) -> Result<MaterialNetwork> {
    load_model_file(path)?.network()
}

// ---------------------------------------------------------------------------
// Dataset

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub mandel_order: Vec<String>,
    pub split: String,
    pub count: usize,
    pub seed: u64,
    pub oracle: String,
    #[serde(default)]
    pub manifest: Option<String>,
}

impl DatasetHeader {
    pub fn new(
        split: &str,
        count: usize,
        seed: u64,
        oracle: &str,
        manifest: Option<String>,
    ) -> Self {
        Self {
            format: DATASET_FORMAT.into(),
            version: FORMAT_VERSION,
            mandel_order: MANDEL_ORDER.iter().map(|s| s.to_string()).collect(),
            split: split.into(),
            count,
            seed,
            oracle: oracle.into(),
            manifest,
        }
    }
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, samples: &[Sample]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = BufWriter::new(&mut buf);
        serde_json::to_writer(&mut w, header)?;
        w.write_all(b"\n")?;
        for s in samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<Sample>)> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| DmnError::Format(format!("{} is empty", path.display())))??;
    let value: serde_json::Value = serde_json::from_str(&first)?;
    check_tag(&value, DATASET_FORMAT)?;
    let header: DatasetHeader = serde_json::from_value(value)?;
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(&line)?);
    }
    if samples.len() != header.count {
        return Err(DmnError::Format(format!(
            "{}: header declares {} samples, found {}",
            path.display(),
            header.count,
            samples.len()
        )));
    }
    Ok((header, samples))
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub artifact_version: String,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: FORMAT_VERSION,
            command: command.into(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            artifact_version: ARTIFACT_VERSION.into(),
            elapsed_seconds: 0.0,
        }
    }
}

pub fn save_manifest(path: &Path, m: &RunManifest) -> Result<()> {
    write_json(path, m)
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    read_tagged(path, MANIFEST_FORMAT)
}

// ---------------------------------------------------------------------------
// Checkpoint

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format: String,
    pub version: u32,
    pub trainer: crate::train::Trainer,
}

pub fn save_checkpoint(path: &Path, trainer: &crate::train::Trainer) -> Result<()> {
    write_json(
        path,
        &CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: FORMAT_VERSION,
            trainer: trainer.clone(),
        },
    )
}

pub fn load_checkpoint(path: &Path) -> Result<crate::train::Trainer> {
    let c: CheckpointFile = read_tagged(path, CHECKPOINT_FORMAT)?;
    c.trainer.net.validate()?;
    Ok(c.trainer)
}

/// Generic versioned JSON helpers for callers with their own formats.
pub fn save_tagged_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

pub fn load_tagged_json<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    read_tagged(path, format)
}
