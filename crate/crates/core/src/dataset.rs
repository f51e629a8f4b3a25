//! On-disk datasets: a directory holding `manifest.toml` and `data.bin`.
//!
//! `data.bin` is `count × (2m label floats ‖ 2m input floats)` little-endian
//! f64, each snapshot stacked as real parts then imaginary parts. The manifest
//! records the array, the generation parameters, the format version and the
//! SHA-256 of `data.bin`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, DatasetSpec, Sample, Snapshot, SnapshotKind};
use crate::checkpoint::{content_hash, write_atomic};
use crate::error::{Error, Result};
use crate::hankel::{complex_to_stacked, stacked_to_complex};
use crate::train::TrainData;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const DATA_FILE: &str = "data.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub layout: String,
    pub array: ArrayConfig,
    pub spec: DatasetSpec,
    pub data_sha256: String,
}

/// Labels (clean full array) and inputs (noisy, masked) as loaded from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub labels: Vec<Snapshot>,
    pub inputs: Vec<Snapshot>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Column-stacked arrays for training and evaluation.
    pub fn train_data(&self) -> TrainData {
        let m = self.manifest.array.m();
        let fill = |snaps: &[Snapshot]| {
            let mut a = Array2::zeros((2 * m, snaps.len()));
            for (mut col, s) in a.columns_mut().into_iter().zip(snaps) {
                col.assign(&ndarray::Array1::from(complex_to_stacked(&s.values)));
            }
            a
        };
        TrainData {
            inputs: fill(&self.inputs),
            labels: fill(&self.labels),
        }
    }
}

const LAYOUT: &str = "count x (2m label || 2m input), f64 little-endian, real then imaginary";

/// Writes `samples` generated from `(array, spec)` into `dir`.
pub fn save(dir: &Path, array: &ArrayConfig, spec: &DatasetSpec, samples: &[Sample]) -> Result<DatasetManifest> {
    let m = array.m();
    let mut bytes = Vec::with_capacity(samples.len() * 4 * m * 8);
    for s in samples {
        if s.label.len() != m || s.input.len() != m {
            return Err(Error::Shape {
                expected: m,
                got: s.label.len().max(s.input.len()),
            });
        }
        for v in complex_to_stacked(&s.label.values).into_iter().chain(complex_to_stacked(&s.input.values)) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        layout: LAYOUT.to_string(),
        array: array.clone(),
        spec: DatasetSpec {
            count: samples.len(),
            ..spec.clone()
        },
        data_sha256: content_hash(&bytes),
    };
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(DATA_FILE), &bytes)?;
    let text = toml::to_string(&manifest).map_err(|e| Error::Numeric(e.to_string()))?;
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath)?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::format(
            &mpath,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let dpath = dir.join(DATA_FILE);
    let bytes = fs::read(&dpath)?;
    if content_hash(&bytes) != manifest.data_sha256 {
        return Err(Error::format(&dpath, "checksum mismatch"));
    }
    let m = manifest.array.m();
    let record = 4 * m * 8;
    if bytes.len() != manifest.spec.count * record {
        return Err(Error::format(&dpath, "size does not match the manifest"));
    }
    let mut labels = Vec::with_capacity(manifest.spec.count);
    let mut inputs = Vec::with_capacity(manifest.spec.count);
    for chunk in bytes.chunks_exact(record) {
        let floats: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        labels.push(Snapshot::new(stacked_to_complex(&floats[..2 * m])?, SnapshotKind::FullClean));
        inputs.push(Snapshot::new(stacked_to_complex(&floats[2 * m..])?, SnapshotKind::Masked));
    }
    Ok(Dataset {
        manifest,
        labels,
        inputs,
    })
}
