//! Dataset manifests and train/eval splits.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::Sample;
use crate::io::{load_image, IoError};
use crate::segment::gray_to_mask;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read manifest {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("manifest {0} has no entries")]
    Empty(PathBuf),
    #[error("duplicate entry id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Image(#[from] IoError),
    #[error("entry {id:?}: image is {image:?} but mask is {mask:?}")]
    DimensionMismatch {
        id: String,
        image: (usize, usize),
        mask: (usize, usize),
    },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("split leaves the {0} side empty")]
    EmptySplit(&'static str),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

/// One manifest line; paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// A validated manifest with its images and truth masks loaded.
#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub samples: Vec<Sample>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Read {
        path: path.to_owned(),
        source,
    })?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
        path: path.to_owned(),
        source,
    })?;
    if entries.is_empty() {
        return Err(DatasetError::Empty(path.to_owned()));
    }
    let root = path.parent().unwrap_or(Path::new("."));
    let mut ids = HashSet::new();
    let mut samples = Vec::with_capacity(entries.len());
    for e in &entries {
        if !ids.insert(e.id.as_str()) {
            return Err(DatasetError::DuplicateId(e.id.clone()));
        }
        let image = load_image(root.join(&e.image))?;
        let mask = load_image(root.join(&e.mask))?;
        if image.dims() != mask.dims() {
            return Err(DatasetError::DimensionMismatch {
                id: e.id.clone(),
                image: image.dims(),
                mask: mask.dims(),
            });
        }
        samples.push(Sample::new(e.id.clone(), image, gray_to_mask(&mask)).expect("dimensions checked"));
    }
    Ok(DatasetManifest { entries, samples })
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(entries).expect("manifest entries serialize");
    fs::write(path, text + "\n").map_err(|source| DatasetError::Write {
        path: path.to_owned(),
        source,
    })
}

/// Entry indices of each side. The train side holds `round(fraction * n)`
/// entries; explicit assignments are honored and the rest are filled from a
/// seeded shuffle.
pub fn split_indices(
    assignments: &[Option<Split>],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::Fraction(train_fraction));
    }
    let n = assignments.len();
    let target = (train_fraction * n as f64).round() as usize;
    let mut train: Vec<usize> = (0..n).filter(|&i| assignments[i] == Some(Split::Train)).collect();
    let mut eval: Vec<usize> = (0..n).filter(|&i| assignments[i] == Some(Split::Eval)).collect();
    let mut free: Vec<usize> = (0..n).filter(|&i| assignments[i].is_none()).collect();
    free.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = target.saturating_sub(train.len()).min(free.len());
    train.extend_from_slice(&free[..take]);
    eval.extend_from_slice(&free[take..]);
    train.sort_unstable();
    eval.sort_unstable();
    if train.is_empty() {
        return Err(DatasetError::EmptySplit("train"));
    }
    if eval.is_empty() {
        return Err(DatasetError::EmptySplit("eval"));
    }
    Ok((train, eval))
}

pub fn split(m: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>), DatasetError> {
    let assignments: Vec<Option<Split>> = m.entries.iter().map(|e| e.split).collect();
    let (train, eval) = split_indices(&assignments, train_fraction, seed)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| m.samples[i].clone()).collect();
    Ok((pick(train), pick(eval)))
}
