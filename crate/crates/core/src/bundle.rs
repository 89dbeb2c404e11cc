//! Trained model artifacts: the price model, the discretization fitted on the
//! same training split, and the id of the dataset they came from. An
//! artifact's id is the lowercase hex SHA-256 of its JSON serialization, so
//! identical training inputs always produce the same id.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{self, DataError, Dataset};
use crate::discretize::{Discretization, DiscretizeError, DEFAULT_BINS};
use crate::linreg::{self, FitOptions, LinearModel, LinregError, RegressionMetrics};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] LinregError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error("model id mismatch: stored {stored}, content hashes to {computed}")]
    IdMismatch { stored: String, computed: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub dataset_id: String,
    pub model: LinearModel,
    pub discretization: Discretization,
}

impl ModelArtifact {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("artifact contains only finite numbers")
    }

    pub fn content_id(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

/// A persisted artifact with its content id and creation time (seconds since
/// the Unix epoch). Only `artifact` is hashed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistryEntry {
    pub model_id: String,
    pub created_at: u64,
    pub artifact: ModelArtifact,
}

impl ModelRegistryEntry {
    pub fn new(artifact: ModelArtifact) -> Self {
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            model_id: artifact.content_id(),
            created_at,
            artifact,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("entry serializes");
        bytes.push(b'\n');
        bytes
    }

    /// Parses an entry and checks its id against the artifact's content.
    pub fn from_json(bytes: &[u8]) -> Result<Self, BundleError> {
        let entry: Self = serde_json::from_slice(bytes)?;
        let computed = entry.artifact.content_id();
        if computed != entry.model_id {
            return Err(BundleError::IdMismatch {
                stored: entry.model_id,
                computed,
            });
        }
        Ok(entry)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BundleError> {
        Self::from_json(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BundleError> {
        write_atomic(path.as_ref(), &self.to_json())?;
        Ok(())
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lambda: f64,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub n_bins: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            train_fraction: 0.8,
            split_seed: 42,
            n_bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub train_metrics: RegressionMetrics,
    /// Absent when the held-out split's targets are constant.
    pub test_metrics: Option<RegressionMetrics>,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// Splits, fits the price model and the discretization on the training
/// split, and scores the held-out rows.
pub fn train(dataset: &Dataset, dataset_id: &str, options: &TrainOptions) -> Result<TrainOutcome, BundleError> {
    let (train, test) = data::split_train_test(dataset, options.train_fraction, options.split_seed)?;
    let model = linreg::fit_dataset(&train, FitOptions::ridge(options.lambda))?;
    let discretization = Discretization::fit_dataset(&train, options.n_bins)?;
    let test_metrics = if test.is_empty() {
        None
    } else {
        model.evaluate(&test).ok()
    };
    Ok(TrainOutcome {
        train_metrics: model.train_metrics,
        test_metrics,
        train_rows: train.len(),
        test_rows: test.len(),
        artifact: ModelArtifact {
            dataset_id: dataset_id.to_string(),
            model,
            discretization,
        },
    })
}
