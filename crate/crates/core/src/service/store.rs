//! Plain-file persistence:
//!
//! ```text
//! <root>/datasets/<id>.csv
//! <root>/models/<id>.json
//! <root>/streams/<stream_id>/rows.csv
//! ```
//!
//! Every write goes through a temporary file and a rename.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;

use crate::bundle::{sha256_hex, write_atomic, BundleError, ModelRegistryEntry};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid id {0:?}")]
    InvalidId(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("corrupt stream store {stream}: {message}")]
    CorruptStream { stream: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn is_hex_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

pub fn is_valid_stream_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        && !id.starts_with('-')
}

/// Feature rows received on one stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamRows {
    pub columns: Vec<String>,
    pub rows: BTreeMap<u64, Vec<f64>>,
}

impl StreamRows {
    pub fn highest_contiguous(&self) -> Option<u64> {
        let mut expected = 0u64;
        for &seq in self.rows.keys() {
            if seq != expected {
                break;
            }
            expected += 1;
        }
        expected.checked_sub(1)
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("seq");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (seq, values) in &self.rows {
            out.push_str(&seq.to_string());
            for v in values {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    fn parse(stream: &str, text: &str) -> Result<Self, StoreError> {
        let corrupt = |message: String| StoreError::CorruptStream {
            stream: stream.to_string(),
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| corrupt("empty file".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("seq") {
            return Err(corrupt("header must start with seq".into()));
        }
        let columns: Vec<String> = cols.map(str::to_string).collect();
        let mut rows = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let mut cells = line.split(',');
            let seq: u64 = cells
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| corrupt(format!("row {}: bad seq", i + 1)))?;
            let values: Vec<f64> = cells
                .map(|c| c.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| corrupt(format!("row {}: {e}", i + 1)))?;
            if values.len() != columns.len() {
                return Err(corrupt(format!("row {}: width", i + 1)));
            }
            rows.insert(seq, values);
        }
        Ok(Self { columns, rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnimalRow {
    pub stream_id: String,
    pub seq: u64,
    pub features: BTreeMap<String, f64>,
}

/// Persistence root plus in-memory caches. Model entries are immutable once
/// written and shared by readers; stream state is locked per stream.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    models: RwLock<HashMap<String, Arc<ModelRegistryEntry>>>,
    model_write: Mutex<()>,
    streams: Mutex<HashMap<String, Arc<tokio::sync::Mutex<StreamRows>>>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["datasets", "models", "streams"] {
            std::fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self {
            root,
            models: RwLock::new(HashMap::new()),
            model_write: Mutex::new(()),
            streams: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_writable(&self) -> bool {
        tempfile::NamedTempFile::new_in(&self.root).is_ok()
    }

    fn dataset_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !is_hex_id(id) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(self.root.join("datasets").join(format!("{id}.csv")))
    }

    fn model_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !is_hex_id(id) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(self.root.join("models").join(format!("{id}.json")))
    }

    /// Stores CSV bytes under their content hash.
    pub fn put_dataset(&self, csv: &[u8]) -> Result<String, StoreError> {
        let id = sha256_hex(csv);
        let path = self.dataset_path(&id)?;
        if !path.exists() {
            write_atomic(&path, csv)?;
        }
        Ok(id)
    }

    pub fn get_dataset(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.dataset_path(id).map_err(|_| StoreError::NotFound(id.to_string()))?;
        std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(format!("dataset {id}")),
            _ => e.into(),
        })
    }

    /// Persists an entry unless one with the same id exists. Returns the
    /// stored entry and whether it was newly created.
    pub fn put_model(&self, entry: ModelRegistryEntry) -> Result<(Arc<ModelRegistryEntry>, bool), StoreError> {
        let _guard = self.model_write.lock().expect("model write lock");
        if let Ok(existing) = self.get_model(&entry.model_id) {
            return Ok((existing, false));
        }
        let path = self.model_path(&entry.model_id)?;
        write_atomic(&path, &entry.to_json())?;
        let entry = Arc::new(entry);
        self.models
            .write()
            .expect("model cache lock")
            .insert(entry.model_id.clone(), Arc::clone(&entry));
        Ok((entry, true))
    }

    /// Raw bytes of a persisted entry.
    pub fn get_model_bytes(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.model_path(id).map_err(|_| StoreError::NotFound(id.to_string()))?;
        std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(format!("model {id}")),
            _ => e.into(),
        })
    }

    /// Loads (and on first read verifies the content hash of) a model entry.
    pub fn get_model(&self, id: &str) -> Result<Arc<ModelRegistryEntry>, StoreError> {
        if let Some(e) = self.models.read().expect("model cache lock").get(id) {
            return Ok(Arc::clone(e));
        }
        let bytes = self.get_model_bytes(id)?;
        let entry = ModelRegistryEntry::from_json(&bytes)?;
        if entry.model_id != id {
            return Err(StoreError::NotFound(format!("model {id}")));
        }
        let entry = Arc::new(entry);
        self.models
            .write()
            .expect("model cache lock")
            .insert(id.to_string(), Arc::clone(&entry));
        Ok(entry)
    }

    fn stream_path(&self, stream_id: &str) -> PathBuf {
        self.root.join("streams").join(stream_id).join("rows.csv")
    }

    /// Shared handle to a stream's rows, loaded from disk on first use.
    pub fn stream(&self, stream_id: &str) -> Result<Arc<tokio::sync::Mutex<StreamRows>>, StoreError> {
        if !is_valid_stream_id(stream_id) {
            return Err(StoreError::InvalidId(stream_id.to_string()));
        }
        let mut streams = self.streams.lock().expect("stream map lock");
        if let Some(s) = streams.get(stream_id) {
            return Ok(Arc::clone(s));
        }
        let path = self.stream_path(stream_id);
        let rows = match std::fs::read_to_string(&path) {
            Ok(text) => StreamRows::parse(stream_id, &text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => StreamRows::default(),
            Err(e) => return Err(e.into()),
        };
        let handle = Arc::new(tokio::sync::Mutex::new(rows));
        streams.insert(stream_id.to_string(), Arc::clone(&handle));
        Ok(handle)
    }

    pub fn persist_stream(&self, stream_id: &str, rows: &StreamRows) -> Result<(), StoreError> {
        let path = self.stream_path(stream_id);
        std::fs::create_dir_all(path.parent().expect("stream dir"))?;
        write_atomic(&path, rows.to_csv().as_bytes())?;
        Ok(())
    }

    /// Every stored row across streams, ordered by stream id then seq.
    pub async fn animals(&self) -> Result<Vec<AnimalRow>, StoreError> {
        let dir = self.root.join("streams");
        let mut ids: BTreeSet<String> = BTreeSet::new();
        for entry in std::fs::read_dir(&dir)? {
            let entry = entry?;
            if let Some(name) = entry.file_name().to_str() {
                if is_valid_stream_id(name) && entry.path().join("rows.csv").exists() {
                    ids.insert(name.to_string());
                }
            }
        }
        let mut out = Vec::new();
        for id in ids {
            let handle = self.stream(&id)?;
            let rows = handle.lock().await;
            for (seq, values) in &rows.rows {
                out.push(AnimalRow {
                    stream_id: id.clone(),
                    seq: *seq,
                    features: rows.columns.iter().cloned().zip(values.iter().copied()).collect(),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contiguous_prefix() {
        let mut s = StreamRows::default();
        assert_eq!(s.highest_contiguous(), None);
        s.rows.insert(0, vec![]);
        s.rows.insert(1, vec![]);
        s.rows.insert(3, vec![]);
        assert_eq!(s.highest_contiguous(), Some(1));
        s.rows.insert(2, vec![]);
        assert_eq!(s.highest_contiguous(), Some(3));
    }

    #[test]
    fn stream_csv_round_trip() {
        let mut s = StreamRows {
            columns: vec!["WT".into(), "height_cm".into()],
            ..StreamRows::default()
        };
        s.rows.insert(0, vec![320.25, 101.5]);
        s.rows.insert(4, vec![0.1, 1e-7]);
        assert_eq!(StreamRows::parse("s", &s.to_csv()).unwrap(), s);
    }

    #[test]
    fn ids_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(matches!(store.get_dataset("../etc"), Err(StoreError::NotFound(_))));
        assert!(store.stream("../x").is_err());
        assert!(is_valid_stream_id("cam-01_a"));
        assert!(!is_valid_stream_id(""));
        let id = store.put_dataset(b"a,b\n1,2\n").unwrap();
        assert_eq!(store.get_dataset(&id).unwrap(), b"a,b\n1,2\n");
    }
}
