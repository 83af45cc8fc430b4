//! Persistent data model: feature files, manifests, snippet labels, dataset
//! statistics and balanced merging of training sets.

mod codec;
mod labels;
mod manifest;
mod merge;
mod stats;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use ndarray::Array2;

pub use codec::{
    read_feature_file, read_feature_file_with, write_feature_file, SnippetMatrix,
    DEFAULT_SNIPPET_LEN, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use labels::{broadcast_to_frames, frame_labels, snippet_labels};
pub use manifest::{
    Domain, EventClass, FrameRange, Manifest, Split, TimeOfDay, VideoRecord, Weather,
    LOCATION_COUNT, MANIFEST_VERSION,
};
pub use merge::balanced_merge;
pub use stats::{abnormal_frame_count, dataset_stats, DatasetStats, SplitStats};

#[cfg(test)]
pub(crate) use manifest::fixtures;

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A video loaded into memory: metadata, 64-bit features and snippet labels.
#[derive(Debug, Clone)]
pub struct Video {
    pub record: VideoRecord,
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub snippet_len: usize,
}

impl Video {
    pub fn new(record: VideoRecord, matrix: &SnippetMatrix) -> Result<Self> {
        let labels = snippet_labels(&record.abnormal_ranges, record.frame_count, matrix.snippet_len())?;
        if labels.len() != matrix.snippets() {
            return Err(Error::validation(format!(
                "record {}: {} frames imply {} snippets, feature file has {}",
                record.id,
                record.frame_count,
                labels.len(),
                matrix.snippets()
            )));
        }
        Ok(Video {
            record,
            features: matrix.to_f64(),
            labels,
            snippet_len: matrix.snippet_len(),
        })
    }

    pub fn snippets(&self) -> usize {
        self.features.nrows()
    }

    pub fn evaluated_frames(&self) -> usize {
        self.snippets() * self.snippet_len
    }
}

/// A manifest bound to the directory its feature paths are relative to.
///
/// Every feature read is appended to an access log so callers can audit which
/// videos a pipeline stage touched.
#[derive(Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
    access_log: Mutex<Vec<String>>,
}

impl Dataset {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let manifest = Manifest::load(manifest_path)?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Self::from_parts(root, manifest))
    }

    pub fn from_parts(root: PathBuf, manifest: Manifest) -> Self {
        Dataset {
            root,
            manifest,
            access_log: Mutex::new(Vec::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn feature_path(&self, record: &VideoRecord) -> PathBuf {
        self.root.join(&record.feature_path)
    }

    pub fn read(&self, record: &VideoRecord) -> Result<SnippetMatrix> {
        self.access_log
            .lock()
            .expect("access log poisoned")
            .push(record.id.clone());
        let m = read_feature_file_with(&self.feature_path(record), self.manifest.snippet_len)?;
        if m.dim() != self.manifest.dim {
            return Err(Error::validation(format!(
                "record {}: feature dimension {} differs from manifest dimension {}",
                record.id,
                m.dim(),
                self.manifest.dim
            )));
        }
        Ok(m)
    }

    pub fn load(&self, record: &VideoRecord) -> Result<Video> {
        let m = self.read(record)?;
        Video::new(record.clone(), &m)
    }

    pub fn load_where<F>(&self, mut keep: F) -> Result<Vec<Arc<Video>>>
    where
        F: FnMut(&VideoRecord) -> bool,
    {
        self.manifest
            .records
            .iter()
            .filter(|r| keep(r))
            .map(|r| self.load(r).map(Arc::new))
            .collect()
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Arc<Video>>> {
        self.load_where(|r| r.split == split)
    }

    pub fn access_log(&self) -> Vec<String> {
        self.access_log.lock().expect("access log poisoned").clone()
    }
}
