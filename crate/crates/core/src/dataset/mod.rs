//! Dataset assembly: batch composition, manifests, stratified splits,
//! and the COCO interchange documents.

pub mod coco;

mod build;
mod split;

pub use build::build_dataset;
pub use split::{SplitOutcome, SplitRatios, stratified_split};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compositor::{BBox, PipelineConfig};
use crate::error::{Error, Result};
use crate::threat::ClassLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Ground-truth box for one composite image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: u32,
    pub image_id: u32,
    pub category: ClassLabel,
    pub bbox: BBox,
}

/// One produced image: where it lives, its dimensions, its class, and
/// (after splitting) which split it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: u32,
    /// Path relative to the dataset root.
    pub file: String,
    pub width: u32,
    pub height: u32,
    pub category: ClassLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Provenance of a built dataset: the master seed, the full build
/// configuration, and one entry per produced image in job order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    pub config: BuildConfig,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::schema(path, e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        for entry in &manifest.entries {
            if !seen.insert(entry.image_id) {
                return Err(Error::schema(
                    path,
                    format!("duplicate image id {}", entry.image_id),
                ));
            }
        }
        Ok(manifest)
    }

    pub fn class_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut counts = BTreeMap::new();
        for entry in &self.entries {
            *counts.entry(entry.category).or_insert(0) += 1;
        }
        counts
    }

    pub fn split_counts(&self) -> BTreeMap<ClassLabel, BTreeMap<Split, usize>> {
        let mut counts: BTreeMap<ClassLabel, BTreeMap<Split, usize>> = BTreeMap::new();
        for entry in &self.entries {
            if let Some(split) = entry.split {
                *counts
                    .entry(entry.category)
                    .or_default()
                    .entry(split)
                    .or_insert(0) += 1;
            }
        }
        counts
    }
}

fn default_retry_budget() -> u32 {
    10
}

fn default_background_threshold() -> u8 {
    245
}

/// Full description of a dataset build. Serialisable so that a build
/// is reproducible from its manifest alone. Unknown keys are rejected
/// so a typoed parameter cannot silently fall back to a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub benign_dir: PathBuf,
    pub threat_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Number of composites to produce per class.
    #[serde(default)]
    pub counts: BTreeMap<ClassLabel, u32>,
    /// Master seed. Required for building: there is no hidden entropy.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Fresh-seed retries per composite before the build fails.
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    /// Binarisation threshold for signature extraction.
    #[serde(default = "default_background_threshold")]
    pub background_threshold: u8,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

impl BuildConfig {
    pub fn total_requested(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }
}
