//! Dataset directory layout.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cpd_core::features::load_batch;
use cpd_core::{AcfSample, Class, ScenarioConfig, Split};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub splits: Vec<SplitEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: Split,
    /// Feature batch path, relative to the dataset directory.
    pub features: String,
    pub windows: usize,
    /// Recordings per class in `Empty, Adult, Child` order.
    pub class_counts: [usize; 3],
    pub recordings: Vec<RecordingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub id: String,
    pub path: String,
    pub label: Class,
    pub scenario: ScenarioConfig,
}

pub fn features_path(split: Split) -> String {
    format!("features/{}.acf", split.name())
}

pub fn recording_path(id: &str) -> String {
    format!("recordings/{id}.csi")
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn split(&self, split: Split) -> Result<&SplitEntry> {
        match self.splits.iter().find(|s| s.split == split) {
            Some(s) => Ok(s),
            None => bail!("dataset has no {} split", split.name()),
        }
    }
}

/// Feature windows of one split.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<AcfSample>> {
    let manifest = Manifest::load(dir)?;
    let path: PathBuf = dir.join(&manifest.split(split)?.features);
    let samples = load_batch(&path).with_context(|| format!("loading {}", path.display()))?;
    if samples.is_empty() {
        bail!("{} holds no feature windows", path.display());
    }
    Ok(samples)
}
