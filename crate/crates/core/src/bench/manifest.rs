//! JSON manifests linking the stages of a benchmark run. Paths are relative
//! to the output directory and always use `/`.

use std::path::Path;

use anyhow::Context;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::bayer::BayerPattern;
use crate::recon::PipelineConfig;
use crate::sim::Protocol;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const SIM_MANIFEST: &str = "manifest.json";
pub const RECON_MANIFEST: &str = "recon/manifest.json";
pub const RECON_TIMING: &str = "recon/timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub protocol: Protocol,
    pub alpha: f64,
    pub dark_rate: f64,
    pub gamma: f64,
    pub fps: f64,
    pub nano_burst_frames: u32,
    pub sequences: Vec<SequenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub name: String,
    pub source: String,
    /// Seed of the sequence's binary samples, derived from the run seed.
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pattern: Option<BayerPattern>,
    pub expected_ppp: f64,
    pub gt_frames: Vec<String>,
    pub cube: String,
    pub cube_frames: usize,
    pub bursts: Vec<BurstEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstEntry {
    pub path: String,
    /// Ground-truth frame the burst is scored against.
    pub reference_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconManifest {
    pub schema_version: u32,
    pub window: usize,
    pub configs: Vec<ReconConfigEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconConfigEntry {
    pub name: String,
    pub pipeline: PipelineConfig,
    pub sequences: Vec<ReconSequenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconSequenceEntry {
    pub name: String,
    pub frames: Vec<ReconFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconFrame {
    pub path: String,
    pub center_burst: usize,
    pub reference_frame: usize,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
