use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    /// `None` when the reconstruction equals the ground truth.
    pub psnr_db: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
}

/// Metrics of one sequence reconstructed under one merge configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub sequence: String,
    pub config: String,
    pub config_snapshot: serde_json::Value,
    pub frames: Vec<FrameMetrics>,
    pub e_star: Option<f64>,
    pub e_star_valid_pixels: u64,
    /// Wall-clock reconstruction time. Kept out of the deterministic report
    /// files and written to a separate timing file instead.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing_ms: Option<f64>,
    /// Externally computed metrics (e.g. learned perceptual scores) merged
    /// in by name.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub external: BTreeMap<String, f64>,
}

impl ReconReport {
    pub fn mean_psnr(&self) -> Option<f64> {
        if self.frames.is_empty() {
            return None;
        }
        let total: f64 = self
            .frames
            .iter()
            .map(|f| if f.psnr_infinite { f64::INFINITY } else { f.psnr_db.unwrap_or(f64::NAN) })
            .sum();
        Some(total / self.frames.len() as f64)
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        if self.frames.is_empty() {
            return None;
        }
        Some(self.frames.iter().map(|f| f.ssim).sum::<f64>() / self.frames.len() as f64)
    }
}
