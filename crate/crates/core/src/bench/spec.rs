use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::bayer::BayerPattern;
use crate::recon::{MergeConfig, MergeMode, PipelineConfig};
use crate::rng::RngSpec;
use crate::sim::Protocol;

use super::scene::SyntheticScene;

/// A merge configuration swept by the harness, named for output paths and
/// report rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedConfig {
    pub name: String,
    #[serde(default)]
    pub merge: MergeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedScene {
    pub name: String,
    #[serde(default)]
    pub scene: SyntheticScene,
}

/// Where `reconstruct` reads nano-bursts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BurstSource {
    #[default]
    Png,
    Cube,
}

/// One benchmark run: inputs, capture simulation, and the configs to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    /// PNG file or corpus directory. Loose PNGs in the directory are
    /// single-frame sequences; each subdirectory is one sequence whose
    /// frames are its PNGs in file-name order.
    pub input: Option<PathBuf>,
    pub synthetic: Vec<NamedScene>,
    pub protocol: Protocol,
    pub alpha: f64,
    pub dark_rate: f64,
    /// Colour filter used for 3-channel inputs; 1-channel inputs are
    /// simulated as monochrome sensors.
    pub pattern: BayerPattern,
    pub fps: f64,
    /// Burst window length `T` (odd).
    pub window: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub burst_source: BurstSource,
    /// Settings shared by every config; `alpha` is replaced by the
    /// simulated value.
    pub pipeline: PipelineConfig,
    pub configs: Vec<NamedConfig>,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            input: None,
            synthetic: Vec::new(),
            protocol: Protocol::BlurFree7,
            alpha: 1.0,
            dark_rate: 0.0,
            pattern: BayerPattern::Rggb,
            fps: 100_000.0,
            window: 11,
            seed: 0,
            out: PathBuf::from("quanta-out"),
            burst_source: BurstSource::Png,
            pipeline: PipelineConfig::default(),
            configs: default_configs(),
        }
    }
}

/// Naive, adaptive and Wiener merging, each at delta 0.05, 0.5 and 1.
pub fn default_configs() -> Vec<NamedConfig> {
    let mut out = Vec::new();
    for (label, mode) in [
        ("naive", MergeMode::NaiveAverage),
        ("adaptive", MergeMode::Adaptive),
        ("wiener", MergeMode::Wiener),
    ] {
        for delta in [0.05, 0.5, 1.0] {
            out.push(NamedConfig {
                name: format!("{label}-d{delta}"),
                merge: MergeConfig { mode, delta, ..MergeConfig::default() },
            });
        }
    }
    out
}

impl BenchmarkSpec {
    /// Reads a TOML or JSON spec, chosen by file extension.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let spec: BenchmarkSpec = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        };
        Ok(spec)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            bail!("window must be odd, got {}", self.window);
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            bail!("alpha must be positive, got {}", self.alpha);
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            bail!("dark_rate must be non-negative, got {}", self.dark_rate);
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            bail!("fps must be positive, got {}", self.fps);
        }
        if self.configs.is_empty() {
            bail!("at least one merge config is required");
        }
        let mut names = std::collections::BTreeSet::new();
        for c in &self.configs {
            check_name("config", &c.name)?;
            if !names.insert(c.name.as_str()) {
                bail!("duplicate config name {:?}", c.name);
            }
            c.merge.validate().with_context(|| format!("config {:?}", c.name))?;
        }
        let mut scenes = std::collections::BTreeSet::new();
        for s in &self.synthetic {
            check_name("synthetic scene", &s.name)?;
            if !scenes.insert(s.name.as_str()) {
                bail!("duplicate synthetic scene name {:?}", s.name);
            }
            if s.scene.width == 0 || s.scene.height == 0 || s.scene.frames == 0 {
                bail!("synthetic scene {:?} is empty", s.name);
            }
        }
        Ok(())
    }

    pub fn rng(&self) -> RngSpec {
        RngSpec::new(self.seed)
    }

    /// Effective pipeline settings for one named config.
    pub fn pipeline_for(&self, config: &NamedConfig) -> PipelineConfig {
        PipelineConfig { alpha: self.alpha, merge: config.merge, ..self.pipeline }
    }
}

/// Names become path components, so keep them to a portable alphabet.
pub(crate) fn check_name(kind: &str, name: &str) -> anyhow::Result<()> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !ok {
        bail!("{kind} name {name:?} must be non-empty and use only [A-Za-z0-9._-]");
    }
    Ok(())
}
