//! The `simulate` and `reconstruct` stages.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use log::{info, warn};
use rayon::prelude::*;

use crate::cube::{read_cube_file, write_cube_file};
use crate::recon::{reconstruct, BurstWindow};
use crate::sim::{simulate_burst_sequence, NanoBurst, Protocol, SimParams, NANO_BURST_FRAMES};

use super::corpus::{discover, SequenceInput};
use super::manifest::*;
use super::spec::{BenchmarkSpec, BurstSource};

/// Number of stride-1 windows of length `window` over `bursts` frames.
pub fn window_count(bursts: usize, window: usize) -> usize {
    (bursts + 1).saturating_sub(window)
}

fn simulate_one(spec: &BenchmarkSpec, input: &SequenceInput) -> anyhow::Result<Option<SequenceEntry>> {
    let mut frames = input.load()?;
    let n = NANO_BURST_FRAMES as usize;
    if spec.protocol == Protocol::Realistic1 && frames.len() % n != 0 {
        let keep = frames.len() / n * n;
        if keep == 0 {
            warn!("skipping {}: Realistic1 needs at least {n} frames, found {}", input.name, frames.len());
            return Ok(None);
        }
        warn!("{}: dropping {} trailing frames to a multiple of {n}", input.name, frames.len() - keep);
        frames.truncate(keep);
    }
    if frames.is_empty() {
        warn!("skipping {}: no readable frames", input.name);
        return Ok(None);
    }
    let first = &frames[0];
    let (w, h, ch) = (first.width(), first.height(), first.channels());
    let params = SimParams {
        alpha: spec.alpha,
        dark_rate: spec.dark_rate,
        gamma: spec.pipeline.gamma,
        fps: spec.fps,
        pattern: (ch == 3).then_some(spec.pattern),
    };
    let rng = spec.rng().derive("sequence", 0).derive(&input.name, 0);
    let sim = simulate_burst_sequence(&frames, spec.protocol, &params, &rng)
        .with_context(|| format!("simulating {}", input.name))?;

    let root = &spec.out;
    let rel = format!("sequences/{}", input.name);
    for sub in ["gt", "bursts"] {
        let d = root.join(&rel).join(sub);
        std::fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    }
    let gt_frames: Vec<String> = (0..frames.len()).map(|i| format!("{rel}/gt/frame_{i:05}.png")).collect();
    frames
        .par_iter()
        .zip(&gt_frames)
        .try_for_each(|(f, p)| f.save_png16(root.join(p)).with_context(|| format!("writing {p}")))?;
    let bursts: Vec<BurstEntry> = (0..sim.bursts.len())
        .map(|b| BurstEntry {
            path: format!("{rel}/bursts/burst_{b:05}.png"),
            reference_frame: spec.protocol.reference_frame(b),
        })
        .collect();
    sim.bursts
        .par_iter()
        .zip(&bursts)
        .try_for_each(|(nb, e)| nb.save_png(root.join(&e.path)).with_context(|| format!("writing {}", e.path)))?;
    let cube = format!("{rel}/capture.pcube");
    write_cube_file(&sim.cube, root.join(&cube)).with_context(|| format!("writing {cube}"))?;
    info!("{}: {} frames, {} nano-bursts, PPP {:.3}", input.name, frames.len(), sim.bursts.len(), sim.expected_ppp);

    Ok(Some(SequenceEntry {
        name: input.name.clone(),
        source: input.describe(),
        seed: rng.seed,
        width: w,
        height: h,
        channels: ch,
        pattern: params.pattern,
        expected_ppp: sim.expected_ppp,
        gt_frames,
        cube,
        cube_frames: sim.cube.frames().len(),
        bursts,
    }))
}

/// Simulates every input sequence and writes cubes, nano-burst PNGs,
/// ground-truth PNGs and the manifest.
pub fn cmd_simulate(spec: &BenchmarkSpec) -> anyhow::Result<SimManifest> {
    spec.validate()?;
    let inputs = discover(spec)?;
    let entries = inputs
        .par_iter()
        .map(|s| simulate_one(spec, s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let sequences: Vec<SequenceEntry> = entries.into_iter().flatten().collect();
    if sequences.is_empty() {
        bail!("no sequence could be simulated");
    }
    let manifest = SimManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: spec.seed,
        protocol: spec.protocol,
        alpha: spec.alpha,
        dark_rate: spec.dark_rate,
        gamma: spec.pipeline.gamma,
        fps: spec.fps,
        nano_burst_frames: NANO_BURST_FRAMES,
        sequences,
    };
    write_json(&spec.out.join(SIM_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub(crate) fn load_sim_manifest(out: &Path) -> anyhow::Result<SimManifest> {
    let path = out.join(SIM_MANIFEST);
    if !path.is_file() {
        bail!("{} not found; run `simulate` first", path.display());
    }
    let m: SimManifest = read_json(&path)?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        bail!("{}: unsupported schema version {}", path.display(), m.schema_version);
    }
    Ok(m)
}

/// Loads the nano-bursts of one manifest sequence from PNGs or the cube.
pub fn load_bursts(
    out: &Path,
    manifest: &SimManifest,
    seq: &SequenceEntry,
    source: BurstSource,
) -> anyhow::Result<Vec<NanoBurst>> {
    let n = manifest.nano_burst_frames;
    match source {
        BurstSource::Png => seq
            .bursts
            .iter()
            .map(|b| {
                let p = out.join(&b.path);
                if !p.is_file() {
                    return Err(anyhow!("missing nano-burst {} listed for sequence {}", b.path, seq.name));
                }
                NanoBurst::load_png(&p, n, seq.pattern).with_context(|| format!("loading {}", b.path))
            })
            .collect(),
        BurstSource::Cube => {
            let p = out.join(&seq.cube);
            if !p.is_file() {
                bail!("missing cube {} listed for sequence {}", seq.cube, seq.name);
            }
            let cube = read_cube_file(&p).with_context(|| format!("loading {}", seq.cube))?;
            let bursts = cube
                .frames()
                .chunks(n as usize)
                .map(NanoBurst::from_frames)
                .collect::<crate::Result<Vec<_>>>()?;
            if bursts.len() != seq.bursts.len() {
                bail!("{}: cube holds {} nano-bursts, manifest lists {}", seq.cube, bursts.len(), seq.bursts.len());
            }
            Ok(bursts)
        }
    }
}

/// Reconstructs every stride-1 window of every sequence under every config.
pub fn cmd_reconstruct(spec: &BenchmarkSpec) -> anyhow::Result<ReconManifest> {
    spec.validate()?;
    let out = &spec.out;
    let manifest = load_sim_manifest(out)?;
    let t = spec.window;
    let loaded = manifest
        .sequences
        .par_iter()
        .map(|s| load_bursts(out, &manifest, s, spec.burst_source))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut timing: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut configs = Vec::with_capacity(spec.configs.len());
    for config in &spec.configs {
        let pipeline = spec.pipeline_for(config);
        let pipeline = crate::recon::PipelineConfig { alpha: manifest.alpha, gamma: manifest.gamma, ..pipeline };
        let results = manifest
            .sequences
            .par_iter()
            .zip(&loaded)
            .map(|(seq, bursts)| -> anyhow::Result<(ReconSequenceEntry, f64)> {
                let start = Instant::now();
                let rel = format!("recon/{}/{}", config.name, seq.name);
                let dir = out.join(&rel);
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                let frames = (0..window_count(bursts.len(), t))
                    .into_par_iter()
                    .map(|first| -> anyhow::Result<ReconFrame> {
                        let center = first + t / 2;
                        let window = BurstWindow::new(bursts[first..first + t].to_vec())?;
                        let img = reconstruct(&window, &pipeline)
                            .with_context(|| format!("{} window at {first} ({})", seq.name, config.name))?;
                        let path = format!("{rel}/frame_{center:05}.png");
                        img.save_png16(out.join(&path)).with_context(|| format!("writing {path}"))?;
                        Ok(ReconFrame { path, center_burst: center, reference_frame: seq.bursts[center].reference_frame })
                    })
                    .collect::<anyhow::Result<Vec<_>>>()?;
                Ok((ReconSequenceEntry { name: seq.name.clone(), frames }, start.elapsed().as_secs_f64() * 1e3))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut sequences = Vec::with_capacity(results.len());
        for (entry, ms) in results {
            timing.entry(config.name.clone()).or_default().insert(entry.name.clone(), ms);
            sequences.push(entry);
        }
        info!("config {}: done", config.name);
        configs.push(ReconConfigEntry { name: config.name.clone(), pipeline, sequences });
    }
    let recon = ReconManifest { schema_version: MANIFEST_SCHEMA_VERSION, window: t, configs };
    write_json(&out.join(RECON_MANIFEST), &recon)?;
    write_json(&out.join(RECON_TIMING), &timing)?;
    Ok(recon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_arithmetic() {
        assert_eq!(window_count(11, 11), 1);
        assert_eq!(window_count(20, 11), 10);
        assert_eq!(window_count(5, 1), 5);
        assert_eq!(window_count(5, 11), 0);
        assert_eq!(window_count(0, 1), 0);
    }
}
