//! The `evaluate` stage: per-frame fidelity, temporal stability and the
//! aggregate ("Cumulative") rows.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::{Image, SrgbImage};
use crate::metrics::{FrameMetrics, ReconReport, REPORT_SCHEMA_VERSION};
use crate::metrics::{psnr, ssim, warping_error};
use crate::recon::{block_match_flow, BlockMatchParams, FlowField, Validity};
use crate::sim::Protocol;

use super::manifest::*;
use super::run::{load_sim_manifest, window_count};
use super::spec::BenchmarkSpec;

pub const REPORT_JSON: &str = "reports/report.json";
pub const REPORT_CSV: &str = "reports/report.csv";
pub const SUMMARY_TXT: &str = "reports/summary.txt";

/// Ground-truth flow patches whose mean absolute luminance difference after
/// matching exceeds this are treated as occluded and left out of E*.
pub const GT_FLOW_MAX_SAD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateRule {
    /// Every evaluated frame counts once.
    FrameWeighted,
    /// Every sequence counts once.
    SequenceMean,
}

impl AggregateRule {
    pub fn label(self) -> &'static str {
        match self {
            AggregateRule::FrameWeighted => "frame-weighted",
            AggregateRule::SequenceMean => "sequence-mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config: String,
    pub rule: AggregateRule,
    pub sequences: usize,
    pub frames: usize,
    pub psnr_db: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: Option<f64>,
    pub e_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub seed: u64,
    pub protocol: Protocol,
    pub alpha: f64,
    pub window: usize,
    pub reports: Vec<ReconReport>,
    pub cumulative: Vec<Aggregate>,
}

/// Weighted mean where an infinite PSNR makes the mean infinite.
fn weighted(values: &[(f64, f64)]) -> Option<f64> {
    let total: f64 = values.iter().map(|(_, w)| w).sum();
    if values.is_empty() || total <= 0.0 {
        return None;
    }
    Some(values.iter().map(|(v, w)| v * w).sum::<f64>() / total)
}

/// Aggregates the per-sequence reports of one config under `rule`.
pub fn aggregate(config: &str, reports: &[&ReconReport], rule: AggregateRule) -> Aggregate {
    let scored: Vec<&&ReconReport> = reports.iter().filter(|r| !r.frames.is_empty()).collect();
    let weight = |r: &ReconReport| match rule {
        AggregateRule::FrameWeighted => r.frames.len() as f64,
        AggregateRule::SequenceMean => 1.0,
    };
    let psnrs: Vec<(f64, f64)> = scored.iter().filter_map(|r| r.mean_psnr().map(|p| (p, weight(r)))).collect();
    let psnr = weighted(&psnrs);
    let ssims: Vec<(f64, f64)> = scored.iter().filter_map(|r| r.mean_ssim().map(|s| (s, weight(r)))).collect();
    let e_stars: Vec<(f64, f64)> = scored.iter().filter_map(|r| r.e_star.map(|e| (e, weight(r)))).collect();
    let infinite = psnr.is_some_and(f64::is_infinite);
    Aggregate {
        config: config.to_string(),
        rule,
        sequences: scored.len(),
        frames: scored.iter().map(|r| r.frames.len()).sum(),
        psnr_db: psnr.filter(|p| p.is_finite()),
        psnr_infinite: infinite,
        ssim: weighted(&ssims),
        e_star: weighted(&e_stars),
    }
}

fn load_image(out: &Path, rel: &str) -> anyhow::Result<Image> {
    let p = out.join(rel);
    if !p.is_file() {
        bail!("missing image {rel}");
    }
    Ok(SrgbImage::load_png(&p).with_context(|| format!("loading {rel}"))?.into_inner())
}

/// Flows aligning reference frame `refs[t + 1]` onto `refs[t]`, estimated on
/// the ground truth.
fn gt_flows(gt: &[Image], params: &BlockMatchParams) -> crate::Result<Vec<FlowField>> {
    let params = BlockMatchParams { validity: Validity::MaxSadPerPixel(GT_FLOW_MAX_SAD), ..*params };
    gt.par_windows(2).map(|p| block_match_flow(&p[1], &p[0], &params)).collect()
}

fn evaluate_sequence(
    out: &Path,
    spec: &BenchmarkSpec,
    config: &ReconConfigEntry,
    seq: &SequenceEntry,
    recon_seq: &ReconSequenceEntry,
    window: usize,
) -> anyhow::Result<ReconReport> {
    let expected = window_count(seq.bursts.len(), window);
    if recon_seq.frames.len() != expected {
        bail!(
            "{} / {}: {} reconstructions for {} nano-bursts with T={window}, expected {expected}",
            config.name,
            seq.name,
            recon_seq.frames.len(),
            seq.bursts.len()
        );
    }
    let mut gt = Vec::with_capacity(expected);
    for f in &recon_seq.frames {
        let rel = seq.gt_frames.get(f.reference_frame).with_context(|| {
            format!(
                "{} / {}: reconstruction {} refers to ground-truth frame {}, only {} present",
                config.name,
                seq.name,
                f.path,
                f.reference_frame,
                seq.gt_frames.len()
            )
        })?;
        gt.push(load_image(out, rel)?);
    }
    let recon = recon_seq
        .frames
        .iter()
        .map(|f| load_image(out, &f.path))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let frames = recon_seq
        .frames
        .par_iter()
        .zip(recon.par_iter().zip(&gt))
        .map(|(f, (r, g))| -> anyhow::Result<FrameMetrics> {
            let p = psnr(g, r, 1.0).with_context(|| format!("PSNR of {}", f.path))?;
            Ok(FrameMetrics {
                frame: f.reference_frame,
                psnr_db: p.finite_db(),
                psnr_infinite: p.is_infinite(),
                ssim: ssim(g, r).with_context(|| format!("SSIM of {}", f.path))?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let (e_star, e_star_valid_pixels) = if recon.len() < 2 {
        (None, 0)
    } else {
        match gt_flows(&gt, &spec.pipeline.block_matching).and_then(|fl| warping_error(&recon, &fl)) {
            Ok(w) => (Some(w.e_star), w.valid_pixels),
            Err(e) => {
                warn!("{} / {}: no warping error: {e}", config.name, seq.name);
                (None, 0)
            }
        }
    };
    Ok(ReconReport {
        sequence: seq.name.clone(),
        config: config.name.clone(),
        config_snapshot: serde_json::to_value(config.pipeline)?,
        frames,
        e_star,
        e_star_valid_pixels,
        timing_ms: None,
        external: Default::default(),
    })
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

fn fmt_psnr(db: Option<f64>, infinite: bool, digits: usize) -> String {
    if infinite {
        "inf".into()
    } else {
        fmt_opt(db, digits)
    }
}

fn write_csv(path: &Path, report: &EvaluationReport) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["sequence", "config", "aggregate", "sequences", "frames", "psnr_db", "ssim", "e_star"])?;
    for r in &report.reports {
        let inf = r.frames.iter().any(|f| f.psnr_infinite);
        w.write_record([
            r.sequence.clone(),
            r.config.clone(),
            String::new(),
            "1".into(),
            r.frames.len().to_string(),
            fmt_psnr(r.mean_psnr().filter(|p| p.is_finite()), inf, 6),
            fmt_opt(r.mean_ssim(), 6),
            fmt_opt(r.e_star, 6),
        ])?;
    }
    for a in &report.cumulative {
        w.write_record([
            "Cumulative".into(),
            a.config.clone(),
            a.rule.label().into(),
            a.sequences.to_string(),
            a.frames.to_string(),
            fmt_psnr(a.psnr_db, a.psnr_infinite, 6),
            fmt_opt(a.ssim, 6),
            fmt_opt(a.e_star, 6),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text table: one row per sequence and config, then the aggregates.
pub fn summary_table(report: &EvaluationReport) -> String {
    let mut rows: Vec<[String; 6]> = vec![[
        "sequence".into(),
        "config".into(),
        "frames".into(),
        "PSNR (dB)".into(),
        "SSIM".into(),
        "E*".into(),
    ]];
    for r in &report.reports {
        let inf = r.frames.iter().any(|f| f.psnr_infinite);
        rows.push([
            r.sequence.clone(),
            r.config.clone(),
            r.frames.len().to_string(),
            fmt_psnr(r.mean_psnr().filter(|p| p.is_finite()), inf, 2),
            fmt_opt(r.mean_ssim(), 4),
            fmt_opt(r.e_star, 3),
        ]);
    }
    for a in &report.cumulative {
        rows.push([
            format!("Cumulative ({})", a.rule.label()),
            a.config.clone(),
            a.frames.to_string(),
            fmt_psnr(a.psnr_db, a.psnr_infinite, 2),
            fmt_opt(a.ssim, 4),
            fmt_opt(a.e_star, 3),
        ]);
    }
    let widths: Vec<usize> = (0..6).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut s = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        let _ = writeln!(s, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(s, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    s
}

/// Scores every reconstruction against its ground-truth frame and writes
/// `report.json`, `report.csv` and `summary.txt` under `reports/`.
pub fn cmd_evaluate(spec: &BenchmarkSpec) -> anyhow::Result<EvaluationReport> {
    spec.validate()?;
    let out = &spec.out;
    let sim = load_sim_manifest(out)?;
    let recon_path = out.join(RECON_MANIFEST);
    if !recon_path.is_file() {
        bail!("{} not found; run `reconstruct` first", recon_path.display());
    }
    let recon: ReconManifest = read_json(&recon_path)?;
    if recon.schema_version != MANIFEST_SCHEMA_VERSION {
        bail!("{}: unsupported schema version {}", recon_path.display(), recon.schema_version);
    }

    let mut reports = Vec::new();
    let mut cumulative = Vec::new();
    for config in &recon.configs {
        if config.sequences.len() != sim.sequences.len() {
            bail!(
                "config {} has reconstructions for {} sequences, the manifest lists {}",
                config.name,
                config.sequences.len(),
                sim.sequences.len()
            );
        }
        let rows = sim
            .sequences
            .par_iter()
            .map(|seq| {
                let rs = config
                    .sequences
                    .iter()
                    .find(|r| r.name == seq.name)
                    .with_context(|| format!("config {} has no reconstructions for {}", config.name, seq.name))?;
                evaluate_sequence(out, spec, config, seq, rs, recon.window)
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let refs: Vec<&ReconReport> = rows.iter().collect();
        for rule in [AggregateRule::FrameWeighted, AggregateRule::SequenceMean] {
            cumulative.push(aggregate(&config.name, &refs, rule));
        }
        reports.extend(rows);
    }
    reports.sort_by(|a, b| a.sequence.cmp(&b.sequence));

    let report = EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: sim.seed,
        protocol: sim.protocol,
        alpha: sim.alpha,
        window: recon.window,
        reports,
        cumulative,
    };
    write_json(&out.join(REPORT_JSON), &report)?;
    write_csv(&out.join(REPORT_CSV), &report)?;
    std::fs::write(out.join(SUMMARY_TXT), summary_table(&report))
        .with_context(|| format!("writing {SUMMARY_TXT}"))?;
    Ok(report)
}
