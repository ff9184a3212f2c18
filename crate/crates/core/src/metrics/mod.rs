//! Full-reference fidelity metrics and the flow-warping stability metric.
//!
//! Colour images are scored channel by channel and the per-channel values
//! are averaged.

mod report;

pub use report::{FrameMetrics, ReconReport, REPORT_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::recon::{warp, FlowField};

/// PSNR in dB; identical inputs give `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psnr(pub f64);

impl Psnr {
    pub fn db(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `None` for the infinite case, for serialisers without infinities.
    pub fn finite_db(self) -> Option<f64> {
        self.0.is_finite().then_some(self.0)
    }
}

pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<Psnr> {
    a.check_same_shape(b)?;
    if !(peak > 0.0) {
        return Err(invalid(format!("peak must be positive, got {peak}")));
    }
    if a.pixel_count() == 0 {
        return Err(invalid("PSNR of an empty image"));
    }
    let per_channel: Vec<f64> = a
        .planes()
        .zip(b.planes())
        .map(|(pa, pb)| {
            let mse = pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / pa.len() as f64;
            if mse == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (peak * peak / mse).log10()
            }
        })
        .collect();
    Ok(Psnr(per_channel.iter().sum::<f64>() / per_channel.len() as f64))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over the valid region only.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let k = ssim_kernel();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let e_aa = filter_valid(&prod(a, a), w, h, &k);
    let e_bb = filter_valid(&prod(b, b), w, h, &k);
    let e_ab = filter_valid(&prod(a, b), w, h, &k);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    total / mu_a.len() as f64
}

/// Mean SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1, evaluated where the window fits entirely.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            min: SSIM_WINDOW,
        });
    }
    let per: Vec<f64> = a.planes().zip(b.planes()).map(|(pa, pb)| ssim_plane(pa, pb, w, h)).collect();
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpingError {
    /// Mean squared difference over valid pixels and channels.
    pub e_warp: f64,
    /// `1000 * e_warp`.
    pub e_star: f64,
    /// Valid pixels summed over all consecutive pairs.
    pub valid_pixels: u64,
}

/// Temporal stability of a reconstructed sequence.
///
/// `flows[t]` aligns `recon[t + 1]` onto `recon[t]` (typically estimated on
/// the ground truth). Pixels that warp out of bounds or sit on an invalid
/// flow patch are excluded.
pub fn warping_error(recon: &[Image], flows: &[FlowField]) -> Result<WarpingError> {
    if recon.len() < 2 {
        return Err(invalid(format!(
            "warping error needs at least 2 frames, got {}",
            recon.len()
        )));
    }
    if flows.len() != recon.len() - 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} frames need {} flows, got {}",
            recon.len(),
            recon.len() - 1,
            flows.len()
        )));
    }
    let mut sum = 0.0;
    let mut samples = 0u64;
    let mut valid_pixels = 0u64;
    for (t, flow) in flows.iter().enumerate() {
        recon[t].check_same_shape(&recon[t + 1])?;
        let (warped, mask) = warp(&recon[t + 1], flow)?;
        for (c, (pa, pb)) in recon[t].planes().zip(warped.planes()).enumerate() {
            for (i, &ok) in mask.iter().enumerate() {
                if ok {
                    let d = pa[i] - pb[i];
                    sum += d * d;
                    samples += 1;
                    if c == 0 {
                        valid_pixels += 1;
                    }
                }
            }
        }
    }
    if samples == 0 {
        return Err(invalid("warping error has no valid pixels"));
    }
    let e_warp = sum / samples as f64;
    Ok(WarpingError {
        e_warp,
        e_star: 1e3 * e_warp,
        valid_pixels,
    })
}
