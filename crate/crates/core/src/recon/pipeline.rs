use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::{Image, LinearImage, SrgbImage, DEFAULT_GAMMA};
use crate::sim::NanoBurst;

use super::demosaic::{demosaic, DemosaicMethod};
use super::flow::{block_match_flow, BlockMatchParams, FlowField, Validity};
use super::invert::mle_invert;
use super::merge::{merge_burst, BurstWindow, MergeConfig, MergeMode};
use super::white_balance::gray_world_wb;
use super::wiener::{NoiseModel, NoiseVariance};

/// Everything `reconstruct` needs besides the frames.
///
/// When `merge.noise_variance` selects the Bernoulli model its `n_frames`
/// and `alpha` are taken from the window and from `alpha` here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub demosaic: DemosaicMethod,
    pub white_balance: bool,
    /// Patches whose best match is worse than this many times the expected
    /// noise-only difference are excluded from merging.
    pub validity_factor: f64,
    /// Gaussian sigma (pixels) applied to frames before matching; 0 disables.
    pub flow_prefilter: f64,
    pub block_matching: BlockMatchParams,
    pub merge: MergeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 1.0,
            gamma: DEFAULT_GAMMA,
            demosaic: DemosaicMethod::Bilinear,
            white_balance: false,
            validity_factor: 3.0,
            flow_prefilter: 1.0,
            block_matching: BlockMatchParams::default(),
            merge: MergeConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Merged linear estimate before white balance.
    pub linear: LinearImage,
    pub flows: Vec<FlowField>,
    pub srgb: SrgbImage,
}

/// Inverts one nano-burst to linear intensity and demosaics colour data.
pub fn invert_frame(nb: &NanoBurst, cfg: &PipelineConfig) -> Result<LinearImage> {
    let lin = mle_invert(nb, cfg.alpha)?;
    let img = match nb.pattern() {
        Some(p) => demosaic(lin.image(), p, cfg.demosaic)?.map(|v| v.max(0.0)),
        None => lin.into_inner(),
    };
    Ok(LinearImage::new_unchecked(img, cfg.gamma))
}

fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let ks: f64 = k.iter().sum();
    let k: Vec<f64> = k.iter().map(|v| v / ks).collect();
    let (w, h) = (img.width() as isize, img.height() as isize);
    let clamp = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
    let mut tmp = img.clone();
    let mut out = img.clone();
    for c in 0..img.channels() {
        for y in 0..h {
            for x in 0..w {
                let v = (-r..=r)
                    .map(|i| k[(i + r) as usize] * img.get(c, y as usize, clamp(x + i, w)))
                    .sum();
                tmp.set(c, y as usize, x as usize, v);
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v = (-r..=r)
                    .map(|i| k[(i + r) as usize] * tmp.get(c, clamp(y + i, h), x as usize))
                    .sum();
                out.set(c, y as usize, x as usize, v);
            }
        }
    }
    out
}

/// Full reconstruction of the window's centre frame, keeping intermediates.
///
/// Stages: per-frame inversion (and demosaic for colour), block matching of
/// every frame against the centre, warping and merging, optional gray-world
/// balance, and power-law re-encoding clamped to [0, 1].
pub fn reconstruct_detailed(window: &BurstWindow<NanoBurst>, cfg: &PipelineConfig) -> Result<Reconstruction> {
    cfg.merge.validate()?;
    let n_frames = window.center().n_frames();
    let frames = window
        .frames()
        .par_iter()
        .map(|nb| invert_frame(nb, cfg))
        .collect::<Result<Vec<_>>>()?;

    let c = window.center_index();
    let (w, h) = (frames[c].width(), frames[c].height());
    let flows = if frames.len() == 1 {
        vec![FlowField::zeros(w, h)]
    } else {
        let bm = BlockMatchParams {
            validity: Validity::Bernoulli {
                n_frames,
                alpha: cfg.alpha,
                factor: cfg.validity_factor,
            },
            ..cfg.block_matching
        };
        let guides: Vec<Image> = frames
            .par_iter()
            .map(|f| {
                let lum = f.luminance();
                if cfg.flow_prefilter > 0.0 {
                    gaussian_blur(&lum, cfg.flow_prefilter)
                } else {
                    lum
                }
            })
            .collect();
        // The matcher's noise floor assumes unfiltered inverted frames,
        // which is conservative for prefiltered guides.
        (0..frames.len())
            .into_par_iter()
            .map(|i| {
                if i == c {
                    Ok(FlowField::zeros(w, h))
                } else {
                    block_match_flow(&guides[i], &guides[c], &bm)
                }
            })
            .collect::<Result<Vec<_>>>()?
    };

    let mut merge = cfg.merge;
    if let NoiseVariance::Model(NoiseModel::Bernoulli { .. }) = merge.noise_variance {
        merge.noise_variance = NoiseVariance::Model(NoiseModel::Bernoulli {
            n_frames,
            alpha: cfg.alpha,
        });
    }
    let window = BurstWindow::new(frames)?;
    let linear = if window.len() == 1 && merge.mode != MergeMode::Wiener {
        window.center().clone()
    } else {
        merge_burst(&window, &flows, &merge)?
    };
    let balanced = if cfg.white_balance && linear.channels() == 3 {
        LinearImage::new_unchecked(gray_world_wb(linear.image())?, cfg.gamma)
    } else {
        linear.clone()
    };
    Ok(Reconstruction {
        srgb: balanced.to_srgb(),
        linear,
        flows,
    })
}

pub fn reconstruct(window: &BurstWindow<NanoBurst>, cfg: &PipelineConfig) -> Result<SrgbImage> {
    Ok(reconstruct_detailed(window, cfg)?.srgb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayer::BayerPattern;
    use crate::rng::RngSpec;
    use crate::sim::{gamma_linearize, make_nano_burst, make_rate_map};

    fn bursts(gt: &SrgbImage, count: u64, pattern: Option<BayerPattern>) -> Vec<NanoBurst> {
        let rng = RngSpec::new(21);
        let rate = make_rate_map(&gamma_linearize(gt, 2.2).unwrap(), 1.0, 0.0).unwrap();
        (0..count)
            .map(|i| make_nano_burst(&rate, 7, pattern, &rng, 7 * i).unwrap())
            .collect()
    }

    #[test]
    fn flat_gray_stays_gray() {
        let gt = SrgbImage::new(Image::filled(48, 48, 3, 0.6)).unwrap();
        let window = BurstWindow::new(bursts(&gt, 11, Some(BayerPattern::Rggb))).unwrap();
        let cfg = PipelineConfig {
            merge: MergeConfig { delta: 1.0, ..MergeConfig::default() },
            ..PipelineConfig::default()
        };
        let out = reconstruct(&window, &cfg).unwrap();
        for c in 0..3 {
            let m = out.plane(c).iter().sum::<f64>() / out.pixel_count() as f64;
            assert!((m - 0.6).abs() < 0.03, "channel {c}: {m}");
        }
    }

    #[test]
    fn single_frame_window_is_inversion_plus_demosaic() {
        let gt = SrgbImage::new(Image::from_fn(20, 20, 3, |c, y, x| ((c + x + y) % 5) as f64 / 5.0)).unwrap();
        let nb = bursts(&gt, 1, Some(BayerPattern::Gbrg));
        let cfg = PipelineConfig::default();
        let out = reconstruct(&BurstWindow::new(nb.clone()).unwrap(), &cfg).unwrap();
        let direct = invert_frame(&nb[0], &cfg).unwrap().to_srgb();
        assert_eq!(out, direct);
    }
}
