//! Burst windows and flow-aligned merging.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{Image, LinearImage};
use crate::sim::NanoBurst;

use super::flow::{warp, FlowField};
use super::wiener::{wiener_merge, NoiseVariance, WienerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MergeMode {
    NaiveAverage,
    #[default]
    Adaptive,
    Wiener,
}

/// Merge settings. `delta` blends the fused estimate into the centre frame:
/// `out = centre + delta * (fused - centre)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub mode: MergeMode,
    pub delta: f64,
    /// Bandwidth of the Gaussian motion weight, pixels.
    pub sigma_motion: f64,
    /// Decay constant of the temporal-proximity weight, frames.
    pub tau_time: f64,
    /// Wiener tile size, pixels (power of two).
    pub tile: usize,
    pub noise_variance: NoiseVariance,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            mode: MergeMode::Adaptive,
            delta: 0.05,
            sigma_motion: 6.0,
            tau_time: 4.0,
            tile: 16,
            noise_variance: NoiseVariance::default(),
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(invalid(format!("delta must be in [0, 1], got {}", self.delta)));
        }
        if !(self.sigma_motion > 0.0 && self.sigma_motion.is_finite()) {
            return Err(invalid(format!("sigma_motion must be > 0, got {}", self.sigma_motion)));
        }
        if !(self.tau_time > 0.0 && self.tau_time.is_finite()) {
            return Err(invalid(format!("tau_time must be > 0, got {}", self.tau_time)));
        }
        Ok(())
    }
}

/// Odd-length run of frames merged onto the centre frame `len / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstWindow<T> {
    frames: Vec<T>,
}

/// Geometry shared by the frames of a window.
pub trait FrameShape {
    fn shape(&self) -> (usize, usize, usize);
    fn cfa(&self) -> Option<crate::bayer::BayerPattern> {
        None
    }
}

impl FrameShape for NanoBurst {
    fn shape(&self) -> (usize, usize, usize) {
        (self.width(), self.height(), 1)
    }
    fn cfa(&self) -> Option<crate::bayer::BayerPattern> {
        self.pattern()
    }
}

impl FrameShape for LinearImage {
    fn shape(&self) -> (usize, usize, usize) {
        (self.width(), self.height(), self.channels())
    }
}

impl<T: FrameShape> BurstWindow<T> {
    pub fn new(frames: Vec<T>) -> Result<Self> {
        if frames.len().is_multiple_of(2) {
            return Err(invalid(format!(
                "burst windows need an odd frame count, got {}",
                frames.len()
            )));
        }
        let (shape, cfa) = (frames[0].shape(), frames[0].cfa());
        if let Some(i) = frames.iter().position(|f| f.shape() != shape || f.cfa() != cfa) {
            return Err(Error::DimensionMismatch(format!(
                "window frame {i} differs from frame 0 in shape or pattern"
            )));
        }
        Ok(BurstWindow { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn center_index(&self) -> usize {
        self.frames.len() / 2
    }

    pub fn center(&self) -> &T {
        &self.frames[self.center_index()]
    }

    pub fn frames(&self) -> &[T] {
        &self.frames
    }
}

/// Normalised adaptive weights for one pixel. `flow_sq[i]` is the squared
/// flow magnitude of frame `i` and `valid[i]` its warp validity. Returns
/// `None` when no frame is valid.
pub fn adaptive_weights(
    flow_sq: &[f64],
    valid: &[bool],
    center: usize,
    sigma_motion: f64,
    tau_time: f64,
) -> Option<Vec<f64>> {
    let log_w: Vec<Option<f64>> = flow_sq
        .iter()
        .zip(valid)
        .enumerate()
        .map(|(i, (&m2, &ok))| {
            ok.then(|| {
                let dt = (i as f64 - center as f64).abs();
                -m2 / (2.0 * sigma_motion * sigma_motion) - dt / tau_time
            })
        })
        .collect();
    // Normalise in log space so that large flows cannot underflow every
    // weight to zero.
    let peak = log_w.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return None;
    }
    let raw: Vec<f64> = log_w.iter().map(|l| l.map_or(0.0, |l| (l - peak).exp())).collect();
    let total: f64 = raw.iter().sum();
    Some(raw.into_iter().map(|v| v / total).collect())
}

/// Warps every frame onto the centre and merges per `cfg`.
///
/// `flows[i]` aligns frame `i` to the centre frame. The fused value is formed
/// as `centre + sum_i w_i (warped_i - centre)`, which equals the weighted
/// mean but is exact when all frames agree. Pixels with no valid frame keep
/// the centre value.
pub fn merge_burst(
    window: &BurstWindow<LinearImage>,
    flows: &[FlowField],
    cfg: &MergeConfig,
) -> Result<LinearImage> {
    cfg.validate()?;
    if flows.len() != window.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} flows for a {}-frame window",
            flows.len(),
            window.len()
        )));
    }
    let c = window.center_index();
    let center = window.center();
    let (w, h, ch) = center.shape();
    let n = w * h;

    let residual = match cfg.mode {
        MergeMode::Wiener => {
            let fused = wiener_merge(
                window,
                flows,
                &WienerParams {
                    tile: cfg.tile,
                    noise_variance: cfg.noise_variance,
                },
            )?;
            let mut r = fused.into_inner();
            for (v, &cv) in r.data_mut().iter_mut().zip(center.data()) {
                *v -= cv;
            }
            r
        }
        MergeMode::NaiveAverage | MergeMode::Adaptive => {
            let warped = window
                .frames()
                .iter()
                .zip(flows)
                .map(|(f, fl)| warp(f, fl))
                .collect::<Result<Vec<_>>>()?;
            let mut r = Image::filled(w, h, ch, 0.0);
            let mut flow_sq = vec![0.0; window.len()];
            let mut valid = vec![false; window.len()];
            for p in 0..n {
                for (i, (fl, (_, mask))) in flows.iter().zip(&warped).enumerate() {
                    flow_sq[i] = fl.magnitude_sq(p);
                    valid[i] = mask[p];
                }
                let weights = match cfg.mode {
                    MergeMode::NaiveAverage => {
                        let k = valid.iter().filter(|&&v| v).count();
                        (k > 0).then(|| {
                            valid
                                .iter()
                                .map(|&v| if v { 1.0 / k as f64 } else { 0.0 })
                                .collect::<Vec<_>>()
                        })
                    }
                    _ => adaptive_weights(&flow_sq, &valid, c, cfg.sigma_motion, cfg.tau_time),
                };
                let Some(weights) = weights else { continue };
                for k in 0..ch {
                    let cv = center.data()[k * n + p];
                    let mut acc = 0.0;
                    for (wt, (img, _)) in weights.iter().zip(&warped) {
                        if *wt > 0.0 {
                            acc += wt * (img.data()[k * n + p] - cv);
                        }
                    }
                    r.data_mut()[k * n + p] = acc;
                }
            }
            r
        }
    };

    let mut out = center.image().clone();
    for (o, r) in out.data_mut().iter_mut().zip(residual.data()) {
        *o = (*o + cfg.delta * r).max(0.0);
    }
    Ok(LinearImage::new_unchecked(out, center.gamma()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::DEFAULT_GAMMA;
    use crate::rng::RngSpec;

    fn lin(img: Image) -> LinearImage {
        LinearImage::new(img, DEFAULT_GAMMA).unwrap()
    }

    fn noise(seed: u64, w: usize, h: usize, ch: usize) -> Image {
        let rng = RngSpec::new(seed);
        Image::from_fn(w, h, ch, |c, y, x| rng.uniform(c as u64, (y * w + x) as u64))
    }

    #[test]
    fn window_rules() {
        let f = || lin(Image::filled(4, 4, 1, 0.1));
        assert!(BurstWindow::new(vec![f(), f()]).is_err());
        let w = BurstWindow::new(vec![f(), f(), f()]).unwrap();
        assert_eq!(w.center_index(), 1);
        assert!(BurstWindow::new(vec![f(), lin(Image::filled(5, 4, 1, 0.1)), f()]).is_err());
    }

    #[test]
    fn identical_frames_are_returned_exactly() {
        let frame = lin(noise(1, 24, 20, 3));
        let window = BurstWindow::new(vec![frame.clone(); 5]).unwrap();
        let flows = vec![FlowField::zeros(24, 20); 5];
        for mode in [MergeMode::NaiveAverage, MergeMode::Adaptive, MergeMode::Wiener] {
            for delta in [0.0, 0.05, 0.5, 1.0] {
                let cfg = MergeConfig {
                    mode,
                    delta,
                    tile: 8,
                    ..MergeConfig::default()
                };
                let out = merge_burst(&window, &flows, &cfg).unwrap();
                assert_eq!(out.data(), frame.data(), "{mode:?} delta={delta}");
            }
        }
    }

    #[test]
    fn delta_limits() {
        let frames: Vec<_> = (0..3).map(|s| lin(noise(s, 8, 8, 1))).collect();
        let window = BurstWindow::new(frames.clone()).unwrap();
        let flows = vec![FlowField::zeros(8, 8); 3];
        let cfg = MergeConfig {
            mode: MergeMode::NaiveAverage,
            delta: 0.0,
            ..MergeConfig::default()
        };
        assert_eq!(merge_burst(&window, &flows, &cfg).unwrap().data(), frames[1].data());
        let cfg = MergeConfig { delta: 1.0, ..cfg };
        let out = merge_burst(&window, &flows, &cfg).unwrap();
        for i in 0..64 {
            let mean = (frames[0].data()[i] + frames[1].data()[i] + frames[2].data()[i]) / 3.0;
            assert!((out.data()[i] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn adaptive_weights_are_normalised() {
        let w = adaptive_weights(&[9.0, 1.0, 0.0, 4.0, 0.0], &[true, true, true, false, true], 2, 2.0, 3.0)
            .unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[3], 0.0);
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!(w[2] > w[1] && w[1] > w[0]);
        assert!(adaptive_weights(&[0.0; 3], &[false; 3], 1, 1.0, 1.0).is_none());
        // Every weight would underflow in linear space.
        let w = adaptive_weights(&[4e4, 9e4, 1e6], &[true, true, false], 1, 0.1, 1.0).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn fast_frame_is_ignored_with_small_sigma() {
        // Three frames; the last one carries a large (but in-bounds) flow.
        let center = lin(Image::filled(32, 32, 1, 0.2));
        let moving = lin(Image::filled(32, 32, 1, 0.9));
        let window = BurstWindow::new(vec![center.clone(), center.clone(), moving]).unwrap();
        let flows = vec![
            FlowField::zeros(32, 32),
            FlowField::zeros(32, 32),
            FlowField::uniform(32, 32, 6.0, 0.0),
        ];
        let cfg = MergeConfig {
            mode: MergeMode::Adaptive,
            delta: 1.0,
            sigma_motion: 0.5,
            tau_time: 1e6,
            ..MergeConfig::default()
        };
        let out = merge_burst(&window, &flows, &cfg).unwrap();
        let v = out.get(0, 16, 16);
        assert!((v - 0.2).abs() < 1e-12, "{v}");
    }

    #[test]
    fn invalid_everywhere_falls_back_to_center() {
        let frames: Vec<_> = (0..3).map(|s| lin(noise(s + 10, 8, 8, 1))).collect();
        let window = BurstWindow::new(frames.clone()).unwrap();
        // Every frame, centre included, samples far out of bounds.
        let flows = vec![FlowField::uniform(8, 8, 100.0, 0.0); 3];
        let cfg = MergeConfig {
            mode: MergeMode::NaiveAverage,
            delta: 1.0,
            ..MergeConfig::default()
        };
        assert_eq!(merge_burst(&window, &flows, &cfg).unwrap().data(), frames[1].data());
    }

    #[test]
    fn config_validation() {
        let bad = [
            MergeConfig { delta: 1.5, ..MergeConfig::default() },
            MergeConfig { sigma_motion: 0.0, ..MergeConfig::default() },
            MergeConfig { tau_time: -1.0, ..MergeConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
