//! Overlapping-tile frequency-domain merge.
//!
//! Each frame is warped onto the centre, cut into tiles of size `tile`
//! with stride `tile / 2`, windowed with a raised cosine and transformed
//! with an orthonormal 2-D DFT. Per frequency the difference `D` between an
//! alternate frame and the centre is kept with weight `|D|^2 / (|D|^2 + s2)`,
//! where `s2` is the coefficient-domain noise variance of `D`:
//!
//! * `s2 = 0` keeps every alternate frame untouched (plain average);
//! * `s2 -> inf` discards them (centre frame).
//!
//! Tiles are overlap-added and normalised by the accumulated window weight.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{Image, LinearImage};

use super::flow::{warp, FlowField};
use super::invert::inverted_variance;
use super::merge::BurstWindow;

/// Per-pixel noise variance of one frame's linear intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseVariance {
    Fixed(f64),
    Model(NoiseModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum NoiseModel {
    /// Variance predicted from each tile's mean intensity by the Bernoulli
    /// response, for nano-bursts of `n_frames` exposures at flux `alpha`.
    Bernoulli { n_frames: u32, alpha: f64 },
}

impl Default for NoiseVariance {
    fn default() -> Self {
        NoiseVariance::Model(NoiseModel::Bernoulli {
            n_frames: crate::sim::NANO_BURST_FRAMES,
            alpha: 1.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WienerParams {
    pub tile: usize,
    pub noise_variance: NoiseVariance,
}

fn window_1d(n: usize) -> Vec<f64> {
    // Shifted periodic Hann: strictly positive, and two copies offset by
    // n/2 sum to one.
    (0..n)
        .map(|i| {
            let t = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
            t.sin().powi(2)
        })
        .collect()
}

struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, data: &mut [Complex<f64>], inverse: bool) {
        let n = self.n;
        let fft = if inverse { &self.inv } else { &self.fwd };
        for row in data.chunks_mut(n) {
            fft.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for x in 0..n {
            for y in 0..n {
                col[y] = data[y * n + x];
            }
            fft.process(&mut col);
            for y in 0..n {
                data[y * n + x] = col[y];
            }
        }
        let scale = 1.0 / n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Frequency-domain merge of a window whose frames are aligned by `flows`.
/// Warp-invalid pixels of alternate frames are replaced by the centre value.
pub fn wiener_merge(
    window: &BurstWindow<LinearImage>,
    flows: &[FlowField],
    params: &WienerParams,
) -> Result<LinearImage> {
    let tile = params.tile;
    if tile < 2 || !tile.is_power_of_two() {
        return Err(invalid(format!("tile must be a power of two >= 2, got {tile}")));
    }
    let center = window.center();
    let (w, h, ch) = (center.width(), center.height(), center.channels());
    if tile > w || tile > h {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            min: tile,
        });
    }
    if flows.len() != window.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} flows for a {}-frame window",
            flows.len(),
            window.len()
        )));
    }
    if let NoiseVariance::Fixed(v) = params.noise_variance {
        if !(v >= 0.0) {
            return Err(invalid(format!("noise_variance must be >= 0, got {v}")));
        }
    }
    let c = window.center_index();
    let n = w * h;

    // Differences to the centre, with invalid samples zeroed.
    let diffs: Vec<Image> = window
        .frames()
        .iter()
        .zip(flows)
        .enumerate()
        .filter(|(i, _)| *i != c)
        .map(|(_, (f, fl))| {
            let (mut img, mask) = warp(f, fl)?;
            for k in 0..ch {
                let cp = center.plane(k);
                for (p, v) in img.plane_mut(k).iter_mut().enumerate() {
                    *v = if mask[p] { *v - cp[p] } else { 0.0 };
                }
            }
            Ok(img)
        })
        .collect::<Result<_>>()?;

    let win1 = window_1d(tile);
    let win: Vec<f64> = (0..tile * tile).map(|i| win1[i / tile] * win1[i % tile]).collect();
    let mean_w2 = win.iter().map(|v| v * v).sum::<f64>() / (tile * tile) as f64;
    let fft = Fft2::new(tile);
    let half = tile as isize / 2;
    let frames = window.len() as f64;

    let mut acc = vec![0.0; ch * n];
    let mut weight = vec![0.0; n];
    let mut buf = vec![Complex::new(0.0, 0.0); tile * tile];
    let mut sum = vec![Complex::new(0.0, 0.0); tile * tile];
    // Tile origins start half a tile before the image so every pixel is
    // covered by two windows per axis.
    let origins = |len: usize| {
        let mut v = Vec::new();
        let mut o = -half;
        while o < len as isize {
            v.push(o);
            o += half;
        }
        v
    };
    let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;

    for oy in origins(h) {
        for ox in origins(w) {
            for k in 0..ch {
                let s2 = match params.noise_variance {
                    NoiseVariance::Fixed(v) => 2.0 * v * mean_w2,
                    NoiseVariance::Model(NoiseModel::Bernoulli { n_frames, alpha }) => {
                        let cp = center.plane(k);
                        let mut m = 0.0;
                        for ty in 0..tile {
                            for tx in 0..tile {
                                m += cp[clamp(oy + ty as isize, h) * w + clamp(ox + tx as isize, w)];
                            }
                        }
                        m /= (tile * tile) as f64;
                        2.0 * inverted_variance(m, alpha, n_frames) * mean_w2
                    }
                };
                sum.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
                for d in &diffs {
                    let dp = d.plane(k);
                    for ty in 0..tile {
                        for tx in 0..tile {
                            let p = clamp(oy + ty as isize, h) * w + clamp(ox + tx as isize, w);
                            buf[ty * tile + tx] = Complex::new(win[ty * tile + tx] * dp[p], 0.0);
                        }
                    }
                    fft.run(&mut buf, false);
                    for (s, &dv) in sum.iter_mut().zip(&buf) {
                        let m2 = dv.norm_sqr();
                        if m2 > 0.0 {
                            *s += dv * (m2 / (m2 + s2));
                        }
                    }
                }
                fft.run(&mut sum, true);
                for ty in 0..tile {
                    let y = oy + ty as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for tx in 0..tile {
                        let x = ox + tx as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        let p = y as usize * w + x as usize;
                        acc[k * n + p] += sum[ty * tile + tx].re / frames;
                        if k == 0 {
                            weight[p] += win[ty * tile + tx];
                        }
                    }
                }
            }
        }
    }

    let mut out = center.image().clone();
    for k in 0..ch {
        for p in 0..n {
            out.data_mut()[k * n + p] += acc[k * n + p] / weight[p];
        }
    }
    Ok(LinearImage::new_unchecked(out.map(|v| v.max(0.0)), center.gamma()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::DEFAULT_GAMMA;
    use crate::rng::RngSpec;

    fn frames(count: u64) -> Vec<LinearImage> {
        (0..count)
            .map(|s| {
                let rng = RngSpec::new(s);
                let img = Image::from_fn(32, 24, 1, |_, y, x| 0.2 + 0.6 * rng.uniform(0, (y * 32 + x) as u64));
                LinearImage::new(img, DEFAULT_GAMMA).unwrap()
            })
            .collect()
    }

    fn rel_err(a: &Image, b: &Image) -> f64 {
        let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        diff / b.data().iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn window_partitions_unity() {
        let w = window_1d(16);
        for i in 0..8 {
            assert!((w[i] + w[i + 8] - 1.0).abs() < 1e-15);
        }
        assert!(w.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_noise_is_plain_average() {
        let fr = frames(5);
        let window = BurstWindow::new(fr.clone()).unwrap();
        let flows = vec![FlowField::zeros(32, 24); 5];
        let out = wiener_merge(&window, &flows, &WienerParams { tile: 8, noise_variance: NoiseVariance::Fixed(0.0) }).unwrap();
        let mean = Image::from_fn(32, 24, 1, |_, y, x| fr.iter().map(|f| f.get(0, y, x)).sum::<f64>() / 5.0);
        assert!(rel_err(&out, &mean) < 1e-12);
    }

    #[test]
    fn huge_noise_is_center_frame() {
        let fr = frames(5);
        let window = BurstWindow::new(fr.clone()).unwrap();
        let flows = vec![FlowField::zeros(32, 24); 5];
        let out = wiener_merge(&window, &flows, &WienerParams { tile: 8, noise_variance: NoiseVariance::Fixed(1e6) }).unwrap();
        assert!(rel_err(&out, &fr[2]) < 1e-6);
    }

    #[test]
    fn single_frame_is_identity() {
        let fr = frames(1);
        let window = BurstWindow::new(fr.clone()).unwrap();
        let out = wiener_merge(&window, &[FlowField::zeros(32, 24)], &WienerParams { tile: 16, noise_variance: NoiseVariance::default() }).unwrap();
        assert_eq!(out.data(), fr[0].data());
    }

    #[test]
    fn tile_checks() {
        let window = BurstWindow::new(frames(1)).unwrap();
        let flows = [FlowField::zeros(32, 24)];
        for tile in [12, 32, 0] {
            assert!(wiener_merge(&window, &flows, &WienerParams { tile, noise_variance: NoiseVariance::Fixed(0.0) }).is_err());
        }
    }

    #[test]
    fn noise_variance_serde_forms() {
        let fixed: NoiseVariance = serde_json::from_str("0.25").unwrap();
        assert_eq!(fixed, NoiseVariance::Fixed(0.25));
        let model: NoiseVariance =
            serde_json::from_str(r#"{"model":"bernoulli","n_frames":7,"alpha":2.0}"#).unwrap();
        assert_eq!(model, NoiseVariance::Model(NoiseModel::Bernoulli { n_frames: 7, alpha: 2.0 }));
    }
}
