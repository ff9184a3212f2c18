//! Single-photon image formation.
//!
//! Ground truth sRGB frames are linearised with a power law, scaled into a
//! Poisson photon rate, and observed through a binary detector that fires
//! with probability `1 - exp(-rate)` per exposure. Colour sensors see the
//! scene through a Bayer CFA; a nano-burst averages `n` consecutive binary
//! frames into an `n + 1` level image.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayer::{self, BayerPattern};
use crate::cube::{CubeHeader, PhotonCube};
use crate::error::{invalid, Error, Result};
use crate::image::{Image, LinearImage, SrgbImage, DEFAULT_GAMMA};
use crate::rng::{bits_to_unit, site_bits, RngSpec};

/// Binary frames averaged into one nano-burst (3-bit output).
pub const NANO_BURST_FRAMES: u32 = 7;

/// Element-wise `srgb^gamma`.
pub fn gamma_linearize(img: &SrgbImage, gamma: f64) -> Result<LinearImage> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    img.check_finite()?;
    Ok(LinearImage::new_unchecked(img.map(|v| v.powf(gamma)), gamma))
}

/// Poisson rate per pixel-channel, in photons per binary exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonRateMap {
    rates: Image,
    alpha: f64,
    dark_rate: f64,
}

impl PhotonRateMap {
    pub fn rates(&self) -> &Image {
        &self.rates
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dark_rate(&self) -> f64 {
        self.dark_rate
    }

    /// Wraps an explicit rate image. Rates must be finite and non-negative.
    pub fn from_rates(rates: Image, alpha: f64, dark_rate: f64) -> Result<Self> {
        let lin = LinearImage::new(rates, DEFAULT_GAMMA)?;
        Ok(PhotonRateMap {
            rates: lin.into_inner(),
            alpha,
            dark_rate,
        })
    }

    pub fn constant(width: usize, height: usize, channels: usize, rate: f64) -> Result<Self> {
        PhotonRateMap::from_rates(Image::filled(width, height, channels, rate), 1.0, 0.0)
    }
}

/// `rate = alpha * lin + dark_rate`.
pub fn make_rate_map(lin: &LinearImage, alpha: f64, dark_rate: f64) -> Result<PhotonRateMap> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    if !(dark_rate >= 0.0 && dark_rate.is_finite()) {
        return Err(invalid(format!("dark_rate must be >= 0, got {dark_rate}")));
    }
    Ok(PhotonRateMap {
        rates: lin.map(|v| alpha * v + dark_rate),
        alpha,
        dark_rate,
    })
}

/// Mean photon rate over all pixel-channels.
pub fn expected_ppp(rate: &PhotonRateMap) -> Result<f64> {
    if rate.rates.data().is_empty() {
        return Err(invalid("expected PPP of an empty image"));
    }
    Ok(rate.rates.mean())
}

#[inline]
pub fn detection_probability(rate: f64) -> f64 {
    -(-rate).exp_m1()
}

/// One binary exposure. `channels` is 1 for monochrome or mosaiced data and
/// 3 for an un-mosaiced colour sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryFrame {
    width: usize,
    height: usize,
    channels: usize,
    pattern: Option<BayerPattern>,
    bits: Vec<u8>,
}

impl BinaryFrame {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pattern: Option<BayerPattern>,
        bits: Vec<u8>,
    ) -> Result<Self> {
        if bits.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} frame needs {} bits, got {}",
                width * height * channels,
                bits.len()
            )));
        }
        if let Some(i) = bits.iter().position(|&b| b > 1) {
            return Err(invalid(format!("bit {i} has value {}", bits[i])));
        }
        Ok(BinaryFrame {
            width,
            height,
            channels,
            pattern,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pattern(&self) -> Option<BayerPattern> {
        self.pattern
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Mosaics an un-mosaiced colour sample.
    pub fn mosaic(&self, pattern: BayerPattern) -> Result<BinaryFrame> {
        if self.channels != 3 {
            return Err(invalid(format!(
                "mosaic needs a 3-channel frame, got {} channel(s)",
                self.channels
            )));
        }
        Ok(BinaryFrame {
            width: self.width,
            height: self.height,
            channels: 1,
            pattern: Some(pattern),
            bits: bayer::mosaic_planar(self.width, self.height, &self.bits, pattern),
        })
    }
}

/// Draws every pixel-channel independently: `Bern(1 - exp(-rate))`.
///
/// The draw for `(frame_index, pixel, channel)` depends only on the seed
/// and that triple.
pub fn sample_binary_frame(rate: &PhotonRateMap, rng: &RngSpec, frame_index: u64) -> BinaryFrame {
    let img = &rate.rates;
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let n = w * h;
    let key = rng.frame_key(frame_index);
    let mut bits = vec![0u8; n * ch];
    if n > 0 {
        bits.par_chunks_mut(n)
            .enumerate()
            .for_each(|(c, plane)| {
                let src = img.plane(c);
                for (i, (b, &lambda)) in plane.iter_mut().zip(src).enumerate() {
                    let site = (i * ch + c) as u64;
                    *b = draw(key, site, lambda);
                }
            });
    }
    BinaryFrame {
        width: w,
        height: h,
        channels: ch,
        pattern: None,
        bits,
    }
}

/// Samples only the channel each CFA site sees; bit-identical to
/// `sample_binary_frame(..).mosaic(pattern)` but a third of the work.
pub fn sample_mosaiced_frame(
    rate: &PhotonRateMap,
    pattern: Option<BayerPattern>,
    rng: &RngSpec,
    frame_index: u64,
) -> Result<BinaryFrame> {
    let img = &rate.rates;
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let pattern = match (ch, pattern) {
        (1, _) => None,
        (3, Some(p)) => Some(p),
        _ => return Err(invalid("colour rate maps need a Bayer pattern")),
    };
    let key = rng.frame_key(frame_index);
    let mut bits = vec![0u8; w * h];
    if w > 0 {
        bits.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, b) in row.iter_mut().enumerate() {
                let c = pattern.map_or(0, |p| p.channel_at(y, x));
                let i = y * w + x;
                *b = draw(key, (i * ch + c) as u64, img.get(c, y, x));
            }
        });
    }
    Ok(BinaryFrame {
        width: w,
        height: h,
        channels: 1,
        pattern,
        bits,
    })
}

#[inline]
fn draw(frame_key: u64, site: u64, lambda: f64) -> u8 {
    (bits_to_unit(site_bits(frame_key, site)) < detection_probability(lambda)) as u8
}

/// Average of `n` binary frames, stored as integer detection counts so the
/// `k / n` lattice holds by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NanoBurst {
    width: usize,
    height: usize,
    n_frames: u32,
    pattern: Option<BayerPattern>,
    counts: Vec<u16>,
}

impl NanoBurst {
    pub fn from_counts(
        width: usize,
        height: usize,
        n_frames: u32,
        pattern: Option<BayerPattern>,
        counts: Vec<u16>,
    ) -> Result<Self> {
        if n_frames == 0 || n_frames > u16::MAX as u32 {
            return Err(invalid(format!("n_frames must be in 1..=65535, got {n_frames}")));
        }
        if counts.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} nano-burst needs {} counts, got {}",
                width * height,
                counts.len()
            )));
        }
        if let Some(i) = counts.iter().position(|&k| k as u32 > n_frames) {
            return Err(invalid(format!(
                "count {} at pixel {i} exceeds n_frames {n_frames}",
                counts[i]
            )));
        }
        Ok(NanoBurst {
            width,
            height,
            n_frames,
            pattern,
            counts,
        })
    }

    /// Sums single-channel binary frames sharing one geometry and pattern.
    pub fn from_frames(frames: &[BinaryFrame]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| invalid("a nano-burst needs at least one frame"))?;
        if first.channels != 1 {
            return Err(invalid("nano-bursts aggregate single-channel frames"));
        }
        let mut counts = vec![0u16; first.width * first.height];
        for f in frames {
            if f.width != first.width
                || f.height != first.height
                || f.channels != 1
                || f.pattern != first.pattern
            {
                return Err(Error::DimensionMismatch(
                    "frames of one nano-burst differ in geometry or pattern".into(),
                ));
            }
            for (k, &b) in counts.iter_mut().zip(&f.bits) {
                *k += b as u16;
            }
        }
        NanoBurst::from_counts(
            first.width,
            first.height,
            frames.len() as u32,
            first.pattern,
            counts,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_frames(&self) -> u32 {
        self.n_frames
    }

    pub fn pattern(&self) -> Option<BayerPattern> {
        self.pattern
    }

    pub fn counts(&self) -> &[u16] {
        &self.counts
    }

    /// Number of distinct output levels, `n + 1`.
    pub fn levels(&self) -> u32 {
        self.n_frames + 1
    }

    pub fn bit_depth(&self) -> f64 {
        (self.levels() as f64).log2()
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.n_frames as f64;
        self.counts.iter().map(|&k| k as f64 / n).collect()
    }

    pub fn to_image(&self) -> Image {
        Image::new(self.width, self.height, 1, self.values()).expect("consistent shape")
    }

    /// PNG level step: count `k` is stored as `k * floor(65535 / n)`.
    pub fn png_step(n_frames: u32) -> u32 {
        65535 / n_frames
    }

    pub fn save_png(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let step = Self::png_step(self.n_frames);
        let raw: Vec<u16> = self.counts.iter().map(|&k| (k as u32 * step) as u16).collect();
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer size");
        buf.save(path.as_ref())?;
        Ok(())
    }

    pub fn load_png(
        path: impl AsRef<std::path::Path>,
        n_frames: u32,
        pattern: Option<BayerPattern>,
    ) -> Result<Self> {
        if n_frames == 0 {
            return Err(invalid("n_frames must be >= 1"));
        }
        let img = image::open(path.as_ref())?.into_luma16();
        let step = Self::png_step(n_frames);
        let mut counts = Vec::with_capacity(img.len());
        for (i, p) in img.pixels().enumerate() {
            let v = p.0[0] as u32;
            if !v.is_multiple_of(step) || v / step > n_frames {
                return Err(invalid(format!(
                    "{}: pixel {i} value {v} is not on the {n_frames}-frame lattice",
                    path.as_ref().display()
                )));
            }
            counts.push((v / step) as u16);
        }
        NanoBurst::from_counts(
            img.width() as usize,
            img.height() as usize,
            n_frames,
            pattern,
            counts,
        )
    }
}

/// Averages `n` mosaiced binary samples drawn at frame indices
/// `first_frame .. first_frame + n`.
pub fn make_nano_burst(
    rate: &PhotonRateMap,
    n: u32,
    pattern: Option<BayerPattern>,
    rng: &RngSpec,
    first_frame: u64,
) -> Result<NanoBurst> {
    if n == 0 {
        return Err(invalid("nano-burst size must be >= 1"));
    }
    let frames = (0..n as u64)
        .map(|i| sample_mosaiced_frame(rate, pattern, rng, first_frame + i))
        .collect::<Result<Vec<_>>>()?;
    NanoBurst::from_frames(&frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// Seven binary samples per ground-truth frame; one nano-burst per frame.
    BlurFree7,
    /// One binary sample per ground-truth frame; each run of seven
    /// consecutive frames forms one (motion-blurred) nano-burst.
    Realistic1,
}

impl Protocol {
    /// Index of the ground-truth frame a nano-burst is scored against.
    pub fn reference_frame(self, burst: usize) -> usize {
        let n = NANO_BURST_FRAMES as usize;
        match self {
            Protocol::BlurFree7 => burst,
            Protocol::Realistic1 => burst * n + n / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub alpha: f64,
    pub dark_rate: f64,
    pub gamma: f64,
    pub fps: f64,
    pub pattern: Option<BayerPattern>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            alpha: 1.0,
            dark_rate: 0.0,
            gamma: DEFAULT_GAMMA,
            fps: 100_000.0,
            pattern: Some(BayerPattern::Rggb),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedSequence {
    pub bursts: Vec<NanoBurst>,
    pub cube: PhotonCube,
    /// Achieved mean photon rate over all ground-truth frames.
    pub expected_ppp: f64,
}

/// Simulates a capture of `frames` under `protocol`.
///
/// Binary frame `j` of the returned cube uses frame index `j` in the RNG
/// counter, and nano-burst `b` always aggregates cube frames `7b .. 7b + 7`.
pub fn simulate_burst_sequence(
    frames: &[SrgbImage],
    protocol: Protocol,
    params: &SimParams,
    rng: &RngSpec,
) -> Result<SimulatedSequence> {
    let n = NANO_BURST_FRAMES as usize;
    let first = frames
        .first()
        .ok_or_else(|| invalid("cannot simulate an empty sequence"))?;
    let (w, h, ch) = (first.width(), first.height(), first.channels());
    if let Some(i) = frames
        .iter()
        .position(|f| f.width() != w || f.height() != h || f.channels() != ch)
    {
        return Err(Error::DimensionMismatch(format!(
            "frame {i} differs in shape from frame 0"
        )));
    }
    if protocol == Protocol::Realistic1 && !frames.len().is_multiple_of(n) {
        return Err(invalid(format!(
            "Realistic1 needs a multiple of {n} frames, got {}",
            frames.len()
        )));
    }
    let pattern = if ch == 3 {
        Some(params.pattern.ok_or_else(|| {
            invalid("colour input needs a Bayer pattern (monochrome sensors take 1-channel input)")
        })?)
    } else {
        None
    };

    let rates = frames
        .par_iter()
        .map(|f| make_rate_map(&gamma_linearize(f, params.gamma)?, params.alpha, params.dark_rate))
        .collect::<Result<Vec<_>>>()?;
    let ppp = rates
        .iter()
        .map(expected_ppp)
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum::<f64>()
        / rates.len() as f64;

    let binary_count = match protocol {
        Protocol::BlurFree7 => frames.len() * n,
        Protocol::Realistic1 => frames.len(),
    };
    let binary = (0..binary_count)
        .into_par_iter()
        .map(|j| {
            let gt = match protocol {
                Protocol::BlurFree7 => j / n,
                Protocol::Realistic1 => j,
            };
            sample_mosaiced_frame(&rates[gt], pattern, rng, j as u64)
        })
        .collect::<Result<Vec<_>>>()?;

    let bursts = binary
        .chunks(n)
        .map(NanoBurst::from_frames)
        .collect::<Result<Vec<_>>>()?;

    let header = CubeHeader {
        width: w as u32,
        height: h as u32,
        frame_count: binary.len() as u32,
        fps: params.fps,
        channels: ch as u32,
        pattern,
        alpha: params.alpha,
        seed: rng.seed,
    };
    Ok(SimulatedSequence {
        bursts,
        cube: PhotonCube::new(header, binary)?,
        expected_ppp: ppp,
    })
}
