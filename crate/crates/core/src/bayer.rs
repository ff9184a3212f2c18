//! Bayer colour filter arrays and mosaicing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// 2x2 CFA tiling, named by the colours of the top row then the bottom row.
/// The tiling is anchored at pixel (0, 0); odd-sized images truncate the
/// last tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayerPattern {
    Rggb,
    Grbg,
    Bggr,
    Gbrg,
}

pub const RED: usize = 0;
pub const GREEN: usize = 1;
pub const BLUE: usize = 2;

impl BayerPattern {
    pub const ALL: [BayerPattern; 4] = [
        BayerPattern::Rggb,
        BayerPattern::Grbg,
        BayerPattern::Bggr,
        BayerPattern::Gbrg,
    ];

    fn tile(self) -> [[usize; 2]; 2] {
        match self {
            BayerPattern::Rggb => [[RED, GREEN], [GREEN, BLUE]],
            BayerPattern::Grbg => [[GREEN, RED], [BLUE, GREEN]],
            BayerPattern::Bggr => [[BLUE, GREEN], [GREEN, RED]],
            BayerPattern::Gbrg => [[GREEN, BLUE], [RED, GREEN]],
        }
    }

    /// Colour channel (0 = R, 1 = G, 2 = B) sampled at `(y, x)`.
    #[inline]
    pub fn channel_at(self, y: usize, x: usize) -> usize {
        self.tile()[y & 1][x & 1]
    }

    /// Binary site mask for one channel over a `width` x `height` grid.
    pub fn mask(self, channel: usize, width: usize, height: usize) -> Vec<bool> {
        let mut m = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                m.push(self.channel_at(y, x) == channel);
            }
        }
        m
    }

    /// Stable numeric code used by the photon-cube header and the C ABI
    /// (0 is reserved for "no pattern").
    pub fn code(self) -> u32 {
        match self {
            BayerPattern::Rggb => 1,
            BayerPattern::Grbg => 2,
            BayerPattern::Bggr => 3,
            BayerPattern::Gbrg => 4,
        }
    }

    pub fn from_code(code: u32) -> Result<Option<BayerPattern>> {
        Ok(match code {
            0 => None,
            1 => Some(BayerPattern::Rggb),
            2 => Some(BayerPattern::Grbg),
            3 => Some(BayerPattern::Bggr),
            4 => Some(BayerPattern::Gbrg),
            other => return Err(Error::UnknownPattern(other.to_string())),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            BayerPattern::Rggb => "RGGB",
            BayerPattern::Grbg => "GRBG",
            BayerPattern::Bggr => "BGGR",
            BayerPattern::Gbrg => "GBRG",
        }
    }
}

impl fmt::Display for BayerPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BayerPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BayerPattern::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownPattern(s.to_string()))
    }
}

/// Selects, per pixel, the sample of the channel the pattern assigns there.
/// Works on any interleaving-free planar buffer of `3 * width * height` items.
pub fn mosaic_planar<T: Copy>(
    width: usize,
    height: usize,
    planes: &[T],
    pattern: BayerPattern,
) -> Vec<T> {
    let n = width * height;
    debug_assert_eq!(planes.len(), 3 * n);
    let mut out = Vec::with_capacity(n);
    for y in 0..height {
        for x in 0..width {
            let c = pattern.channel_at(y, x);
            out.push(planes[c * n + y * width + x]);
        }
    }
    out
}

/// Mosaics a three-channel image into one channel.
pub fn mosaic(img: &Image, pattern: BayerPattern) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "mosaic needs a 3-channel image, got {} channel(s)",
            img.channels()
        )));
    }
    let data = mosaic_planar(img.width(), img.height(), img.data(), pattern);
    Image::new(img.width(), img.height(), 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_partition_every_grid() {
        for p in BayerPattern::ALL {
            for (w, h) in [(4, 4), (5, 3), (1, 1), (7, 2)] {
                let masks: Vec<_> = (0..3).map(|c| p.mask(c, w, h)).collect();
                for i in 0..w * h {
                    let hits = masks.iter().filter(|m| m[i]).count();
                    assert_eq!(hits, 1, "{p} {w}x{h} pixel {i}");
                }
            }
        }
    }

    #[test]
    fn each_tile_has_one_red_two_green_one_blue() {
        for p in BayerPattern::ALL {
            let mut counts = [0; 3];
            for y in 0..2 {
                for x in 0..2 {
                    counts[p.channel_at(y, x)] += 1;
                }
            }
            assert_eq!(counts, [1, 2, 1], "{p}");
        }
    }

    #[test]
    fn codes_and_names_roundtrip() {
        for p in BayerPattern::ALL {
            assert_eq!(BayerPattern::from_code(p.code()).unwrap(), Some(p));
            assert_eq!(p.name().parse::<BayerPattern>().unwrap(), p);
        }
        assert_eq!(BayerPattern::from_code(0).unwrap(), None);
        assert!(BayerPattern::from_code(9).is_err());
        assert!("RGBG".parse::<BayerPattern>().is_err());
    }

    #[test]
    fn gray_mosaics_to_constant() {
        let img = Image::filled(6, 5, 3, 0.3);
        let m = mosaic(&img, BayerPattern::Gbrg).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn pure_red_under_rggb() {
        let img = Image::from_fn(4, 4, 3, |c, _, _| if c == RED { 0.8 } else { 0.0 });
        let m = mosaic(&img, BayerPattern::Rggb).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expect = if y % 2 == 0 && x % 2 == 0 { 0.8 } else { 0.0 };
                assert_eq!(m.get(0, y, x), expect);
            }
        }
    }

    #[test]
    fn random_4x4_matches_hand_selection() {
        // Hand-written site table for GRBG: G R / B G.
        let img = Image::from_fn(4, 4, 3, |c, y, x| ((c * 31 + y * 7 + x * 3) % 17) as f64 / 17.0);
        let m = mosaic(&img, BayerPattern::Grbg).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let c = match (y % 2, x % 2) {
                    (0, 0) | (1, 1) => 1,
                    (0, 1) => 0,
                    _ => 2,
                };
                assert_eq!(m.get(0, y, x), img.get(c, y, x), "({y},{x})");
            }
        }
    }

    #[test]
    fn monochrome_is_rejected() {
        assert!(mosaic(&Image::filled(2, 2, 1, 0.1), BayerPattern::Rggb).is_err());
    }
}
