//! Bayer demosaicing: bilinear and Malvar-He-Cutler (5x5 gradient-corrected
//! linear interpolation).

use serde::{Deserialize, Serialize};

use crate::bayer::{BayerPattern, GREEN};
use crate::error::{invalid, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DemosaicMethod {
    #[default]
    Bilinear,
    MalvarHeCutler,
}

pub fn demosaic(img: &Image, pattern: BayerPattern, method: DemosaicMethod) -> Result<Image> {
    if img.channels() != 1 {
        return Err(invalid(format!(
            "demosaic needs single-channel mosaiced data, got {} channels",
            img.channels()
        )));
    }
    match method {
        DemosaicMethod::Bilinear => Ok(bilinear(img, pattern)),
        // The 5x5 kernels rely on mirrored borders keeping CFA parity,
        // which needs at least two rows and columns.
        DemosaicMethod::MalvarHeCutler if img.width() < 2 || img.height() < 2 => {
            Ok(bilinear(img, pattern))
        }
        DemosaicMethod::MalvarHeCutler => Ok(malvar(img, pattern)),
    }
}

/// Native samples are copied; missing channels are the mean of the same
/// channel's samples in the 3x3 neighbourhood (5x5 if the 3x3 has none).
fn bilinear(img: &Image, pattern: BayerPattern) -> Image {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let src = img.plane(0);
    let mut out = Image::filled(w as usize, h as usize, 3, 0.0);
    for y in 0..h {
        for x in 0..w {
            let native = pattern.channel_at(y as usize, x as usize);
            for c in 0..3 {
                let v = if c == native {
                    src[(y * w + x) as usize]
                } else {
                    let mut found = None;
                    for r in [1isize, 2] {
                        let (mut s, mut k) = (0.0, 0u32);
                        for yy in (y - r).max(0)..=(y + r).min(h - 1) {
                            for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                                if pattern.channel_at(yy as usize, xx as usize) == c {
                                    s += src[(yy * w + xx) as usize];
                                    k += 1;
                                }
                            }
                        }
                        if k > 0 {
                            found = Some(s / k as f64);
                            break;
                        }
                    }
                    found.unwrap_or(0.0)
                };
                out.set(c, y as usize, x as usize, v);
            }
        }
    }
    out
}

/// Mirror without repeating the edge sample; preserves CFA parity for n >= 2.
#[inline]
fn reflect(mut i: isize, n: isize) -> usize {
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

type Tap = (isize, isize, f64);

// Weights in eighths, (dy, dx, weight).
const G_AT_RB: &[Tap] = &[
    (0, 0, 4.0),
    (-1, 0, 2.0),
    (1, 0, 2.0),
    (0, -1, 2.0),
    (0, 1, 2.0),
    (-2, 0, -1.0),
    (2, 0, -1.0),
    (0, -2, -1.0),
    (0, 2, -1.0),
];
// Red/blue at a green site whose horizontal neighbours carry that colour.
const RB_AT_G_ROW: &[Tap] = &[
    (0, 0, 5.0),
    (0, -1, 4.0),
    (0, 1, 4.0),
    (0, -2, -1.0),
    (0, 2, -1.0),
    (-1, -1, -1.0),
    (-1, 1, -1.0),
    (1, -1, -1.0),
    (1, 1, -1.0),
    (-2, 0, 0.5),
    (2, 0, 0.5),
];
const RB_AT_G_COL: &[Tap] = &[
    (0, 0, 5.0),
    (-1, 0, 4.0),
    (1, 0, 4.0),
    (-2, 0, -1.0),
    (2, 0, -1.0),
    (-1, -1, -1.0),
    (-1, 1, -1.0),
    (1, -1, -1.0),
    (1, 1, -1.0),
    (0, -2, 0.5),
    (0, 2, 0.5),
];
// Red at blue or blue at red.
const RB_AT_BR: &[Tap] = &[
    (0, 0, 6.0),
    (-1, -1, 2.0),
    (-1, 1, 2.0),
    (1, -1, 2.0),
    (1, 1, 2.0),
    (-2, 0, -1.5),
    (2, 0, -1.5),
    (0, -2, -1.5),
    (0, 2, -1.5),
];

fn malvar(img: &Image, pattern: BayerPattern) -> Image {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let src = img.plane(0);
    let apply = |taps: &[Tap], y: isize, x: isize| -> f64 {
        taps.iter()
            .map(|&(dy, dx, k)| k * src[reflect(y + dy, h) * w as usize + reflect(x + dx, w)])
            .sum::<f64>()
            / 8.0
    };
    let mut out = Image::filled(w as usize, h as usize, 3, 0.0);
    for y in 0..h {
        for x in 0..w {
            let (uy, ux) = (y as usize, x as usize);
            let native = pattern.channel_at(uy, ux);
            let horizontal = pattern.channel_at(uy, ux ^ 1);
            for c in 0..3 {
                let v = if c == native {
                    src[uy * w as usize + ux]
                } else if c == GREEN {
                    apply(G_AT_RB, y, x)
                } else if native == GREEN {
                    if c == horizontal {
                        apply(RB_AT_G_ROW, y, x)
                    } else {
                        apply(RB_AT_G_COL, y, x)
                    }
                } else {
                    apply(RB_AT_BR, y, x)
                };
                out.set(c, uy, ux, v);
            }
        }
    }
    out
}
