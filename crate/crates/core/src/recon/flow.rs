//! Coarse-to-fine block matching and inverse warping.
//!
//! A [`FlowField`] lives on the reference grid. At reference pixel `p` the
//! matching source content sits at `p - flow(p)`; equivalently, `flow`
//! carries source coordinates onto the reference. A source that is the
//! reference shifted right by 3 pixels therefore has flow `(-3, 0)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::Image;

use super::invert::inverted_variance;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField::uniform(width, height, 0.0, 0.0)
    }

    pub fn uniform(width: usize, height: usize, dx: f64, dy: f64) -> Self {
        let n = width * height;
        FlowField {
            width,
            height,
            dx: vec![dx; n],
            dy: vec![dy; n],
            valid: vec![true; n],
        }
    }

    pub fn new(
        width: usize,
        height: usize,
        dx: Vec<f64>,
        dy: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if dx.len() != n || dy.len() != n || valid.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "flow {width}x{height} needs {n} entries per component"
            )));
        }
        if dx.iter().chain(&dy).any(|v| !v.is_finite()) {
            return Err(invalid("flow displacements must be finite"));
        }
        Ok(FlowField {
            width,
            height,
            dx,
            dy,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn magnitude_sq(&self, i: usize) -> f64 {
        self.dx[i] * self.dx[i] + self.dy[i] * self.dy[i]
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            return 0.0;
        }
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }
}

/// Which matched patches are trusted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    /// Every patch is valid.
    #[default]
    All,
    /// Best mean absolute difference per pixel must not exceed the bound.
    MaxSadPerPixel(f64),
    /// Bound is `factor` times the expected mean absolute difference of two
    /// independent inverted nano-bursts at the reference patch's intensity.
    Bernoulli { n_frames: u32, alpha: f64, factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockMatchParams {
    pub patch: usize,
    pub radius: usize,
    pub levels: usize,
    /// Set by the caller; the pipeline derives it from the noise model.
    #[serde(skip)]
    pub validity: Validity,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        BlockMatchParams {
            patch: 16,
            radius: 8,
            levels: 3,
            validity: Validity::All,
        }
    }
}

fn downsample(img: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (w2, h2) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(w2 * h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let i = 2 * y * w + 2 * x;
            out.push(0.25 * (img[i] + img[i + 1] + img[i + w] + img[i + w + 1]));
        }
    }
    (out, w2, h2)
}

struct Level {
    src: Vec<f64>,
    reference: Vec<f64>,
    w: usize,
    h: usize,
}

/// Integer displacement of one reference tile, `src(p + d) ~ ref(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TileMatch {
    dx: isize,
    dy: isize,
    sad: f64,
}

struct TileGrid {
    patch: usize,
    nx: usize,
    ny: usize,
}

impl TileGrid {
    fn new(w: usize, h: usize, patch: usize) -> Self {
        TileGrid {
            patch,
            nx: w.div_ceil(patch),
            ny: h.div_ceil(patch),
        }
    }

    fn bounds(&self, tx: usize, ty: usize, w: usize, h: usize) -> (usize, usize, usize, usize) {
        let x0 = tx * self.patch;
        let y0 = ty * self.patch;
        (x0, y0, (x0 + self.patch).min(w), (y0 + self.patch).min(h))
    }
}

fn sad(level: &Level, rect: (usize, usize, usize, usize), dx: isize, dy: isize, bound: f64) -> f64 {
    let (x0, y0, x1, y1) = rect;
    let w = level.w;
    let mut s = 0.0;
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let r = &level.reference[y * w + x0..y * w + x1];
        let src_start = sy * w + (x0 as isize + dx) as usize;
        let c = &level.src[src_start..src_start + (x1 - x0)];
        s += r.iter().zip(c).map(|(a, b)| (a - b).abs()).sum::<f64>();
        if s > bound {
            break;
        }
    }
    s
}

/// Ordering for candidate selection: lowest SAD, then smallest squared
/// magnitude, then lexicographic `(dy, dx)`.
fn better(a: &TileMatch, b: &TileMatch) -> bool {
    let ka = (a.dx * a.dx + a.dy * a.dy, a.dy, a.dx);
    let kb = (b.dx * b.dx + b.dy * b.dy, b.dy, b.dx);
    a.sad < b.sad || (a.sad == b.sad && ka < kb)
}

fn search_tile(
    level: &Level,
    rect: (usize, usize, usize, usize),
    centres: &[(isize, isize)],
    radius: isize,
) -> TileMatch {
    let (x0, y0, x1, y1) = rect;
    let (w, h) = (level.w as isize, level.h as isize);
    let (x0, y0, x1, y1) = (x0 as isize, y0 as isize, x1 as isize, y1 as isize);
    let mut best: Option<TileMatch> = None;
    for &(cx, cy) in centres {
        for dy in cy - radius..=cy + radius {
            if y0 + dy < 0 || y1 + dy > h {
                continue;
            }
            for dx in cx - radius..=cx + radius {
                if x0 + dx < 0 || x1 + dx > w {
                    continue;
                }
                let bound = best.map_or(f64::INFINITY, |b| b.sad);
                let cand = TileMatch {
                    dx,
                    dy,
                    sad: sad(level, (x0 as usize, y0 as usize, x1 as usize, y1 as usize), dx, dy, bound),
                };
                if best.is_none_or(|b| better(&cand, &b)) {
                    best = Some(cand);
                }
            }
        }
    }
    // The zero displacement is always in bounds, so some candidate exists.
    best.expect("zero displacement is always a candidate")
}

/// Estimates the per-patch flow that aligns `src` onto `reference`.
///
/// Both inputs are reduced to luminance. Matching runs on a 2x mean-pooled
/// pyramid from coarsest to finest; at each level every tile searches
/// `radius` pixels around the upsampled coarse estimate and around zero.
pub fn block_match_flow(src: &Image, reference: &Image, params: &BlockMatchParams) -> Result<FlowField> {
    src.check_same_shape(reference)?;
    if params.patch == 0 || params.levels == 0 {
        return Err(invalid("patch and levels must be positive"));
    }
    let (w, h) = (src.width(), src.height());
    if w < params.patch || h < params.patch {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            min: params.patch,
        });
    }

    let mut levels = vec![Level {
        src: src.luminance().into_data(),
        reference: reference.luminance().into_data(),
        w,
        h,
    }];
    while levels.len() < params.levels {
        let last = levels.last().unwrap();
        if last.w / 2 < params.patch || last.h / 2 < params.patch {
            break;
        }
        let (s, w2, h2) = downsample(&last.src, last.w, last.h);
        let (r, _, _) = downsample(&last.reference, last.w, last.h);
        levels.push(Level {
            src: s,
            reference: r,
            w: w2,
            h: h2,
        });
    }

    let radius = params.radius as isize;
    let mut coarse: Option<(TileGrid, Vec<TileMatch>, usize, usize)> = None;
    for level in levels.iter().rev() {
        let grid = TileGrid::new(level.w, level.h, params.patch);
        let matches: Vec<TileMatch> = (0..grid.nx * grid.ny)
            .into_par_iter()
            .map(|t| {
                let (tx, ty) = (t % grid.nx, t / grid.nx);
                let rect = grid.bounds(tx, ty, level.w, level.h);
                let mut centres = vec![(0isize, 0isize)];
                if let Some((cg, cm, cw, ch)) = &coarse {
                    // Coarse tile under this tile's centre.
                    let cx = ((rect.0 + rect.2) / 2 / 2).min(cw - 1);
                    let cy = ((rect.1 + rect.3) / 2 / 2).min(ch - 1);
                    let m = cm[(cy / cg.patch).min(cg.ny - 1) * cg.nx + (cx / cg.patch).min(cg.nx - 1)];
                    let guess = (2 * m.dx, 2 * m.dy);
                    if guess != (0, 0) {
                        centres.push(guess);
                    }
                }
                search_tile(level, rect, &centres, radius)
            })
            .collect();
        coarse = Some((grid, matches, level.w, level.h));
    }

    let (grid, matches, _, _) = coarse.expect("at least one level");
    let fine = &levels[0];
    let n = w * h;
    let (mut dx, mut dy, mut valid) = (vec![0.0; n], vec![0.0; n], vec![true; n]);
    for ty in 0..grid.ny {
        for tx in 0..grid.nx {
            let m = matches[ty * grid.nx + tx];
            let rect = grid.bounds(tx, ty, w, h);
            let count = ((rect.2 - rect.0) * (rect.3 - rect.1)) as f64;
            let ok = match params.validity {
                Validity::All => true,
                Validity::MaxSadPerPixel(t) => m.sad / count <= t,
                Validity::Bernoulli {
                    n_frames,
                    alpha,
                    factor,
                } => {
                    let mut mean = 0.0;
                    for y in rect.1..rect.3 {
                        mean += fine.reference[y * w + rect.0..y * w + rect.2].iter().sum::<f64>();
                    }
                    mean /= count;
                    let sigma = inverted_variance(mean, alpha, n_frames).sqrt();
                    // E|X - Y| for independent N(0, sigma^2) draws.
                    let floor = 2.0 * sigma / std::f64::consts::PI.sqrt();
                    m.sad / count <= factor * floor
                }
            };
            for y in rect.1..rect.3 {
                for x in rect.0..rect.2 {
                    let i = y * w + x;
                    dx[i] = -(m.dx as f64);
                    dy[i] = -(m.dy as f64);
                    valid[i] = ok;
                }
            }
        }
    }
    FlowField::new(w, h, dx, dy, valid)
}

/// Inverse warp with bilinear sampling: `out(p) = img(p - flow(p))`.
///
/// The returned mask is false where the sample falls outside the image or
/// the flow itself is invalid; such pixels are set to zero.
pub fn warp(img: &Image, flow: &FlowField) -> Result<(Image, Vec<bool>)> {
    if img.width() != flow.width || img.height() != flow.height {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs flow {}x{}",
            img.width(),
            img.height(),
            flow.width,
            flow.height
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut out = Image::filled(w, h, img.channels(), 0.0);
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sx = x as f64 - flow.dx[i];
            let sy = y as f64 - flow.dy[i];
            if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                continue;
            }
            mask[i] = flow.valid[i];
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..img.channels() {
                let row = |yy: usize| {
                    let a = img.get(c, yy, x0);
                    if fx == 0.0 {
                        a
                    } else {
                        (1.0 - fx) * a + fx * img.get(c, yy, x0 + 1)
                    }
                };
                let v = if fy == 0.0 {
                    row(y0)
                } else {
                    (1.0 - fy) * row(y0) + fy * row(y0 + 1)
                };
                out.set(c, y, x, v);
            }
        }
    }
    Ok((out, mask))
}
