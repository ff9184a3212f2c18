//! Built-in statistical and round-trip checks run by `quanta selftest`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bayer::BayerPattern;
use crate::cube::{read_cube, write_cube, CubeHeader, PhotonCube, HEADER_LEN};
use crate::image::Image;
use crate::recon::{block_match_flow, mle_invert, BlockMatchParams};
use crate::rng::RngSpec;
use crate::sim::{detection_probability, make_nano_burst, sample_binary_frame, BinaryFrame, PhotonRateMap};

/// Deliberate defects used to confirm that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Flip one payload bit of every serialized cube before reading it back.
    FlipBit,
    /// Sample the calibration frames at a rate 25% above the nominal one.
    WrongP,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flip-bit" => Ok(Fault::FlipBit),
            "wrong-p" => Ok(Fault::WrongP),
            _ => Err(format!("unknown fault {s:?} (expected flip-bit or wrong-p)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub observed: String,
    pub expected: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: observed {}; expected {}", self.name, self.observed, self.expected)
    }
}

fn check(name: String, passed: bool, observed: String, expected: String) -> CheckResult {
    CheckResult { name, passed, observed, expected }
}

/// Empirical detection rate of `side * side` draws at constant `lambda`
/// against `1 - exp(-lambda)`, with a 4-sigma binomial tolerance.
pub fn sampler_calibration(lambda: f64, side: usize, seed: u64, fault: Option<Fault>) -> CheckResult {
    let drawn = if fault == Some(Fault::WrongP) { lambda * 1.25 } else { lambda };
    let rate = PhotonRateMap::constant(side, side, 1, drawn).expect("valid constant rate");
    let frame = sample_binary_frame(&rate, &RngSpec::new(seed), 0);
    let n = (side * side) as f64;
    let p = detection_probability(lambda);
    let emp = frame.ones() as f64 / n;
    let tol = 4.0 * (p * (1.0 - p) / n).sqrt();
    check(
        format!("sampler calibration lambda={lambda}"),
        (emp - p).abs() <= tol,
        format!("rate {emp:.6} over {n} draws"),
        format!("{p:.6} +/- {tol:.6}"),
    )
}

/// Mean MLE estimate from `n` pooled binary samples per pixel.
pub fn inversion_consistency(lambda: f64, side: usize, n: u32, seed: u64) -> CheckResult {
    let rate = PhotonRateMap::constant(side, side, 1, lambda).expect("valid constant rate");
    let result = make_nano_burst(&rate, n, None, &RngSpec::new(seed), 0).and_then(|nb| mle_invert(&nb, 1.0));
    match result {
        Ok(est) => {
            let mean = est.mean();
            let rel = (mean - lambda).abs() / lambda;
            check(
                format!("inversion consistency lambda={lambda}"),
                rel <= 0.02,
                format!("mean estimate {mean:.5} ({:.3}% off)", rel * 100.0),
                format!("{lambda} within 2%"),
            )
        }
        Err(e) => check(format!("inversion consistency lambda={lambda}"), false, e.to_string(), "an estimate".into()),
    }
}

/// Textured reference and a copy whose content is moved by `(sx, sy)`.
pub fn shifted_noise_pair(w: usize, h: usize, sx: isize, sy: isize, seed: u64) -> (Image, Image) {
    let pad = 16isize;
    let rng = RngSpec::new(seed);
    let cw = w as isize + 2 * pad;
    let at = |y: isize, x: isize| rng.uniform(0, ((y + pad) * cw + x + pad) as u64);
    let reference = Image::from_fn(w, h, 1, |_, y, x| at(y as isize, x as isize));
    let src = Image::from_fn(w, h, 1, |_, y, x| at(y as isize - sy, x as isize - sx));
    (src, reference)
}

/// Every global shift in `[-radius, radius]^2` must come back exactly as
/// flow `-shift` on the tiles that stay inside the frame.
pub fn flow_exactness(side: usize, radius: isize, seed: u64) -> CheckResult {
    let params = BlockMatchParams::default();
    let margin = params.patch.max(radius as usize);
    let mut wrong = Vec::new();
    let mut total = 0;
    for sy in -radius..=radius {
        for sx in -radius..=radius {
            total += 1;
            let (src, reference) = shifted_noise_pair(side, side, sx, sy, seed);
            let ok = match block_match_flow(&src, &reference, &params) {
                Ok(f) => (margin..side - margin).all(|y| {
                    (margin..side - margin).all(|x| f.at(y, x) == (-sx as f64, -sy as f64))
                }),
                Err(_) => false,
            };
            if !ok {
                wrong.push((sx, sy));
            }
        }
    }
    check(
        format!("flow exactness |shift| <= {radius}"),
        wrong.is_empty(),
        if wrong.is_empty() {
            format!("{total} shifts recovered")
        } else {
            format!("{} of {total} shifts wrong, first {:?}", wrong.len(), wrong[0])
        },
        "every interior flow equal to the negated shift".into(),
    )
}

/// Deterministic pseudo-random cube. Widths and heights run over 1..=64 so
/// that rows often end mid-byte.
pub fn random_cube(rng: &RngSpec, index: u64) -> PhotonCube {
    let r = |k: u64| rng.bits(index, k);
    let width = 1 + (r(0) % 64) as usize;
    let height = 1 + (r(1) % 64) as usize;
    let frames = (r(2) % 101) as usize;
    let pattern = match r(3) % 5 {
        0 => None,
        k => Some(BayerPattern::ALL[(k - 1) as usize]),
    };
    let header = CubeHeader {
        width: width as u32,
        height: height as u32,
        frame_count: frames as u32,
        fps: 1000.0 + (r(4) % 100_000) as f64,
        channels: if pattern.is_some() { 3 } else { 1 },
        pattern,
        alpha: 0.25 + (r(5) % 16) as f64 / 4.0,
        seed: r(6),
    };
    let density = (r(7) % 1000) as f64 / 1000.0;
    let data = (0..frames)
        .map(|f| {
            let bits = (0..width * height)
                .map(|i| u8::from(rng.derive("bits", index).uniform(f as u64, i as u64) < density))
                .collect();
            BinaryFrame::new(width, height, 1, pattern, bits).expect("consistent frame")
        })
        .collect();
    PhotonCube::new(header, data).expect("consistent cube")
}

/// Writes and re-reads `count` random cubes; any difference fails.
pub fn cube_round_trip(count: u64, seed: u64, fault: Option<Fault>) -> CheckResult {
    let rng = RngSpec::new(seed);
    let mut failures = Vec::new();
    for i in 0..count {
        let cube = random_cube(&rng, i);
        let mut buf = Vec::new();
        if let Err(e) = write_cube(&cube, &mut buf) {
            failures.push(format!("cube {i}: write failed: {e}"));
            continue;
        }
        if fault == Some(Fault::FlipBit) && buf.len() > HEADER_LEN {
            let at = HEADER_LEN + (rng.bits(u64::MAX, i) % (buf.len() - HEADER_LEN) as u64) as usize;
            // Flip a bit that a reader must preserve: row padding is ignored.
            let h = cube.header();
            let row = h.row_bytes() as usize;
            let col = (at - HEADER_LEN) % row;
            let used = h.width as usize - 8 * col;
            let bit = (rng.bits(u64::MAX - 1, i) % used.min(8) as u64) as u8;
            buf[at] ^= 1 << bit;
        }
        match read_cube(&mut buf.as_slice()) {
            Ok(back) if back == cube => {}
            Ok(_) => failures.push(format!("cube {i}: contents differ after read")),
            Err(e) => failures.push(format!("cube {i}: read failed: {e}")),
        }
    }
    check(
        format!("cube round trip x{count}"),
        failures.is_empty(),
        if failures.is_empty() {
            format!("{count} cubes identical")
        } else {
            format!("{} failures, first: {}", failures.len(), failures[0])
        },
        "bit-exact write/read".into(),
    )
}

/// Runs the whole suite.
pub fn cmd_selftest(fault: Option<Fault>) -> Vec<CheckResult> {
    let mut out: Vec<CheckResult> = [0.1, 1.0, 3.0]
        .iter()
        .enumerate()
        .map(|(i, &l)| sampler_calibration(l, 1000, 11 + i as u64, fault))
        .collect();
    out.push(inversion_consistency(0.5, 64, 1000, 21));
    out.push(flow_exactness(64, 8, 31));
    out.push(cube_round_trip(50, 41, fault));
    out
}
