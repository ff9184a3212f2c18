//! Procedural test scenes: a textured square translating (and optionally
//! rotating) over a static textured background.

use serde::{Deserialize, Serialize};

use crate::image::{Image, SrgbImage};
use crate::rng::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Horizontal translation of the square, pixels per frame.
    pub speed: f64,
    /// Rotation of the square, degrees per frame.
    pub rotation: f64,
    /// Side of the square relative to the shorter image side.
    pub quad_size: f64,
    pub color: bool,
    /// Texture seed.
    pub seed: u64,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        SyntheticScene {
            width: 256,
            height: 256,
            frames: 11,
            speed: 2.0,
            rotation: 0.0,
            quad_size: 0.5,
            color: true,
            seed: 1,
        }
    }
}

const SUPERSAMPLE: usize = 3;

fn cell_value(seed: u64, layer: u64, cx: i64, cy: i64, channel: usize) -> f64 {
    let h = mix64(seed ^ mix64(layer ^ mix64((cx as u64) ^ mix64((cy as u64) ^ ((channel as u64) << 56)))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

impl SyntheticScene {
    pub fn channels(&self) -> usize {
        if self.color {
            3
        } else {
            1
        }
    }

    fn background(&self, x: f64, y: f64, c: usize) -> f64 {
        let cell = 16.0;
        let v = cell_value(self.seed, 1, (x / cell).floor() as i64, (y / cell).floor() as i64, c);
        let ripple = 0.5 + 0.5 * (x * 0.07 + c as f64).sin() * (y * 0.05).cos();
        0.15 + 0.35 * (0.6 * v + 0.4 * ripple)
    }

    fn foreground(&self, u: f64, v: f64, c: usize) -> f64 {
        let cell = 6.0;
        let coarse = cell_value(self.seed, 2, (u / cell).floor() as i64, (v / cell).floor() as i64, c);
        let fine = cell_value(self.seed, 3, (u / 2.0).floor() as i64, (v / 2.0).floor() as i64, c);
        0.1 + 0.85 * (0.75 * coarse + 0.25 * fine)
    }

    fn sample(&self, t: f64, x: f64, y: f64, c: usize) -> f64 {
        let side = self.quad_size * self.width.min(self.height) as f64;
        let travel = self.speed * (self.frames.saturating_sub(1)) as f64;
        let cx = self.width as f64 / 2.0 - travel / 2.0 + self.speed * t;
        let cy = self.height as f64 / 2.0;
        let theta = (self.rotation * t).to_radians();
        let (s, co) = theta.sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        let u = co * dx + s * dy;
        let v = -s * dx + co * dy;
        if u.abs() < side / 2.0 && v.abs() < side / 2.0 {
            self.foreground(u + side / 2.0, v + side / 2.0, c)
        } else {
            self.background(x, y, c)
        }
    }

    /// Renders frame `t` with 3x3 supersampling.
    pub fn render(&self, t: usize) -> SrgbImage {
        let img = Image::from_fn(self.width, self.height, self.channels(), |c, y, x| {
            let mut acc = 0.0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                    let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                    acc += self.sample(t as f64, px, py, c);
                }
            }
            acc / (SUPERSAMPLE * SUPERSAMPLE) as f64
        });
        SrgbImage::clamped(img)
    }

    pub fn render_all(&self) -> Vec<SrgbImage> {
        use rayon::prelude::*;
        (0..self.frames).into_par_iter().map(|t| self.render(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_scene_frames_are_identical() {
        let s = SyntheticScene {
            width: 40,
            height: 30,
            frames: 3,
            speed: 0.0,
            ..SyntheticScene::default()
        };
        assert_eq!(s.render(0), s.render(2));
    }

    #[test]
    fn moving_square_translates_by_speed() {
        let s = SyntheticScene {
            width: 64,
            height: 64,
            frames: 5,
            speed: 3.0,
            color: false,
            ..SyntheticScene::default()
        };
        let (a, b) = (s.render(1), s.render(2));
        // Inside the square, frame 2 is frame 1 moved right by 3 pixels.
        for y in 20..44 {
            for x in 26..40 {
                assert!((b.get(0, y, x + 3) - a.get(0, y, x)).abs() < 1e-12);
            }
        }
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
