//! Floating-point image containers.
//!
//! Pixels are stored planar (`channel`, `row`, `column`) as `f64`. The two
//! newtypes [`SrgbImage`] and [`LinearImage`] tag the colour encoding and
//! enforce their value-range invariants on construction.

use std::ops::Deref;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{invalid, Error, Result};

/// Exponent of the power-law transfer curve between sRGB-encoded and linear values.
pub const DEFAULT_GAMMA: f64 = 2.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(invalid(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3);
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds an image by evaluating `f(channel, y, x)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(channels == 1 || channels == 3);
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    /// Stacks single-channel planes into one image.
    pub fn from_planes(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        let channels = planes.len();
        let data: Vec<f64> = planes.into_iter().flatten().collect();
        Image::new(width, height, channels, data)
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

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixel_count();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.pixel_count().max(1)).take(self.channels)
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Per-pixel channel average as a single-channel image.
    pub fn luminance(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.pixel_count();
        let data = (0..n)
            .map(|i| (self.data[i] + self.data[n + i] + self.data[2 * n + i]) / 3.0)
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }

    /// Loads an 8- or 16-bit PNG. Gray(+alpha) becomes one channel, anything
    /// else is converted to RGB; alpha is dropped.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
        let img = image::open(path.as_ref())?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let gray = matches!(
            img,
            DynamicImage::ImageLuma8(_)
                | DynamicImage::ImageLuma16(_)
                | DynamicImage::ImageLumaA8(_)
                | DynamicImage::ImageLumaA16(_)
        );
        if gray {
            let buf = img.into_luma16();
            let data = buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
            Image::new(w, h, 1, data)
        } else {
            let buf = img.into_rgb16();
            let n = w * h;
            let mut data = vec![0.0; 3 * n];
            for (i, p) in buf.pixels().enumerate() {
                for c in 0..3 {
                    data[c * n + i] = p.0[c] as f64 / 65535.0;
                }
            }
            Image::new(w, h, 3, data)
        }
    }

    /// Writes a 16-bit PNG; values are clamped to [0,1] and rounded.
    pub fn save_png16(&self, path: impl AsRef<Path>) -> Result<()> {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        let (w, h) = (self.width as u32, self.height as u32);
        let n = self.pixel_count();
        if self.channels == 1 {
            let raw: Vec<u16> = self.data.iter().map(|&v| q(v)).collect();
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, raw).expect("buffer size");
            buf.save(path.as_ref())?;
        } else {
            let mut raw = Vec::with_capacity(3 * n);
            for i in 0..n {
                for c in 0..3 {
                    raw.push(q(self.data[c * n + i]));
                }
            }
            let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, raw).expect("buffer size");
            buf.save(path.as_ref())?;
        }
        Ok(())
    }
}

/// Display-referred image with every sample in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct SrgbImage(Image);

impl SrgbImage {
    pub fn new(image: Image) -> Result<Self> {
        image.check_finite()?;
        if let Some(index) = image.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange {
                index,
                value: image.data[index],
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(SrgbImage(image))
    }

    /// Clamps into [0,1] instead of rejecting; non-finite samples map to 0.
    pub fn clamped(mut image: Image) -> Self {
        for v in image.data.iter_mut() {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        SrgbImage(image)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Ok(SrgbImage(Image::load_png(path)?))
    }

    pub fn into_inner(self) -> Image {
        self.0
    }
}

impl Deref for SrgbImage {
    type Target = Image;
    fn deref(&self) -> &Image {
        &self.0
    }
}

/// Scene-referred radiance; samples are finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    image: Image,
    gamma: f64,
}

impl LinearImage {
    pub fn new(image: Image, gamma: f64) -> Result<Self> {
        image.check_finite()?;
        if let Some(index) = image.data.iter().position(|&v| v < 0.0) {
            return Err(Error::OutOfRange {
                index,
                value: image.data[index],
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        Ok(LinearImage { image, gamma })
    }

    pub(crate) fn new_unchecked(image: Image, gamma: f64) -> Self {
        LinearImage { image, gamma }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn into_inner(self) -> Image {
        self.image
    }

    /// Re-encodes with `value^(1/gamma)` after clamping to [0,1].
    pub fn to_srgb(&self) -> SrgbImage {
        let inv = 1.0 / self.gamma;
        SrgbImage(self.image.map(|v| v.clamp(0.0, 1.0).powf(inv)))
    }
}

impl Deref for LinearImage {
    type Target = Image;
    fn deref(&self) -> &Image {
        &self.image
    }
}
