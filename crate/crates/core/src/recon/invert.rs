use crate::error::{invalid, Result};
use crate::image::{Image, LinearImage, DEFAULT_GAMMA};
use crate::sim::NanoBurst;

/// Detection-rate estimate for `count` detections out of `n` exposures.
///
/// `-ln(1 - k/n)`, with a saturated pixel (`k == n`) treated as `n - 0.5`
/// detections so the estimate stays finite.
#[inline]
pub fn rate_estimate(count: u32, n: u32) -> f64 {
    let k = if count >= n { n as f64 - 0.5 } else { count as f64 };
    -(-k / n as f64).ln_1p()
}

/// Maximum-likelihood inversion of the binary response, scaled back to
/// linear intensity (`rate / alpha`). Mosaiced input stays mosaiced.
pub fn mle_invert(nb: &NanoBurst, alpha: f64) -> Result<LinearImage> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    let n = nb.n_frames();
    let data = nb
        .counts()
        .iter()
        .map(|&k| rate_estimate(k as u32, n) / alpha)
        .collect();
    let img = Image::new(nb.width(), nb.height(), 1, data)?;
    Ok(LinearImage::new_unchecked(img, DEFAULT_GAMMA))
}

/// Per-pixel variance of the inverted intensity for a pixel of mean
/// intensity `mean`, by the delta method on `p(1-p)/n`.
pub fn inverted_variance(mean: f64, alpha: f64, n_frames: u32) -> f64 {
    let p = crate::sim::detection_probability(alpha * mean.max(0.0));
    // Cap p at the saturation clamp so the variance stays finite.
    let n = n_frames as f64;
    let p = p.min((n - 0.5) / n);
    p / (n * (1.0 - p)) / (alpha * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(rate_estimate(0, 7), 0.0);
        assert!((rate_estimate(4, 7) - 0.847_297_860_387_203_6).abs() < 1e-14);
        assert!((rate_estimate(7, 7) - 2.639_057_329_615_258_6).abs() < 1e-14);
    }

    #[test]
    fn divides_by_alpha() {
        let nb = NanoBurst::from_counts(2, 1, 7, None, vec![0, 4]).unwrap();
        let lin = mle_invert(&nb, 2.0).unwrap();
        assert_eq!(lin.get(0, 0, 0), 0.0);
        assert!((lin.get(0, 0, 1) - 0.847_297_860_387_203_6 / 2.0).abs() < 1e-14);
        assert!(mle_invert(&nb, 0.0).is_err());
    }
}
