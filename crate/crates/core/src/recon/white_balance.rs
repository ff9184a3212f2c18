use crate::error::{invalid, Error, Result};
use crate::image::Image;

/// Gray-world balance: scales each channel by `global_mean / channel_mean`.
pub fn gray_world_wb(img: &Image) -> Result<Image> {
    if img.channels() != 3 {
        return Err(invalid(format!(
            "gray-world balance needs 3 channels, got {}",
            img.channels()
        )));
    }
    let n = img.pixel_count() as f64;
    let means: Vec<f64> = img.planes().map(|p| p.iter().sum::<f64>() / n).collect();
    if let Some(channel) = means.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::ZeroChannelMean { channel });
    }
    let global = means.iter().sum::<f64>() / 3.0;
    let mut out = img.clone();
    for (c, m) in means.iter().enumerate() {
        let s = global / m;
        out.plane_mut(c).iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_means(img: &Image) -> Vec<f64> {
        img.planes().map(|p| p.iter().sum::<f64>() / p.len() as f64).collect()
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let img = Image::from_fn(4, 4, 3, |_, y, x| 0.1 + 0.05 * (x + y) as f64);
        assert_eq!(gray_world_wb(&img).unwrap(), img);
    }

    #[test]
    fn scales_for_known_means() {
        let img = Image::from_fn(3, 2, 3, |c, _, _| [0.2, 0.4, 0.6][c]);
        let out = gray_world_wb(&img).unwrap();
        let scales = [2.0, 1.0, 2.0 / 3.0];
        for c in 0..3 {
            assert!((out.get(c, 1, 1) / img.get(c, 1, 1) - scales[c]).abs() < 1e-14);
        }
    }

    #[test]
    fn output_means_agree_and_scale_is_factored_out() {
        let img = Image::from_fn(7, 5, 3, |c, y, x| 0.05 + ((c * 13 + y * 5 + x * 3) % 11) as f64 / 20.0);
        let out = gray_world_wb(&img).unwrap();
        let m = channel_means(&out);
        assert!((m[0] - m[1]).abs() / m[1] < 1e-6 && (m[2] - m[1]).abs() / m[1] < 1e-6);
        let scaled = gray_world_wb(&img.map(|v| 3.0 * v)).unwrap();
        for (a, b) in scaled.data().iter().zip(out.data()) {
            assert!((a / 3.0 - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_channel_is_rejected() {
        let img = Image::from_fn(2, 2, 3, |c, _, _| if c == 2 { 0.0 } else { 0.5 });
        assert!(matches!(gray_world_wb(&img), Err(Error::ZeroChannelMean { channel: 2 })));
        assert!(gray_world_wb(&Image::filled(2, 2, 1, 0.5)).is_err());
    }
}
