//! Global Reinhard tone mapping operator.

use crate::color::srgb_encode;
use crate::error::{Error, Result};
use crate::render::{luminance, EncodedImage, HdrImage};

/// Default key value `a`.
pub const DEFAULT_REINHARD_KEY: f64 = 0.18;

/// Guard inside the log-average so all-black images stay defined.
const LOG_EPSILON: f64 = 1e-6;

/// Global Reinhard operator: scale luminances by `a` over the log-average
/// world luminance, compress with L/(1+L), rescale channels by the luminance
/// ratio, then sRGB-encode.
pub fn tonemap_reinhard(img: &HdrImage, key: f64) -> Result<EncodedImage> {
    if img.pixels.is_empty() {
        return Err(Error::Shape("cannot tone map an empty image".into()));
    }
    if key <= 0.0 {
        return Err(Error::Config(format!(
            "Reinhard key value must be positive, got {key}"
        )));
    }
    let n = img.pixels.len() as f64;
    let log_sum: f64 = img
        .pixels
        .iter()
        .map(|p| (LOG_EPSILON + luminance(*p)).ln())
        .sum();
    let log_average = (log_sum / n).exp();

    let pixels = img
        .pixels
        .iter()
        .map(|p| {
            let lw = luminance(*p);
            if lw <= 0.0 {
                return [0.0; 3];
            }
            let scaled = key * lw / log_average;
            let display = scaled / (1.0 + scaled);
            let ratio = display / lw;
            [
                srgb_encode((p[0] * ratio).clamp(0.0, 1.0)),
                srgb_encode((p[1] * ratio).clamp(0.0, 1.0)),
                srgb_encode((p[2] * ratio).clamp(0.0, 1.0)),
            ]
        })
        .collect();
    EncodedImage::from_pixels(img.width, img.height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::srgb_decode;

    #[test]
    fn constant_image_maps_to_half_luminance() {
        // Every pixel at the log-average with a = 1 lands at L/(1+L) = 1/2.
        let img = HdrImage::from_pixels(4, 2, vec![[2.0, 2.0, 2.0]; 8]).unwrap();
        let out = tonemap_reinhard(&img, 1.0).unwrap();
        for p in out.pixels.iter() {
            let linear = [srgb_decode(p[0]), srgb_decode(p[1]), srgb_decode(p[2])];
            let l = luminance(linear);
            assert!((l - 0.5).abs() < 1e-3, "display luminance {l}");
        }
    }

    #[test]
    fn output_luminance_below_one() {
        let img = HdrImage::from_pixels(
            2,
            2,
            vec![
                [1e6, 1e6, 1e6],
                [3.0, 1.0, 0.2],
                [0.001, 0.002, 0.003],
                [50.0, 20.0, 5.0],
            ],
        )
        .unwrap();
        let out = tonemap_reinhard(&img, DEFAULT_REINHARD_KEY).unwrap();
        for p in out.pixels.iter() {
            let linear = [srgb_decode(p[0]), srgb_decode(p[1]), srgb_decode(p[2])];
            assert!(luminance(linear) < 1.0);
        }
    }

    #[test]
    fn scale_invariance_of_global_operator() {
        let base = vec![
            [0.5, 0.2, 0.1],
            [4.0, 3.0, 1.0],
            [0.05, 0.08, 0.02],
            [10.0, 6.0, 2.0],
        ];
        let doubled: Vec<[f64; 3]> = base.iter().map(|p| [2.0 * p[0], 2.0 * p[1], 2.0 * p[2]]).collect();
        let a = tonemap_reinhard(&HdrImage::from_pixels(2, 2, base).unwrap(), 0.18).unwrap();
        let b = tonemap_reinhard(&HdrImage::from_pixels(2, 2, doubled).unwrap(), 0.18).unwrap();
        for (pa, pb) in a.pixels.iter().zip(b.pixels.iter()) {
            for c in 0..3 {
                // The epsilon guard breaks exact invariance; values here are
                // far above it.
                assert!((pa[c] - pb[c]).abs() < 1e-6, "{} vs {}", pa[c], pb[c]);
            }
        }
    }

    #[test]
    fn all_zero_image_stays_zero() {
        let img = HdrImage::new(3, 3);
        let out = tonemap_reinhard(&img, 0.18).unwrap();
        assert!(out.pixels.iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn invalid_inputs_rejected() {
        let img = HdrImage::new(2, 2);
        assert!(tonemap_reinhard(&img, 0.0).is_err());
        assert!(tonemap_reinhard(&img, -1.0).is_err());
        let empty = HdrImage {
            width: 0,
            height: 0,
            pixels: vec![],
        };
        assert!(tonemap_reinhard(&empty, 0.18).is_err());
    }
}
