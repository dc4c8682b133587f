//! Binary PPM (P6, maxval 255) for display-referred images.

use crate::error::{Error, Result};
use crate::render::EncodedImage;
use std::io::Read;
use std::path::Path;

pub fn encode_ppm(img: &EncodedImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + img.pixels.len() * 3);
    out.extend_from_slice(format!("P6\n{} {}\n255\n", img.width, img.height).as_bytes());
    for p in img.pixels.iter() {
        for channel in p {
            out.push((channel.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

pub fn write_ppm(path: &Path, img: &EncodedImage) -> Result<()> {
    std::fs::write(path, encode_ppm(img))?;
    Ok(())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<EncodedImage> {
    let (magic, pos) = super::pfm::next_token(bytes, 0)?;
    if magic != "P6" {
        return Err(Error::Format(
            "only binary P6 PPM images are supported".into(),
        ));
    }
    let (width_tok, pos) = super::pfm::next_token(bytes, pos)?;
    let width: u32 = width_tok
        .parse()
        .map_err(|_| Error::Format("bad PPM width".into()))?;
    let (height_tok, pos) = super::pfm::next_token(bytes, pos)?;
    let height: u32 = height_tok
        .parse()
        .map_err(|_| Error::Format("bad PPM height".into()))?;
    let (maxval_tok, pos) = super::pfm::next_token(bytes, pos)?;
    let maxval: u32 = maxval_tok
        .parse()
        .map_err(|_| Error::Format("bad PPM maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "only maxval 255 is supported, got {maxval}"
        )));
    }
    let data_start = pos + 1;
    let n = width as usize * height as usize;
    if bytes.len() < data_start + 3 * n {
        return Err(Error::Format("PPM payload truncated".into()));
    }
    let pixels = (0..n)
        .map(|i| {
            let off = data_start + 3 * i;
            [
                bytes[off] as f64 / 255.0,
                bytes[off + 1] as f64 / 255.0,
                bytes[off + 2] as f64 / 255.0,
            ]
        })
        .collect();
    EncodedImage::from_pixels(width, height, pixels)
}

pub fn read_ppm(path: &Path) -> Result<EncodedImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|source| Error::MissingFile {
            path: path.to_path_buf(),
            source,
        })?
        .read_to_end(&mut bytes)?;
    decode_ppm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_decode_quantizes_to_8_bits() {
        let img = EncodedImage::from_pixels(
            2,
            1,
            vec![[0.0, 0.5, 1.0], [0.25, 0.75, 0.1]],
        )
        .unwrap();
        let decoded = decode_ppm(&encode_ppm(&img)).unwrap();
        for (a, b) in img.pixels.iter().zip(decoded.pixels.iter()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_other_formats() {
        assert!(decode_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\nxx").is_err());
    }

    proptest! {
        #[test]
        fn quantized_values_round_trip_exactly(
            raw in proptest::collection::vec(0u8..=255, 12)
        ) {
            // 8-bit-representable images survive a full encode/decode cycle.
            let pixels: Vec<[f64; 3]> = raw
                .chunks(3)
                .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
                .collect();
            let img = EncodedImage::from_pixels(2, 2, pixels).unwrap();
            let bytes = encode_ppm(&img);
            let decoded = decode_ppm(&bytes).unwrap();
            prop_assert_eq!(&img.pixels, &decoded.pixels);
            prop_assert_eq!(encode_ppm(&decoded), bytes);
        }
    }
}
