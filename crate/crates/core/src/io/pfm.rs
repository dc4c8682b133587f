//! PFM images: `PF` header, width/height line, scale line (negative means
//! little-endian), scanlines bottom-up with three f32 per pixel.

use crate::error::{Error, Result};
use crate::render::{EncodedImage, HdrImage};
use std::io::Read;
use std::path::Path;

pub fn encode_pfm(img: &HdrImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + img.pixels.len() * 12);
    out.extend_from_slice(format!("PF\n{} {}\n-1.0\n", img.width, img.height).as_bytes());
    // Bottom-up scanlines.
    for row in (0..img.height).rev() {
        for col in 0..img.width {
            for channel in img.pixel(col, row) {
                out.extend_from_slice(&(channel as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn write_pfm(path: &Path, img: &HdrImage) -> Result<()> {
    std::fs::write(path, encode_pfm(img))?;
    Ok(())
}

/// Next whitespace-separated ASCII token; returns (token, end offset).
pub(crate) fn next_token(bytes: &[u8], mut pos: usize) -> Result<(&str, usize)> {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos {
        return Err(Error::Format("truncated image header".into()));
    }
    let token = std::str::from_utf8(&bytes[start..pos])
        .map_err(|_| Error::Format("image header is not ASCII".into()))?;
    Ok((token, pos))
}

fn parse_header(bytes: &[u8]) -> Result<(u32, u32, f32, usize)> {
    let (magic, pos) = next_token(bytes, 0)?;
    if magic != "PF" {
        return Err(Error::Format(format!(
            "unsupported PFM magic {magic:?} (only color `PF` images)"
        )));
    }
    let (width_tok, pos) = next_token(bytes, pos)?;
    let width: u32 = width_tok
        .parse()
        .map_err(|_| Error::Format("bad PFM width".into()))?;
    let (height_tok, pos) = next_token(bytes, pos)?;
    let height: u32 = height_tok
        .parse()
        .map_err(|_| Error::Format("bad PFM height".into()))?;
    let (scale_tok, pos) = next_token(bytes, pos)?;
    let scale: f32 = scale_tok
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    // Exactly one whitespace byte separates the header from the data.
    Ok((width, height, scale, pos + 1))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<HdrImage> {
    let (width, height, scale, data_start) = parse_header(bytes)?;
    let n = width as usize * height as usize;
    if bytes.len() < data_start + 12 * n {
        return Err(Error::Format(format!(
            "PFM payload truncated: {} bytes for {n} pixels",
            bytes.len() - data_start
        )));
    }
    let little_endian = scale < 0.0;
    let magnitude = scale.abs() as f64;
    let mut pixels = vec![[0.0f64; 3]; n];
    let mut off = data_start;
    for row in (0..height).rev() {
        for col in 0..width {
            let mut p = [0.0f64; 3];
            for channel in p.iter_mut() {
                let raw: [u8; 4] = bytes[off..off + 4].try_into().expect("bounds checked");
                let v = if little_endian {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                *channel = v as f64 * magnitude;
                off += 4;
            }
            pixels[row as usize * width as usize + col as usize] = p;
        }
    }
    HdrImage::from_pixels(width, height, pixels)
}

pub fn read_pfm(path: &Path) -> Result<HdrImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|source| Error::MissingFile {
            path: path.to_path_buf(),
            source,
        })?
        .read_to_end(&mut bytes)?;
    decode_pfm(&bytes)
}

/// Read a PFM used as a goal image: values are display-referred encoded
/// channels and get clamped into [0, 1].
pub fn read_pfm_encoded(path: &Path) -> Result<EncodedImage> {
    let hdr = read_pfm(path)?;
    let pixels = hdr
        .pixels
        .iter()
        .map(|p| {
            [
                p[0].clamp(0.0, 1.0),
                p[1].clamp(0.0, 1.0),
                p[2].clamp(0.0, 1.0),
            ]
        })
        .collect();
    EncodedImage::from_pixels(hdr.width, hdr.height, pixels)
}
