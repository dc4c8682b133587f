//! Image buffers: linear HDR radiance and display-referred encoded sRGB.

use crate::error::{Error, Result};

/// Per-pixel linear RGB radiance, row-major from the top-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

impl HdrImage {
    pub fn new(width: u32, height: u32) -> Self {
        HdrImage {
            width,
            height,
            pixels: vec![[0.0; 3]; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(HdrImage {
            width,
            height,
            pixels,
        })
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn max_value(&self) -> f64 {
        self.pixels
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0f64, |m, &v| m.max(v))
    }
}

/// Display-referred sRGB image, channels in [0, 1], row-major top-left.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

impl EncodedImage {
    pub fn new(width: u32, height: u32) -> Self {
        EncodedImage {
            width,
            height,
            pixels: vec![[0.0; 3]; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(EncodedImage {
            width,
            height,
            pixels,
        })
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }
}
