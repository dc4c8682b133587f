//! sRGB and CIELab conversions plus the Euclidean Lab pixel distance used by
//! the appearance energy.

use crate::cie;
use std::sync::atomic::{AtomicU64, Ordering};

/// CIELab color; `l` in [0, 100], opponent axes unbounded but finite.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

/// Display-referred sRGB triple, channels in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EncodedRgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

/// Scene-referred linear RGB triple, channels >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinearRgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl EncodedRgb {
    pub fn new(r: f64, g: f64, b: f64) -> Self {
        EncodedRgb { r, g, b }
    }
}

/// Count of out-of-range encoded inputs that had to be clamped; images may
/// carry tiny numeric overshoot and should not abort a run.
static CLAMP_WARNINGS: AtomicU64 = AtomicU64::new(0);

pub fn clamp_warning_count() -> u64 {
    CLAMP_WARNINGS.load(Ordering::Relaxed)
}

pub fn reset_clamp_warnings() {
    CLAMP_WARNINGS.store(0, Ordering::Relaxed);
}

/// sRGB transfer function, encoded -> linear.
pub fn srgb_decode(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB transfer function, linear -> encoded.
pub fn srgb_encode(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

const LAB_DELTA: f64 = 6.0 / 29.0;

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA * LAB_DELTA * LAB_DELTA {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(u: f64) -> f64 {
    if u > LAB_DELTA {
        u * u * u
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (u - 4.0 / 29.0)
    }
}

/// Encoded sRGB -> CIELab (D65 white). Inputs outside [0, 1] are clamped and
/// counted in [`clamp_warning_count`].
pub fn rgb_to_lab(c: EncodedRgb) -> LabColor {
    let mut channels = [c.r, c.g, c.b];
    for v in channels.iter_mut() {
        if *v < 0.0 || *v > 1.0 {
            CLAMP_WARNINGS.fetch_add(1, Ordering::Relaxed);
            *v = v.clamp(0.0, 1.0);
        }
    }
    let linear = [
        srgb_decode(channels[0]),
        srgb_decode(channels[1]),
        srgb_decode(channels[2]),
    ];
    let xyz = cie::linear_srgb_to_xyz(linear);
    let fx = lab_f(xyz[0] / cie::WHITE_POINT[0]);
    let fy = lab_f(xyz[1] / cie::WHITE_POINT[1]);
    let fz = lab_f(xyz[2] / cie::WHITE_POINT[2]);
    LabColor {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// CIELab -> encoded sRGB; inverse of [`rgb_to_lab`] for in-gamut colors.
pub fn lab_to_rgb(lab: LabColor) -> EncodedRgb {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let xyz = [
        cie::WHITE_POINT[0] * lab_f_inv(fx),
        cie::WHITE_POINT[1] * lab_f_inv(fy),
        cie::WHITE_POINT[2] * lab_f_inv(fz),
    ];
    let linear = cie::xyz_to_linear_srgb(xyz);
    EncodedRgb {
        r: srgb_encode(linear[0].clamp(0.0, 1.0)),
        g: srgb_encode(linear[1].clamp(0.0, 1.0)),
        b: srgb_encode(linear[2].clamp(0.0, 1.0)),
    }
}

/// Euclidean distance between two Lab colors (the perceptual pixel error).
pub fn lab_distance(c1: LabColor, c2: LabColor) -> f64 {
    let dl = c1.l - c2.l;
    let da = c1.a - c2.a;
    let db = c1.b - c2.b;
    (dl * dl + da * da + db * db).sqrt()
}
