//! The forward model: pinhole cameras, emission-absorption ray marching
//! through a [`FireVolume`], exposure application, Reinhard tone mapping,
//! and the scene illumination demo.

mod camera;
mod image;
mod march;
mod scene;
mod tonemap;
mod volume;

pub use camera::{generate_ray, look_at, orbit_view, CameraView, Pose};
pub use image::{EncodedImage, HdrImage};
pub use march::{
    apply_exposure_and_encode, march_ray, march_ray_with, march_transmittance, render_image,
    MarchResult,
};
pub use scene::{
    mean_shadow_edge_gradient, render_scene_demo, EmitterKind, Quad, SceneDemo, SphereLight,
};
pub use tonemap::{tonemap_reinhard, DEFAULT_REINHARD_KEY};
pub use volume::FireVolume;

use crate::radiometry::{AbsorptionModel, SpectralBins};
use serde::{Deserialize, Serialize};

/// Transmittance below which ray marching terminates early.
pub const TRANSMITTANCE_EPSILON: f64 = 1e-4;

/// Field lookup mode during marching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Nearest-voxel lookup; the optimizer requires this mode.
    #[default]
    Nearest,
    /// Trilinear interpolation for final beauty renders.
    Trilinear,
}

/// Everything the renderer needs besides camera and volume.
#[derive(Debug, Clone)]
pub struct RenderSettings {
    pub bins: SpectralBins,
    /// March step length, meters.
    pub step: f64,
    pub absorption: AbsorptionModel,
    pub interpolation: Interpolation,
}

impl RenderSettings {
    /// Default spectral bins and absorption with a step of half the given
    /// voxel edge length.
    pub fn for_voxel_size(voxel_size: f64) -> Self {
        RenderSettings {
            bins: SpectralBins::visible_default(),
            step: 0.5 * voxel_size,
            absorption: AbsorptionModel::default(),
            interpolation: Interpolation::Nearest,
        }
    }
}

/// Rec. 709 luminance of a linear RGB triple.
pub fn luminance(rgb: [f64; 3]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}
