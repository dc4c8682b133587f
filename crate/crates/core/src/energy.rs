//! The optimization objective: per-pixel CIELab appearance matching summed
//! over views, pairwise neighbor smoothness per field, and their weighted
//! total E = w_am * E_am + w_sm * E_sm.

use crate::color::{lab_distance, rgb_to_lab, EncodedRgb};
use crate::error::{Error, Result};
use crate::radiometry::PhysicalRanges;
use crate::render::{
    apply_exposure_and_encode, render_image, CameraView, EncodedImage, FireVolume, RenderSettings,
};
use crate::voxelgrid::{neighbors18, VoxelGrid3};
use serde::{Deserialize, Serialize};

/// Weights of the appearance and smoothness terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    pub w_am: f64,
    pub w_sm: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            w_am: 1.0,
            w_sm: 10.0,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        if self.w_am < 0.0 || self.w_sm < 0.0 || (self.w_am == 0.0 && self.w_sm == 0.0) {
            return Err(Error::Config(format!(
                "weights must be non-negative and not both zero: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Decomposition of the total energy. Smoothness values are expressed in
/// range-normalized units (the raw pairwise sum divided by the field's
/// parameter range): temperatures span kelvins and densities span 1e27-scale
/// particle counts, so only normalized sums can share one w_sm.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    /// Appearance energy per view, unweighted.
    pub appearance_per_view: Vec<f64>,
    /// Range-normalized smoothness of the temperature field, unweighted.
    pub smoothness_temperature: f64,
    /// Range-normalized smoothness of the density field, unweighted.
    pub smoothness_density: f64,
    pub weights: EnergyWeights,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn appearance_sum(&self) -> f64 {
        self.appearance_per_view.iter().sum()
    }

    pub fn smoothness_sum(&self) -> f64 {
        self.smoothness_temperature + self.smoothness_density
    }

    pub fn compose(
        appearance_per_view: Vec<f64>,
        smoothness_temperature: f64,
        smoothness_density: f64,
        weights: EnergyWeights,
    ) -> Self {
        let appearance: f64 = appearance_per_view.iter().sum();
        let total = weights.w_am * appearance
            + weights.w_sm * (smoothness_temperature + smoothness_density);
        EnergyBreakdown {
            appearance_per_view,
            smoothness_temperature,
            smoothness_density,
            weights,
            total,
        }
    }
}

/// Sum over pixels of the Lab distance between the synthetic and goal
/// images. The appearance weight is applied by the caller in the total.
pub fn appearance_term(cg: &EncodedImage, cam: &EncodedImage) -> Result<f64> {
    if cg.width != cam.width || cg.height != cam.height {
        return Err(Error::Shape(format!(
            "image dimensions differ: {}x{} vs {}x{}",
            cg.width, cg.height, cam.width, cam.height
        )));
    }
    Ok(cg
        .pixels
        .iter()
        .zip(cam.pixels.iter())
        .map(|(a, b)| {
            lab_distance(
                rgb_to_lab(EncodedRgb::new(a[0], a[1], a[2])),
                rgb_to_lab(EncodedRgb::new(b[0], b[1], b[2])),
            )
        })
        .sum())
}

/// Pairwise smoothness: for every occupied voxel, the sum of absolute
/// differences to its occupied 18-neighbors. Each unordered pair is counted
/// twice, once from each side, matching the per-voxel sum; the default
/// w_sm = 10 is calibrated to this convention. Unoccupied neighbors are
/// skipped rather than read as ambient, otherwise the flame boundary would
/// dominate the term.
pub fn smoothness_term(field: &VoxelGrid3) -> f64 {
    let dims = field.dims;
    let mut sum = 0.0;
    for i in 0..field.values.len() {
        if !field.occupied[i] {
            continue;
        }
        let vi = field.values[i];
        for j in neighbors18(i, &dims).expect("index from iteration") {
            if field.occupied[j] {
                sum += (field.values[j] - vi).abs();
            }
        }
    }
    sum
}

/// Render every view, apply exposure and encoding, and combine appearance
/// and smoothness terms. Smoothness covers both fields and enters the total
/// in range-normalized units; in simplified mode the density field is a
/// frozen shape times one scalar, so its term is constant up to that scale
/// but kept so the objective form is unchanged.
pub fn total_energy(
    volume: &FireVolume,
    views: &[CameraView],
    exposure: f64,
    weights: &EnergyWeights,
    settings: &RenderSettings,
    ranges: &PhysicalRanges,
) -> Result<EnergyBreakdown> {
    weights.validate()?;
    if views.is_empty() {
        return Err(Error::Config(
            "total energy needs at least one view with a goal image".into(),
        ));
    }
    let mut appearance_per_view = Vec::with_capacity(views.len());
    for (i, view) in views.iter().enumerate() {
        let goal = view
            .goal
            .as_ref()
            .ok_or_else(|| Error::Config(format!("view {i} has no goal image")))?;
        let hdr = render_image(volume, view, settings)?;
        let encoded = apply_exposure_and_encode(&hdr, exposure, ranges)?;
        appearance_per_view.push(appearance_term(&encoded, goal)?);
    }
    Ok(EnergyBreakdown::compose(
        appearance_per_view,
        smoothness_term(&volume.temperature) / (ranges.t_max - ranges.t_min),
        smoothness_term(&volume.density) / (ranges.d_max - ranges.d_min),
        *weights,
    ))
}
