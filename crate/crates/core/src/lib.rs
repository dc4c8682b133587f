//! Reconstruction of physically plausible volumetric fire models from
//! multi-view goal images.
//!
//! The library estimates per-voxel temperature and fuel density fields plus a
//! camera exposure scalar by minimizing a perceptual (CIELab) appearance
//! energy combined with a neighbor smoothness energy over a physically-based
//! emission-absorption renderer. The recovered flame can be re-rendered from
//! novel views and used as a volumetric light source in simple scenes.
//!
//! Module map:
//! - [`voxelgrid`]: dense scalar fields with occupancy, yzx linear indexing,
//!   18-neighborhoods and the hierarchical cluster partition.
//! - [`radiometry`]: Planck black-body emission, gray absorption, spectral
//!   binning and spectrum-to-RGB integration.
//! - [`color`]: sRGB/CIELab conversions and the perceptual pixel distance.
//! - [`render`]: pinhole cameras, emission-absorption ray marching, exposure,
//!   Reinhard tone mapping and the scene illumination demo.
//! - [`energy`]: appearance + smoothness objective.
//! - [`optimizer`]: clustered coordinate descent over the fields, with
//!   log-space exposure and density-factor line searches.
//! - [`analysis`]: classical MDS of field trajectories and trace export.
//! - [`synth`]: synthetic flame generator used for validation.
//! - [`io`]: FVOL volume files, PFM/PPM images, trace CSV.
//! - [`pipeline`]: job configuration and end-to-end orchestration.

pub mod analysis;
pub mod cie;
pub mod color;
pub mod energy;
pub mod error;
pub mod io;
pub mod math;
pub mod optimizer;
pub mod pipeline;
pub mod radiometry;
pub mod render;
pub mod synth;
pub mod voxelgrid;

pub use error::{Error, Result};
