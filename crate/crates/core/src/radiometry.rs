//! Physical light emission and absorption: Planck black-body spectral
//! radiance, density-proportional gray absorption, spectral binning, and
//! spectrum to linear-RGB integration.

use crate::cie;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Planck constant, J*s (SI defining value, CODATA 2018).
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (SI defining value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant, J/K (SI defining value).
pub const BOLTZMANN_K: f64 = 1.380_649e-23;

/// Default spectral discretization: 40 uniform bins over the visible range.
pub const DEFAULT_N_BINS: usize = 40;
pub const DEFAULT_LAMBDA_MIN: f64 = 380e-9;
pub const DEFAULT_LAMBDA_MAX: f64 = 780e-9;

/// Default absorption cross-section per particle, m^2. Spans optically thin
/// through thick over the density range of decimeter-scale flames.
pub const DEFAULT_SIGMA_A: f64 = 5e-29;

/// Uniform discretization of the wavelength axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBins {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub centers: Vec<f64>,
}

impl SpectralBins {
    pub fn new(lambda_min: f64, lambda_max: f64, n_bins: usize) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_min < lambda_max) {
            return Err(Error::Config(format!(
                "invalid wavelength bounds [{lambda_min}, {lambda_max}]"
            )));
        }
        if n_bins < 3 {
            return Err(Error::Config(format!(
                "need at least 3 spectral bins, got {n_bins}"
            )));
        }
        let width = (lambda_max - lambda_min) / n_bins as f64;
        let centers = (0..n_bins)
            .map(|i| lambda_min + (i as f64 + 0.5) * width)
            .collect();
        Ok(SpectralBins {
            lambda_min,
            lambda_max,
            centers,
        })
    }

    /// 40 bins over [380, 780] nm.
    pub fn visible_default() -> Self {
        Self::new(DEFAULT_LAMBDA_MIN, DEFAULT_LAMBDA_MAX, DEFAULT_N_BINS)
            .expect("default bins are valid")
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Bin width, meters.
    pub fn width(&self) -> f64 {
        (self.lambda_max - self.lambda_min) / self.centers.len() as f64
    }
}

/// Physically admissible parameter ranges for the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRanges {
    /// Temperature bounds, K.
    pub t_min: f64,
    pub t_max: f64,
    /// Fuel density bounds, particles/m^3.
    pub d_min: f64,
    pub d_max: f64,
    /// Exposure bounds, dimensionless.
    pub s_min: f64,
    pub s_max: f64,
}

impl Default for PhysicalRanges {
    fn default() -> Self {
        PhysicalRanges {
            t_min: 300.0,
            t_max: 2300.0,
            d_min: 0.01e27,
            d_max: 500e27,
            s_min: 0.01,
            s_max: 1000.0,
        }
    }
}

impl PhysicalRanges {
    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 < self.t_min
            && self.t_min < self.t_max
            && 0.0 < self.d_min
            && self.d_min < self.d_max
            && 0.0 < self.s_min
            && self.s_min < self.s_max;
        if !ordered {
            return Err(Error::Config(format!("invalid physical ranges: {self:?}")));
        }
        Ok(())
    }
}

/// Gray (wavelength-independent) absorber with a fixed cross-section per
/// particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionModel {
    /// Absorption cross-section per particle, m^2.
    pub sigma_a: f64,
}

impl Default for AbsorptionModel {
    fn default() -> Self {
        AbsorptionModel {
            sigma_a: DEFAULT_SIGMA_A,
        }
    }
}

impl AbsorptionModel {
    pub fn new(sigma_a: f64) -> Result<Self> {
        if sigma_a <= 0.0 {
            return Err(Error::Config(format!(
                "absorption cross-section must be positive, got {sigma_a}"
            )));
        }
        Ok(AbsorptionModel { sigma_a })
    }
}

/// Spectral radiance of a black body, W * sr^-1 * m^-3 (per meter of
/// wavelength): (2 h c^2 / lambda^5) / (exp(h c / (lambda k T)) - 1).
pub fn planck_radiance(temperature: f64, wavelength: f64) -> Result<f64> {
    if temperature <= 0.0 || wavelength <= 0.0 {
        return Err(Error::Domain(format!(
            "planck radiance needs positive inputs, got T={temperature}, lambda={wavelength}"
        )));
    }
    Ok(planck_radiance_unchecked(temperature, wavelength))
}

/// [`planck_radiance`] without the domain check; hot path for the renderer,
/// caller guarantees positive inputs.
#[inline]
pub fn planck_radiance_unchecked(temperature: f64, wavelength: f64) -> f64 {
    let c2 = PLANCK_H * SPEED_OF_LIGHT / BOLTZMANN_K; // second radiation constant scale
    let x = c2 / (wavelength * temperature);
    let prefactor = 2.0 * PLANCK_H * SPEED_OF_LIGHT * SPEED_OF_LIGHT / wavelength.powi(5);
    // exp_m1 keeps precision at long wavelengths; overflow of exp(x) yields
    // +inf and a clean zero radiance.
    prefactor / x.exp_m1()
}

/// Absorption coefficient kappa = sigma_a * density, 1/m.
pub fn absorption_coefficient(density: f64, model: &AbsorptionModel) -> Result<f64> {
    if density < 0.0 {
        return Err(Error::Domain(format!(
            "density must be non-negative, got {density}"
        )));
    }
    Ok(model.sigma_a * density)
}

/// Integrate per-bin spectral radiance against the CIE 1931 color matching
/// functions (midpoint rule at the bin centers) and convert to linear sRGB.
/// Linear in its input; output units follow the input radiance.
pub fn spectrum_to_rgb(radiance: &[f64], bins: &SpectralBins) -> Result<[f64; 3]> {
    if radiance.len() != bins.len() {
        return Err(Error::Shape(format!(
            "spectrum length {} does not match {} bins",
            radiance.len(),
            bins.len()
        )));
    }
    let width = bins.width();
    let mut xyz = [0.0f64; 3];
    for (value, &lambda) in radiance.iter().zip(bins.centers.iter()) {
        let w = cie::cmf(lambda);
        xyz[0] += w[0] * value * width;
        xyz[1] += w[1] * value * width;
        xyz[2] += w[2] * value * width;
    }
    Ok(cie::xyz_to_linear_srgb(xyz))
}

/// Black-body emission integrated to linear RGB for a given temperature,
/// before the kappa emission scaling.
pub fn blackbody_rgb(temperature: f64, bins: &SpectralBins) -> Result<[f64; 3]> {
    let spectrum: Vec<f64> = bins
        .centers
        .iter()
        .map(|&l| planck_radiance_unchecked(temperature, l))
        .collect();
    spectrum_to_rgb(&spectrum, bins)
}
