//! Intermodal group delay of a hollow dielectric capillary and the resulting
//! loss of coherence between mode orders for a band-limited photon.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// First zero of J0.
pub const BESSEL_J0_ZERO: f64 = 2.405;
/// First zero of J1.
pub const BESSEL_J1_ZERO: f64 = 3.832;

/// Largest `u/(k r)` accepted by the leading-order propagation constant.
pub const PARAXIAL_LIMIT: f64 = 0.2;

/// Capillary model inputs. Lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapillaryParams {
    pub r: f64,
    pub lambda: f64,
    /// Cladding index. Enters only the attenuation and phase corrections,
    /// not the leading-order group delay; kept for completeness.
    pub n_clad: f64,
    pub u1: f64,
    pub u2: f64,
}

impl CapillaryParams {
    /// 25 µm core at 826 nm in fused silica.
    pub fn kagome_estimate() -> Self {
        CapillaryParams { r: 12.5e-6, lambda: 826e-9, n_clad: 1.45, u1: BESSEL_J0_ZERO, u2: BESSEL_J1_ZERO }
    }
}

/// Group-delay difference per unit length (s/m) between the two capillary
/// modes, `(u2² − u1²) / (2 k² r² c)`, from `β ≈ k − u²/(2 k r²)`.
pub fn capillary_intermodal_delay(p: &CapillaryParams) -> Result<f64> {
    if !(p.r > 0.0 && p.lambda > 0.0) {
        return Err(Error::invalid("capillary radius and wavelength must be positive"));
    }
    if !(p.n_clad > 1.0) {
        return Err(Error::invalid("cladding index must exceed 1"));
    }
    if !(p.u1 > 0.0 && p.u2 >= p.u1) {
        return Err(Error::invalid("mode constants must satisfy u2 ≥ u1 > 0"));
    }
    let k = 2.0 * PI / p.lambda;
    let kr = k * p.r;
    let ratio = p.u2 / kr;
    if ratio > PARAXIAL_LIMIT {
        return Err(Error::Validity(format!("u/(k r) = {ratio:.3} exceeds paraxial limit {PARAXIAL_LIMIT}")));
    }
    Ok((p.u2 * p.u2 - p.u1 * p.u1) / (2.0 * kr * kr * SPEED_OF_LIGHT))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterShape {
    Gaussian,
    Rectangular,
}

/// Band-pass filter, specified in wavelength (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralFilter {
    pub center_wavelength: f64,
    pub fwhm: f64,
    pub shape: FilterShape,
}

impl SpectralFilter {
    pub fn new(center_wavelength: f64, fwhm: f64, shape: FilterShape) -> Result<Self> {
        if !(fwhm > 0.0 && center_wavelength > 0.0) {
            return Err(Error::invalid("filter width and center must be positive"));
        }
        Ok(SpectralFilter { center_wavelength, fwhm, shape })
    }

    /// Frequency FWHM, linearized about the center wavelength.
    pub fn fwhm_hz(&self) -> f64 {
        SPEED_OF_LIGHT * self.fwhm / (self.center_wavelength * self.center_wavelength)
    }

    /// Normalized power spectral density at detuning `dnu` (Hz) from center.
    pub fn density(&self, dnu: f64) -> f64 {
        let width = self.fwhm_hz();
        match self.shape {
            FilterShape::Gaussian => {
                let sigma = width / (8.0 * 2f64.ln()).sqrt();
                (-(dnu * dnu) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
            }
            FilterShape::Rectangular => {
                if dnu.abs() <= 0.5 * width {
                    1.0 / width
                } else {
                    0.0
                }
            }
        }
    }
}

/// `|∫ S(ν) e^{i2πντ} dν|` at `τ = delay_per_m · length_m`.
pub fn coherence_factor(delay_per_m: f64, length_m: f64, filter: &SpectralFilter) -> f64 {
    let tau = (delay_per_m * length_m).abs();
    let x = PI * filter.fwhm_hz() * tau;
    match filter.shape {
        FilterShape::Gaussian => (-(x * x) / (4.0 * 2f64.ln())).exp(),
        FilterShape::Rectangular => {
            if x == 0.0 {
                1.0
            } else {
                (x.sin() / x).abs()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kagome_capillary_delay() {
        let d = capillary_intermodal_delay(&CapillaryParams::kagome_estimate()).unwrap();
        assert!((d * 1e12 - 1.64).abs() < 0.005, "{}", d * 1e12);
        assert!((d * 1e12 - 1.6).abs() / 1.6 < 0.05);
    }

    #[test]
    fn delay_scales_as_inverse_radius_squared() {
        let p = CapillaryParams::kagome_estimate();
        let d1 = capillary_intermodal_delay(&p).unwrap();
        let d10 = capillary_intermodal_delay(&CapillaryParams { r: 10.0 * p.r, ..p }).unwrap();
        assert!((d1 / d10 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_modes_have_no_delay() {
        let p = CapillaryParams { u2: BESSEL_J0_ZERO, ..CapillaryParams::kagome_estimate() };
        assert_eq!(capillary_intermodal_delay(&p).unwrap(), 0.0);
    }

    #[test]
    fn non_paraxial_core_is_rejected() {
        let p = CapillaryParams { r: 1e-6, ..CapillaryParams::kagome_estimate() };
        assert!(matches!(capillary_intermodal_delay(&p), Err(Error::Validity(_))));
        let bad = CapillaryParams { u1: 4.0, ..CapillaryParams::kagome_estimate() };
        assert!(capillary_intermodal_delay(&bad).is_err());
    }

    #[test]
    fn coherence_limits() {
        let f = SpectralFilter::new(826e-9, 1e-9, FilterShape::Gaussian).unwrap();
        assert_eq!(coherence_factor(1.5e-12, 0.0, &f), 1.0);
        let coherence_time = 1.0 / f.fwhm_hz();
        assert!(coherence_factor(1000.0 * coherence_time, 1.0, &f) < 1e-3);
        assert!(SpectralFilter::new(826e-9, 0.0, FilterShape::Gaussian).is_err());
    }
}
