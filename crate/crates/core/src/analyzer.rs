//! Detection arm: step phase plate followed by single-mode-fiber projection.
//!
//! Angle convention (looking along the beam, x to the right, y up):
//!
//! ```text
//!            +y  normal n = (sin φ, cos φ)
//!             ^   ^
//!             |  /      half-plane n·r > Δ_pp gets a π phase
//!             | / φ
//!   ----------+----------> +x
//!             |
//! ```
//!
//! With this choice a centered plate at angle `φ` projects onto
//! `sin φ |HG10⟩ + cos φ |HG01⟩` within the first-order subspace. The
//! detection fiber is displaced by `Δ_smf` along the same normal.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::{phase_plate_apply, project, DisplacedGaussian, TransverseField};
use crate::modes::{Basis, BeamGeometry, ModeIndex, ModeVector};
use crate::quadrature::Integrator;

/// Configuration of one analyzer arm. Angles in radians, lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    pub phi: f64,
    pub delta_pp: f64,
    pub delta_smf: f64,
    pub geom: BeamGeometry,
    pub plate_present: bool,
}

impl AnalyzerSetting {
    /// Plate and fiber both on axis.
    pub fn centered(phi: f64, geom: BeamGeometry) -> Self {
        AnalyzerSetting { phi, delta_pp: 0.0, delta_smf: 0.0, geom, plate_present: true }
    }

    /// Bare single-mode fiber displaced by `delta_smf` along `(sin φ, cos φ)`.
    pub fn gaussian_probe(phi: f64, delta_smf: f64, geom: BeamGeometry) -> Self {
        AnalyzerSetting { phi, delta_pp: 0.0, delta_smf, geom, plate_present: false }
    }

    /// The same analyzer with the plate turned by 90°.
    pub fn perpendicular(&self) -> Self {
        AnalyzerSetting { phi: self.phi + std::f64::consts::FRAC_PI_2, ..*self }
    }

    /// Field that the detector couples to, expressed in the lab frame.
    pub fn detection_field(&self) -> Box<dyn TransverseField + Send> {
        let (nx, ny) = (self.phi.sin(), self.phi.cos());
        let gauss = DisplacedGaussian { dx: self.delta_smf * nx, dy: self.delta_smf * ny, geom: self.geom };
        if self.plate_present {
            Box::new(phase_plate_apply(gauss, self.phi, self.delta_pp))
        } else {
            Box::new(gauss)
        }
    }
}

/// Coupling amplitudes `a_j = ⟨HG_j | plate† | G(Δ_smf)⟩` by quadrature.
///
/// These are physical coupling efficiencies (norm ≤ 1); see
/// [`ModeVector::restrict_normalized`] for the renormalized form used in
/// correlation estimates.
pub fn analyzer_vector(setting: &AnalyzerSetting, basis: &Basis, integrator: &Integrator) -> Result<ModeVector> {
    let field = setting.detection_field();
    let amplitudes = project(integrator, basis, field.as_ref())?;
    ModeVector::new(basis.clone(), amplitudes, setting.geom)
}

/// The first-order degenerate pair `{HG10, HG01}`.
pub const DEGENERATE_PAIR: [ModeIndex; 2] = [ModeIndex::HG10, ModeIndex::HG01];

/// Analyzer vector renormalized within `{HG10, HG01}`.
pub fn degenerate_analyzer_vector(setting: &AnalyzerSetting, basis: &Basis, integrator: &Integrator) -> Result<ModeVector> {
    analyzer_vector(setting, basis, integrator)?.restrict_normalized(&DEGENERATE_PAIR)
}
