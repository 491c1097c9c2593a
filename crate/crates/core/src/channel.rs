//! One-arm fiber channel acting on the photon in arm A.
//!
//! The channel is applied in four steps: per-mode amplitude transmission, a
//! rotation inside `{HG10, HG01}`, dephasing between different mode orders,
//! and axis-aligned dephasing of the degenerate pair. The output is left
//! sub-normalized; its trace is the probability that the pair survives.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dispersion::{coherence_factor, FilterShape, SpectralFilter};
use crate::error::{Error, Result};
use crate::modes::Basis;
use crate::state::{DensityOperator, TwoPhotonState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Fiber channel parameters. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberChannel {
    pub length_m: f64,
    /// Amplitude transmission per basis mode, in basis order.
    pub t: Vec<f64>,
    /// Rotation of the mode pattern within `{HG10, HG01}` (counter-clockwise).
    pub theta_rot: f64,
    /// Strength of axis-aligned dephasing of the degenerate pair.
    pub mix: f64,
    /// Principal-axis angle of the dephasing, measured like `theta_rot`.
    pub mix_axis: f64,
    /// Coherence factor between different mode orders.
    pub gamma: f64,
}

impl FiberChannel {
    pub fn ideal(basis: &Basis) -> Self {
        FiberChannel { length_m: 0.0, t: vec![1.0; basis.len()], theta_rot: 0.0, mix: 0.0, mix_axis: 0.0, gamma: 1.0 }
    }

    /// Transmission assigned by mode order; the last entry covers all
    /// higher orders.
    pub fn transmission_by_order(basis: &Basis, by_order: &[f64]) -> Result<Vec<f64>> {
        let last = *by_order.last().ok_or_else(|| Error::invalid("transmission list is empty"))?;
        Ok(basis
            .modes()
            .iter()
            .map(|m| by_order.get(m.order() as usize).copied().unwrap_or(last))
            .collect())
    }

    pub fn validate(&self, basis: &Basis) -> Result<()> {
        if self.t.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), actual: self.t.len() });
        }
        if let Some(bad) = self.t.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::invalid(format!("transmission {bad} outside (0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.mix) {
            return Err(Error::invalid(format!("mix {} outside [0, 1]", self.mix)));
        }
        if !(self.theta_rot.is_finite() && self.mix_axis.is_finite() && self.length_m >= 0.0) {
            return Err(Error::invalid("channel angles must be finite and length non-negative"));
        }
        let has_pair = basis.degenerate_pair().is_some();
        let one_of_pair = basis.position(crate::modes::ModeIndex::HG10).is_some()
            || basis.position(crate::modes::ModeIndex::HG01).is_some();
        if !has_pair && one_of_pair && (self.theta_rot != 0.0 || self.mix != 0.0) {
            return Err(Error::invalid("rotation and mixing need both HG10 and HG01 in the basis"));
        }
        Ok(())
    }

    /// Amplitude operator on arm A: rotation after transmission.
    fn amplitude_operator(&self, basis: &Basis) -> DMatrix<Complex64> {
        let d = basis.len();
        let mut k = DMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(self.t[i], 0.0) } else { ZERO });
        if let Some((i10, i01)) = basis.degenerate_pair() {
            let (s, c) = self.theta_rot.sin_cos();
            let mut rot = DMatrix::<Complex64>::identity(d, d);
            rot[(i10, i10)] = Complex64::new(c, 0.0);
            rot[(i01, i10)] = Complex64::new(s, 0.0);
            rot[(i10, i01)] = Complex64::new(-s, 0.0);
            rot[(i01, i01)] = Complex64::new(c, 0.0);
            k = rot * k;
        }
        k
    }

    /// Kraus pair for full axis-aligned dephasing of the degenerate pair:
    /// `K1 = P_e1 + P_rest/√2`, `K2 = P_e2 + P_rest/√2`, with
    /// `e1 = cos χ HG10 + sin χ HG01` and `e2 = −sin χ HG10 + cos χ HG01`.
    fn dephasing_kraus(&self, basis: &Basis) -> Option<[DMatrix<Complex64>; 2]> {
        let (i10, i01) = basis.degenerate_pair()?;
        let d = basis.len();
        let (s, c) = self.mix_axis.sin_cos();
        let e1 = [(i10, c), (i01, s)];
        let e2 = [(i10, -s), (i01, c)];
        let rest = DMatrix::from_fn(d, d, |i, j| {
            if i == j && i != i10 && i != i01 {
                Complex64::new(FRAC_1_SQRT_2, 0.0)
            } else {
                ZERO
            }
        });
        let projector = |e: &[(usize, f64); 2]| {
            let mut p = rest.clone();
            for &(i, a) in e {
                for &(j, b) in e {
                    p[(i, j)] += Complex64::new(a * b, 0.0);
                }
            }
            p
        };
        Some([projector(&e1), projector(&e2)])
    }
}

/// Applies the channel to arm A of a pure state.
pub fn apply_channel_arm_a(state: &TwoPhotonState, ch: &FiberChannel) -> Result<DensityOperator> {
    apply_channel_to_density(&DensityOperator::from_pure(state), ch)
}

/// Applies the channel to arm A of an arbitrary bipartite density operator.
pub fn apply_channel_to_density(rho: &DensityOperator, ch: &FiberChannel) -> Result<DensityOperator> {
    let basis = rho.basis().clone();
    ch.validate(&basis)?;
    let d = basis.len();

    let k = ch.amplitude_operator(&basis);
    let mut out = DensityOperator::new(basis.clone(), rho.conjugate_arm_a(&k))?;

    if ch.gamma < 1.0 {
        let orders: Vec<u32> = basis.modes().iter().map(|m| m.order()).collect();
        let m = out.matrix_mut();
        for r in 0..d * d {
            for c in 0..d * d {
                if orders[r / d] != orders[c / d] {
                    m[(r, c)] *= ch.gamma;
                }
            }
        }
    }

    if ch.mix > 0.0 {
        if let Some(kraus) = ch.dephasing_kraus(&basis) {
            let mut dephased = DMatrix::from_element(d * d, d * d, ZERO);
            for kr in &kraus {
                dephased += out.conjugate_arm_a(kr);
            }
            let mixed = out.matrix().scale(1.0 - ch.mix) + dephased.scale(ch.mix);
            *out.matrix_mut() = mixed;
        }
    }
    Ok(out)
}

/// Distance of `Σ K†K` from the identity.
#[cfg(test)]
fn kraus_completeness(ch: &FiberChannel, basis: &Basis) -> f64 {
    let d = basis.len();
    let [k1, k2] = ch.dephasing_kraus(basis).unwrap();
    let sum = k1.adjoint() * &k1 + k2.adjoint() * &k2;
    (sum - DMatrix::<Complex64>::identity(d, d)).norm()
}

/// Inputs from which the inter-order coherence factor is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSource {
    pub delay_ps_per_m: f64,
    pub center_nm: f64,
    pub fwhm_nm: f64,
    pub shape: FilterShape,
}

impl DispersionSource {
    pub fn gamma(&self, length_m: f64) -> Result<f64> {
        let filter = SpectralFilter::new(self.center_nm * 1e-9, self.fwhm_nm * 1e-9, self.shape)?;
        Ok(coherence_factor(self.delay_ps_per_m * 1e-12, length_m, &filter))
    }
}

/// Stored channel preset (`presets/*.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelPreset {
    pub version: u32,
    pub name: String,
    pub description: String,
    pub length_m: f64,
    pub t_by_order: Vec<f64>,
    pub theta_rot_deg: f64,
    pub mix: f64,
    pub mix_axis_deg: f64,
    pub gamma_from: DispersionSource,
}

impl ChannelPreset {
    pub fn channel(&self, basis: &Basis) -> Result<FiberChannel> {
        let ch = FiberChannel {
            length_m: self.length_m,
            t: FiberChannel::transmission_by_order(basis, &self.t_by_order)?,
            theta_rot: self.theta_rot_deg.to_radians(),
            mix: self.mix,
            mix_axis: self.mix_axis_deg.to_radians(),
            gamma: self.gamma_from.gamma(self.length_m)?,
        };
        ch.validate(basis)?;
        Ok(ch)
    }
}

pub const PAPER_30CM_JSON: &str = include_str!("../presets/paper-30cm.json");

/// The 30 cm hollow-core fiber preset.
pub fn paper_30cm_preset() -> ChannelPreset {
    serde_json::from_str(PAPER_30CM_JSON).expect("bundled preset is valid")
}

/// Resolves a preset name (`ideal` or `paper-30cm`) for `basis`.
pub fn preset_channel(name: &str, basis: &Basis) -> Result<FiberChannel> {
    match name {
        "ideal" => Ok(FiberChannel::ideal(basis)),
        "paper-30cm" => paper_30cm_preset().channel(basis),
        other => Err(Error::invalid(format!("unknown channel preset `{other}`"))),
    }
}

/// Gaussian 1 nm filter at 826.1 nm.
pub fn bandpass_1nm() -> SpectralFilter {
    SpectralFilter { center_wavelength: 826.1e-9, fwhm: 1e-9, shape: FilterShape::Gaussian }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::ModeIndex;
    use crate::state::{purity, spdc_state, uniform_spdc_state, Arm};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn bell_pair() -> TwoPhotonState {
        spdc_state(&[(ModeIndex::HG00, c(0.0)), (ModeIndex::HG10, c(1.0)), (ModeIndex::HG01, c(1.0))]).unwrap()
    }

    #[test]
    fn identity_channel_returns_pure_state() {
        let s = uniform_spdc_state(&Basis::lowest_three()).unwrap();
        let rho = apply_channel_arm_a(&s, &FiberChannel::ideal(s.basis())).unwrap();
        assert!((rho.matrix() - DensityOperator::from_pure(&s).matrix()).norm() < 1e-15);
        assert!((rho.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_first_order_loss_is_a_global_factor_on_the_pair() {
        let s = bell_pair();
        let ch = FiberChannel { t: vec![1.0, 0.92f64.sqrt(), 0.92f64.sqrt()], ..FiberChannel::ideal(s.basis()) };
        let rho = apply_channel_arm_a(&s, &ch).unwrap();
        assert!((rho.trace() - 0.92).abs() < 1e-14);
        let renorm = rho.normalized().unwrap();
        assert!((renorm.matrix() - DensityOperator::from_pure(&s).matrix()).norm() < 1e-14);
        assert!((purity(&renorm.partial_trace(Arm::A)) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn full_inter_order_dephasing_removes_coherence() {
        let s = spdc_state(&[(ModeIndex::HG00, c(1.0)), (ModeIndex::HG10, c(1.0)), (ModeIndex::HG01, c(0.0))]).unwrap();
        let ch = FiberChannel { gamma: 0.0, ..FiberChannel::ideal(s.basis()) };
        let rho = apply_channel_arm_a(&s, &ch).unwrap().normalized().unwrap();
        // |00,00⟩ ↔ row 0, |10,10⟩ ↔ row 4
        assert_eq!(rho.matrix()[(0, 4)], ZERO);
        assert!((rho.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((rho.matrix()[(4, 4)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dephasing_kraus_pair_is_trace_preserving() {
        let basis = Basis::lowest_three_plus_x_line(4);
        for axis in [0.0, 0.3, 1.2] {
            let ch = FiberChannel { mix_axis: axis, ..FiberChannel::ideal(&basis) };
            assert!(kraus_completeness(&ch, &basis) < 1e-14);
        }
    }

    #[test]
    fn rotations_compose() {
        let s = uniform_spdc_state(&Basis::lowest_three()).unwrap();
        let rot = |t: f64| FiberChannel { theta_rot: t, ..FiberChannel::ideal(s.basis()) };
        let once = apply_channel_arm_a(&s, &rot(0.5)).unwrap();
        let twice = apply_channel_to_density(&apply_channel_arm_a(&s, &rot(0.2)).unwrap(), &rot(0.3)).unwrap();
        assert!((once.matrix() - twice.matrix()).norm() < 1e-10);
    }

    #[test]
    fn invalid_channels_are_rejected() {
        let basis = Basis::lowest_three();
        let s = uniform_spdc_state(&basis).unwrap();
        let base = FiberChannel::ideal(&basis);
        for ch in [
            FiberChannel { t: vec![1.0, 0.0, 1.0], ..base.clone() },
            FiberChannel { t: vec![1.0, 1.0], ..base.clone() },
            FiberChannel { gamma: 1.5, ..base.clone() },
            FiberChannel { mix: -0.1, ..base.clone() },
        ] {
            assert!(apply_channel_arm_a(&s, &ch).is_err());
        }
        let lonely = Basis::new(vec![ModeIndex::HG00, ModeIndex::HG10]).unwrap();
        let rot = FiberChannel { theta_rot: 0.1, ..FiberChannel::ideal(&lonely) };
        assert!(rot.validate(&lonely).is_err());
    }

    #[test]
    fn thirty_cm_preset_loads() {
        let basis = Basis::lowest_three();
        let ch = preset_channel("paper-30cm", &basis).unwrap();
        assert!((ch.t[1] * ch.t[1] - 0.92).abs() < 1e-12);
        assert!((ch.gamma - 0.87).abs() < 0.005);
        assert!(preset_channel("nope", &basis).is_err());
        let wide = Basis::lowest_three_plus_x_line(6);
        let ch = preset_channel("paper-30cm", &wide).unwrap();
        assert!((ch.t[5] - ch.t[1]).abs() < 1e-15);
    }
}
