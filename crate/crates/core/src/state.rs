//! Bipartite two-photon states on a truncated mode basis.
//!
//! Product index convention: `|j⟩_A |k⟩_B` ↔ row `j * d + k`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{Basis, ModeIndex};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Pure normalized state `Σ C[j][k] |HG_j⟩_A |HG_k⟩_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    basis: Basis,
    coeffs: DMatrix<Complex64>,
}

impl TwoPhotonState {
    /// Normalizes `coeffs` (rows: arm A, columns: arm B).
    pub fn new(basis: Basis, coeffs: DMatrix<Complex64>) -> Result<Self> {
        let d = basis.len();
        if coeffs.nrows() != d || coeffs.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: coeffs.nrows().max(coeffs.ncols()) });
        }
        let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::ZeroState);
        }
        Ok(TwoPhotonState { basis, coeffs: coeffs.unscale(norm) })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn coeffs(&self) -> &DMatrix<Complex64> {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// State vector in the product basis.
    pub fn to_vector(&self) -> DVector<Complex64> {
        let d = self.dim();
        DVector::from_fn(d * d, |r, _| self.coeffs[(r / d, r % d)])
    }
}

/// Schmidt-form state `Σ_j λ_j |HG_j⟩_A |HG_j⟩_B`, normalized.
///
/// The basis is the list of modes in the order given.
pub fn spdc_state(schmidt: &[(ModeIndex, Complex64)]) -> Result<TwoPhotonState> {
    let basis = Basis::new(schmidt.iter().map(|(m, _)| *m).collect())?;
    spdc_state_on(&basis, schmidt)
}

/// Schmidt-form state on a given basis; modes absent from `schmidt` get zero weight.
pub fn spdc_state_on(basis: &Basis, schmidt: &[(ModeIndex, Complex64)]) -> Result<TwoPhotonState> {
    let d = basis.len();
    let mut coeffs = DMatrix::from_element(d, d, ZERO);
    for &(mode, lambda) in schmidt {
        let j = basis
            .position(mode)
            .ok_or_else(|| Error::invalid(format!("Schmidt mode {mode} not in basis")))?;
        coeffs[(j, j)] += lambda;
    }
    TwoPhotonState::new(basis.clone(), coeffs)
}

/// Equal-weight Schmidt state over every mode of `basis`.
pub fn uniform_spdc_state(basis: &Basis) -> Result<TwoPhotonState> {
    let schmidt: Vec<_> = basis.modes().iter().map(|&m| (m, Complex64::new(1.0, 0.0))).collect();
    spdc_state_on(basis, &schmidt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    A,
    B,
}

/// Possibly sub-normalized bipartite density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    basis: Basis,
    rho: DMatrix<Complex64>,
}

impl DensityOperator {
    pub fn new(basis: Basis, rho: DMatrix<Complex64>) -> Result<Self> {
        let d2 = basis.len() * basis.len();
        if rho.nrows() != d2 || rho.ncols() != d2 {
            return Err(Error::DimensionMismatch { expected: d2, actual: rho.nrows() });
        }
        Ok(DensityOperator { basis, rho })
    }

    pub fn from_pure(state: &TwoPhotonState) -> Self {
        let v = state.to_vector();
        DensityOperator { basis: state.basis().clone(), rho: &v * v.adjoint() }
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.rho
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    /// Copy rescaled to unit trace (post-selection on surviving pairs).
    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace();
        if !(t > 0.0) {
            return Err(Error::ZeroState);
        }
        Ok(DensityOperator { basis: self.basis.clone(), rho: self.rho.unscale(t) })
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.rho.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.rho + self.rho.adjoint()).scale(0.5);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Reduced state of one arm (d × d), trace preserved.
    pub fn partial_trace(&self, keep: Arm) -> DMatrix<Complex64> {
        partial_trace(self, keep)
    }

    /// `(K ⊗ I) ρ (K ⊗ I)†` for a d × d operator `K` acting on arm A.
    pub fn conjugate_arm_a(&self, k: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = self.dim();
        let n = d * d;
        // left: (K ⊗ I) ρ
        let mut left = DMatrix::from_element(n, n, ZERO);
        for j in 0..d {
            for a in 0..d {
                let kja = k[(j, a)];
                if kja == ZERO {
                    continue;
                }
                for b in 0..d {
                    let (row_out, row_in) = (j * d + b, a * d + b);
                    for c in 0..n {
                        left[(row_out, c)] += kja * self.rho[(row_in, c)];
                    }
                }
            }
        }
        // right: · (K ⊗ I)†
        let mut out = DMatrix::from_element(n, n, ZERO);
        for j in 0..d {
            for a in 0..d {
                let kja = k[(j, a)].conj();
                if kja == ZERO {
                    continue;
                }
                for b in 0..d {
                    let (col_out, col_in) = (j * d + b, a * d + b);
                    for r in 0..n {
                        out[(r, col_out)] += left[(r, col_in)] * kja;
                    }
                }
            }
        }
        out
    }
}

/// Standard partial trace over the arm not kept.
pub fn partial_trace(rho: &DensityOperator, keep: Arm) -> DMatrix<Complex64> {
    let d = rho.dim();
    let m = rho.matrix();
    DMatrix::from_fn(d, d, |i, j| {
        (0..d)
            .map(|k| match keep {
                Arm::A => m[(i * d + k, j * d + k)],
                Arm::B => m[(k * d + i, k * d + j)],
            })
            .sum()
    })
}

/// Purity `tr(σ²)` of a single-arm density matrix after normalization.
pub fn purity(sigma: &DMatrix<Complex64>) -> f64 {
    let t = sigma.trace().re;
    (sigma * sigma).trace().re / (t * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn hermitian_eigs(m: &DMatrix<Complex64>) -> Vec<f64> {
        let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    #[test]
    fn default_three_mode_state_reduces_to_maximally_mixed() {
        let basis = Basis::lowest_three();
        let s = uniform_spdc_state(&basis).unwrap();
        let rho = DensityOperator::from_pure(&s);
        assert!((rho.trace() - 1.0).abs() < 1e-14);
        for arm in [Arm::A, Arm::B] {
            let ev = hermitian_eigs(&rho.partial_trace(arm));
            for e in ev {
                assert!((e - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_bell_state_is_maximally_entangled() {
        let s = spdc_state(&[(ModeIndex::HG00, c(0.0)), (ModeIndex::HG10, c(1.0)), (ModeIndex::HG01, c(1.0))]).unwrap();
        assert!((s.coeffs()[(1, 1)].re - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let sigma = DensityOperator::from_pure(&s).partial_trace(Arm::A);
        assert!((purity(&sigma) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn product_state_has_pure_marginal() {
        let s = spdc_state(&[(ModeIndex::HG00, c(1.0)), (ModeIndex::HG10, c(0.0)), (ModeIndex::HG01, c(0.0))]).unwrap();
        let sigma = DensityOperator::from_pure(&s).partial_trace(Arm::B);
        assert!((purity(&sigma) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_state_is_rejected() {
        let r = spdc_state(&[(ModeIndex::HG00, c(0.0)), (ModeIndex::HG10, c(0.0))]);
        assert!(matches!(r, Err(Error::ZeroState)));
    }

    #[test]
    fn partial_trace_preserves_trace_for_mixed_input() {
        let basis = Basis::lowest_three();
        let s = uniform_spdc_state(&basis).unwrap();
        let mut rho = DensityOperator::from_pure(&s);
        *rho.matrix_mut() = rho.matrix().scale(0.7);
        for arm in [Arm::A, Arm::B] {
            assert!((rho.partial_trace(arm).trace().re - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn conjugate_arm_a_matches_kronecker_product() {
        let basis = Basis::lowest_three();
        let s = TwoPhotonState::new(
            basis.clone(),
            DMatrix::from_fn(3, 3, |i, j| Complex64::new(i as f64 + 0.3 * j as f64, 0.2 * (i * j) as f64 - 0.1)),
        )
        .unwrap();
        let rho = DensityOperator::from_pure(&s);
        let k = DMatrix::from_fn(3, 3, |i, j| Complex64::new((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.05));
        let kron = k.kronecker(&DMatrix::<Complex64>::identity(3, 3));
        let direct = &kron * rho.matrix() * kron.adjoint();
        assert!((rho.conjugate_arm_a(&k) - direct).norm() < 1e-13);
    }
}
