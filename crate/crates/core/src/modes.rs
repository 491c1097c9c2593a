//! Hermite-Gaussian modes at the beam waist and mode-amplitude vectors.
//!
//! The one-dimensional factor of order `m` is
//!
//! ```text
//! u_m(x) = (2/π)^{1/4} (2^m m! w0)^{-1/2} H_m(√2 x / w0) exp(-x²/w0²)
//! ```
//!
//! so that `HG_{m,n}(x, y) = u_m(x) u_n(y)` has unit L² norm. Modes are real
//! with a positive lobe on the positive axis (`H_m` has a positive leading
//! coefficient); all phase-sensitive comparisons are made modulo a global
//! phase.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial orders `(m, n)` of `HG_{m,n}` in x and y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    pub m: u32,
    pub n: u32,
}

impl ModeIndex {
    pub const HG00: ModeIndex = ModeIndex { m: 0, n: 0 };
    pub const HG10: ModeIndex = ModeIndex { m: 1, n: 0 };
    pub const HG01: ModeIndex = ModeIndex { m: 0, n: 1 };

    pub const fn new(m: u32, n: u32) -> Self {
        ModeIndex { m, n }
    }

    pub fn order(&self) -> u32 {
        self.m + self.n
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HG{}{}", self.m, self.n)
    }
}

/// Waist of the Hermite-Gauss basis at the analysis plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    w0: f64,
}

impl BeamGeometry {
    pub fn new(w0: f64) -> Result<Self> {
        if !(w0.is_finite() && w0 > 0.0) {
            return Err(Error::invalid(format!("beam waist must be positive, got {w0}")));
        }
        Ok(BeamGeometry { w0 })
    }

    /// Waist in meters.
    pub fn w0(&self) -> f64 {
        self.w0
    }
}

/// Ordered, duplicate-free list of modes shared by both arms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ModeIndex>", into = "Vec<ModeIndex>")]
pub struct Basis(Vec<ModeIndex>);

impl Basis {
    pub fn new(modes: Vec<ModeIndex>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::invalid("basis must not be empty"));
        }
        for (i, a) in modes.iter().enumerate() {
            if modes[..i].contains(a) {
                return Err(Error::invalid(format!("duplicate mode {a} in basis")));
            }
        }
        Ok(Basis(modes))
    }

    /// `{HG00, HG10, HG01}`.
    pub fn lowest_three() -> Self {
        Basis(vec![ModeIndex::HG00, ModeIndex::HG10, ModeIndex::HG01])
    }

    /// `{HG00, HG10, HG01}` followed by `HG_{m,0}` for `2 ≤ m ≤ max_m`.
    ///
    /// Used where the x-profile must be resolved beyond first order (the
    /// offset-plate dip experiment).
    pub fn lowest_three_plus_x_line(max_m: u32) -> Self {
        let mut modes = vec![ModeIndex::HG00, ModeIndex::HG10, ModeIndex::HG01];
        modes.extend((2..=max_m).map(|m| ModeIndex::new(m, 0)));
        Basis(modes)
    }

    /// Every mode with `m + n ≤ max_order`, ordered by order then by `n`.
    pub fn up_to_order(max_order: u32) -> Self {
        let mut modes = Vec::new();
        for order in 0..=max_order {
            for n in 0..=order {
                modes.push(ModeIndex::new(order - n, n));
            }
        }
        Basis(modes)
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, idx: ModeIndex) -> Option<usize> {
        self.0.iter().position(|&m| m == idx)
    }

    pub fn max_m(&self) -> u32 {
        self.0.iter().map(|i| i.m).max().unwrap_or(0)
    }

    pub fn max_n(&self) -> u32 {
        self.0.iter().map(|i| i.n).max().unwrap_or(0)
    }

    /// Positions of `HG10` and `HG01` when both are present.
    pub fn degenerate_pair(&self) -> Option<(usize, usize)> {
        Some((self.position(ModeIndex::HG10)?, self.position(ModeIndex::HG01)?))
    }
}

impl TryFrom<Vec<ModeIndex>> for Basis {
    type Error = Error;
    fn try_from(v: Vec<ModeIndex>) -> Result<Self> {
        Basis::new(v)
    }
}

impl From<Basis> for Vec<ModeIndex> {
    fn from(b: Basis) -> Self {
        b.0
    }
}

/// Values `u_0(x) ..= u_max(x)` of the normalized 1-D Hermite-Gauss functions.
///
/// Uses the three-term recurrence on the normalized functions, which stays
/// finite for large orders where `H_m` alone would overflow.
pub fn hermite_gauss_1d(max_order: u32, x: f64, w0: f64, out: &mut Vec<f64>) {
    out.clear();
    let xi = std::f64::consts::SQRT_2 * x / w0;
    let u0 = (2.0 / PI).powf(0.25) / w0.sqrt() * (-(x * x) / (w0 * w0)).exp();
    out.push(u0);
    if max_order == 0 {
        return;
    }
    out.push(std::f64::consts::SQRT_2 * xi * u0);
    for m in 2..=max_order as usize {
        let mf = m as f64;
        let next = (2.0 / mf).sqrt() * xi * out[m - 1] - ((mf - 1.0) / mf).sqrt() * out[m - 2];
        out.push(next);
    }
}

/// Single normalized 1-D Hermite-Gauss function `u_m(x)`.
pub fn hermite_gauss(m: u32, x: f64, w0: f64) -> f64 {
    let mut buf = Vec::with_capacity(m as usize + 1);
    hermite_gauss_1d(m, x, w0, &mut buf);
    buf[m as usize]
}

/// Unit-normalized `HG_{m,n}` evaluated at `(x, y)` on the waist plane.
pub fn hg_eval(idx: ModeIndex, x: f64, y: f64, geom: BeamGeometry) -> Complex64 {
    let w0 = geom.w0();
    Complex64::new(hermite_gauss(idx.m, x, w0) * hermite_gauss(idx.n, y, w0), 0.0)
}

/// Complex amplitudes over a truncated Hermite-Gauss basis.
///
/// Amplitudes are physical coupling coefficients, so the squared norm may be
/// below one when power leaks into truncated modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    basis: Basis,
    amplitudes: Vec<Complex64>,
    geom: BeamGeometry,
}

impl ModeVector {
    pub fn new(basis: Basis, amplitudes: Vec<Complex64>, geom: BeamGeometry) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), actual: amplitudes.len() });
        }
        Ok(ModeVector { basis, amplitudes, geom })
    }

    pub fn from_real(basis: Basis, amplitudes: &[f64], geom: BeamGeometry) -> Result<Self> {
        Self::new(basis, amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect(), geom)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn geom(&self) -> BeamGeometry {
        self.geom
    }

    pub fn amplitude(&self, idx: ModeIndex) -> Option<Complex64> {
        self.basis.position(idx).map(|i| self.amplitudes[i])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn scaled(&self, c: Complex64) -> ModeVector {
        ModeVector {
            basis: self.basis.clone(),
            amplitudes: self.amplitudes.iter().map(|a| a * c).collect(),
            geom: self.geom,
        }
    }

    /// Zeroes every component outside `subspace` and rescales to unit norm.
    pub fn restrict_normalized(&self, subspace: &[ModeIndex]) -> Result<ModeVector> {
        let amplitudes: Vec<Complex64> = self
            .basis
            .modes()
            .iter()
            .zip(&self.amplitudes)
            .map(|(m, &a)| if subspace.contains(m) { a } else { Complex64::new(0.0, 0.0) })
            .collect();
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::invalid("analyzer vector has no weight in the requested subspace"));
        }
        Ok(ModeVector {
            basis: self.basis.clone(),
            amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
            geom: self.geom,
        })
    }

    /// Largest componentwise deviation after removing the best global phase.
    pub fn distance_up_to_phase(&self, other: &ModeVector) -> f64 {
        let overlap: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { Complex64::new(1.0, 0.0) };
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a * phase - b).norm())
            .fold(0.0, f64::max)
    }
}
