//! CHSH analysis with centered step-plate analyzers.
//!
//! Each correlation uses four plate settings: `(a, b)`, `(a, b⊥)`,
//! `(a⊥, b)`, `(a⊥, b⊥)`, where `⊥` is the plate turned by 90°. Analyzer
//! vectors are renormalized within `{HG10, HG01}`; the common coupling
//! efficiency only enters simulated counts.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix4;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::{analyzer_vector, AnalyzerSetting};
use crate::error::{Error, Result};
use crate::measurement::{simulate_counts, DetectionConfig};
use crate::modes::{Basis, ModeVector};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::quadrature::Integrator;
use crate::state::DensityOperator;

/// Plate angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl ChshSettings {
    pub fn from_degrees(alpha1: f64, alpha2: f64, beta1: f64, beta2: f64) -> Self {
        ChshSettings {
            alpha1: alpha1.to_radians(),
            alpha2: alpha2.to_radians(),
            beta1: beta1.to_radians(),
            beta2: beta2.to_radians(),
        }
    }

    pub fn to_degrees(&self) -> [f64; 4] {
        [self.alpha1, self.alpha2, self.beta1, self.beta2].map(f64::to_degrees)
    }

    /// Correlation pairs in the order `(α1β1, α1β2, α2β1, α2β2)`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [(self.alpha1, self.beta1), (self.alpha1, self.beta2), (self.alpha2, self.beta1), (self.alpha2, self.beta2)]
    }

    /// Every angle reduced to `[0, π)`; plate projectors are π-periodic.
    pub fn reduced(&self) -> Self {
        let r = |a: f64| {
            let v = a.rem_euclid(PI);
            if v >= PI - 1e-12 {
                0.0
            } else {
                v
            }
        };
        ChshSettings { alpha1: r(self.alpha1), alpha2: r(self.alpha2), beta1: r(self.beta1), beta2: r(self.beta2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellResult {
    pub settings: ChshSettings,
    pub e_values: [f64; 4],
    pub s: f64,
    pub delta_s: f64,
    /// Per correlation: `N(a,b), N(a,b⊥), N(a⊥,b), N(a⊥,b⊥)`.
    pub counts: [f64; 16],
}

/// `E = (N_ab + N_a⊥b⊥ − N_a⊥b − N_ab⊥) / ΣN` with counts ordered
/// `[N_ab, N_ab⊥, N_a⊥b, N_a⊥b⊥]`.
pub fn correlation_e(n: [f64; 4]) -> Result<f64> {
    let total: f64 = n.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotal);
    }
    Ok((n[0] + n[3] - n[1] - n[2]) / total)
}

/// `S = E11 − E12 + E21 + E22`.
pub fn s_from_e(e: [f64; 4]) -> f64 {
    e[0] - e[1] + e[2] + e[3]
}

const S_SIGNS: [f64; 4] = [1.0, -1.0, 1.0, 1.0];

/// Linearized Poisson uncertainty of S, `ΔN_i = √N_i`.
pub fn delta_s(counts: &[f64; 16]) -> Result<f64> {
    let mut var = 0.0;
    for (k, sign) in S_SIGNS.iter().enumerate() {
        let n = &counts[4 * k..4 * k + 4];
        let total: f64 = n.iter().sum();
        let e = correlation_e([n[0], n[1], n[2], n[3]])?;
        let grads = [(1.0 - e) / total, -(1.0 + e) / total, -(1.0 + e) / total, (1.0 - e) / total];
        var += grads.iter().zip(n).map(|(g, &ni)| (sign * g).powi(2) * ni).sum::<f64>();
    }
    Ok(var.sqrt())
}

/// Centered plate analyzers at arbitrary angle.
///
/// The plate vector is computed once by quadrature at `φ = 0`; other angles
/// follow from rotating the pair components, which is exact for a centered
/// plate and fiber.
#[derive(Debug, Clone)]
pub struct PlateAnalyzers {
    basis: Basis,
    pair: (usize, usize),
    reference: [Complex64; 2],
    efficiency: f64,
    geom: crate::modes::BeamGeometry,
}

impl PlateAnalyzers {
    pub fn new(basis: &Basis, integrator: &Integrator) -> Result<Self> {
        let pair = basis
            .degenerate_pair()
            .ok_or_else(|| Error::invalid("CHSH analysis needs HG10 and HG01 in the basis"))?;
        let geom = integrator.geom();
        let v = analyzer_vector(&AnalyzerSetting::centered(0.0, geom), basis, integrator)?;
        let raw = [v.amplitudes()[pair.0], v.amplitudes()[pair.1]];
        let efficiency = raw[0].norm_sqr() + raw[1].norm_sqr();
        if !(efficiency > 0.0) {
            return Err(Error::invalid("plate analyzer does not couple to the degenerate pair"));
        }
        let norm = efficiency.sqrt();
        Ok(PlateAnalyzers { basis: basis.clone(), pair, reference: raw.map(|a| a / norm), efficiency, geom })
    }

    /// Coupling efficiency of a centered plate into the degenerate pair.
    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Normalized `(HG10, HG01)` amplitudes at plate angle `phi`.
    pub fn pair_amplitudes(&self, phi: f64) -> [Complex64; 2] {
        let (s, c) = phi.sin_cos();
        let [r10, r01] = self.reference;
        [r10 * c + r01 * s, r01 * c - r10 * s]
    }

    /// Renormalized analyzer vector on the full basis.
    pub fn vector(&self, phi: f64) -> ModeVector {
        let mut amps = vec![Complex64::new(0.0, 0.0); self.basis.len()];
        let [a10, a01] = self.pair_amplitudes(phi);
        amps[self.pair.0] = a10;
        amps[self.pair.1] = a01;
        ModeVector::new(self.basis.clone(), amps, self.geom).expect("length matches basis")
    }
}

/// CHSH evaluator for one post-channel state.
pub struct Chsh {
    block: Matrix4<Complex64>,
    analyzers: PlateAnalyzers,
    detection: DetectionConfig,
    noiseless: bool,
}

/// Result of a `(β1, β2)` scan at fixed α angles.
#[derive(Debug, Clone)]
pub struct SScan {
    pub alpha1: f64,
    pub alpha2: f64,
    pub betas: Vec<f64>,
    /// Row-major over `(β1, β2)`.
    pub s: Vec<f64>,
    pub delta_s: Vec<f64>,
    pub best: BellResult,
}

impl SScan {
    pub fn violated(&self) -> Vec<bool> {
        self.s.iter().map(|&s| s > 2.0).collect()
    }

    pub fn violation_count(&self) -> usize {
        self.s.iter().filter(|&&s| s > 2.0).count()
    }
}

/// Coarse grid step of the maximizer.
pub const GRID_STEP_DEG: f64 = 7.5;

impl Chsh {
    pub fn new(rho: &DensityOperator, integrator: &Integrator, detection: DetectionConfig, noiseless: bool) -> Result<Self> {
        Ok(Self::with_analyzers(rho, PlateAnalyzers::new(rho.basis(), integrator)?, detection, noiseless))
    }

    /// Reuses analyzers computed for the same basis.
    pub fn with_analyzers(rho: &DensityOperator, analyzers: PlateAnalyzers, detection: DetectionConfig, noiseless: bool) -> Self {
        assert_eq!(rho.basis(), &analyzers.basis, "analyzers built for another basis");
        let d = rho.dim();
        let (i, j) = analyzers.pair;
        let idx = [i * d + i, i * d + j, j * d + i, j * d + j];
        let block = Matrix4::from_fn(|r, c| rho.matrix()[(idx[r], idx[c])]);
        Chsh { block, analyzers, detection, noiseless }
    }

    pub fn analyzers(&self) -> &PlateAnalyzers {
        &self.analyzers
    }

    /// Coincidence probability with renormalized analyzers.
    pub fn probability(&self, alpha: f64, beta: f64) -> f64 {
        let a = self.analyzers.pair_amplitudes(alpha);
        let b = self.analyzers.pair_amplitudes(beta);
        let ab = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]];
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..4 {
            for c in 0..4 {
                acc += ab[r].conj() * self.block[(r, c)] * ab[c];
            }
        }
        acc.re.max(0.0)
    }

    fn probabilities(&self, alpha: f64, beta: f64) -> [f64; 4] {
        [
            self.probability(alpha, beta),
            self.probability(alpha, beta + FRAC_PI_2),
            self.probability(alpha + FRAC_PI_2, beta),
            self.probability(alpha + FRAC_PI_2, beta + FRAC_PI_2),
        ]
    }

    /// Noiseless correlation.
    pub fn e_value(&self, alpha: f64, beta: f64) -> Result<f64> {
        correlation_e(self.probabilities(alpha, beta))
    }

    fn noiseless_s(&self, s: &ChshSettings) -> f64 {
        let e = s.pairs().map(|(a, b)| correlation_e(self.probabilities(a, b)).unwrap_or(0.0));
        s_from_e(e)
    }

    /// The 16 probabilities, 4 correlations, S and ΔS. Simulated counts use
    /// streams `stream_offset..stream_offset + 16`.
    pub fn s_parameter(&self, settings: &ChshSettings, stream_offset: u64) -> Result<BellResult> {
        let eff2 = self.analyzers.efficiency * self.analyzers.efficiency;
        let mut counts = [0.0; 16];
        let mut probs = [0.0; 16];
        for (k, (a, b)) in settings.pairs().into_iter().enumerate() {
            probs[4 * k..4 * k + 4].copy_from_slice(&self.probabilities(a, b));
        }
        for (i, p) in probs.iter().enumerate() {
            counts[i] = if self.noiseless {
                self.detection.mean_counts(p * eff2)
            } else {
                simulate_counts(p * eff2, &self.detection, stream_offset + i as u64) as f64
            };
        }
        let source = if self.noiseless { &probs } else { &counts };
        let mut e_values = [0.0; 4];
        for k in 0..4 {
            e_values[k] = correlation_e([source[4 * k], source[4 * k + 1], source[4 * k + 2], source[4 * k + 3]])?;
        }
        let delta_s = if counts.iter().sum::<f64>() > 0.0 { delta_s(&counts).unwrap_or(f64::NAN) } else { f64::NAN };
        Ok(BellResult { settings: *settings, e_values, s: s_from_e(e_values), delta_s, counts })
    }

    /// S over the `(β1, β2)` grid. Pixel `(i, j)` draws from streams
    /// starting at `16 (i n + j)`.
    pub fn s_scan(&self, alpha1: f64, alpha2: f64, betas: &[f64]) -> Result<SScan> {
        if betas.is_empty() {
            return Err(Error::invalid("beta grid is empty"));
        }
        let n = betas.len();
        let results: Vec<BellResult> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let settings = ChshSettings { alpha1, alpha2, beta1: betas[k / n], beta2: betas[k % n] };
                self.s_parameter(&settings, 16 * k as u64)
            })
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (k, r) in results.iter().enumerate() {
            if r.s > results[best].s {
                best = k;
            }
        }
        Ok(SScan {
            alpha1,
            alpha2,
            betas: betas.to_vec(),
            s: results.iter().map(|r| r.s).collect(),
            delta_s: results.iter().map(|r| r.delta_s).collect(),
            best: results[best].clone(),
        })
    }

    /// Largest noiseless S over all four angles: exhaustive search on a 7.5°
    /// grid, then a simplex polish. Returned angles are reduced to `[0°, 180°)`;
    /// S and ΔS are evaluated at them in the configured sampling mode.
    pub fn s_maximize(&self, initial: Option<&ChshSettings>) -> Result<BellResult> {
        let m = (180.0 / GRID_STEP_DEG).round() as usize;
        let grid: Vec<f64> = (0..m).map(|i| (i as f64 * GRID_STEP_DEG).to_radians()).collect();
        let mut table = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                table[i * m + j] = self.e_value(grid[i], grid[j]).unwrap_or(0.0);
            }
        }
        let e = |a: usize, b: usize| table[a * m + b];
        let mut best = (f64::NEG_INFINITY, [0usize; 4]);
        for a1 in 0..m {
            for a2 in 0..m {
                for b1 in 0..m {
                    let partial = e(a1, b1) + e(a2, b1);
                    for b2 in 0..m {
                        let s = partial - e(a1, b2) + e(a2, b2);
                        if s > best.0 {
                            best = (s, [a1, a2, b1, b2]);
                        }
                    }
                }
            }
        }
        let [a1, a2, b1, b2] = best.1;
        let mut starts = vec![ChshSettings { alpha1: grid[a1], alpha2: grid[a2], beta1: grid[b1], beta2: grid[b2] }];
        starts.extend(initial.copied());

        let step = GRID_STEP_DEG.to_radians();
        let opts = NelderMeadOptions { ftol_rel: 0.0, ftol_abs: 1e-13, xtol: 1e-10, initial_step: 0.125, ..Default::default() };
        let mut winner: Option<(f64, ChshSettings)> = None;
        for start in starts {
            let x0 = [start.alpha1, start.alpha2, start.beta1, start.beta2];
            let lower = x0.map(|x| x - 4.0 * step);
            let upper = x0.map(|x| x + 4.0 * step);
            let f = |x: &[f64]| -self.noiseless_s(&ChshSettings { alpha1: x[0], alpha2: x[1], beta1: x[2], beta2: x[3] });
            let min = nelder_mead(f, &x0, &lower, &upper, &opts);
            let found = ChshSettings { alpha1: min.x[0], alpha2: min.x[1], beta1: min.x[2], beta2: min.x[3] };
            if winner.is_none_or(|(s, _)| -min.value > s) {
                winner = Some((-min.value, found));
            }
        }
        let (_, settings) = winner.expect("at least one start");
        self.s_parameter(&settings.reduced(), 0)
    }
}
