//! Coincidence rates, Poisson count synthesis and fringe utilities.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::{analyzer_vector, AnalyzerSetting};
use crate::channel::{apply_channel_arm_a, FiberChannel};
use crate::error::{Error, Result};
use crate::modes::ModeVector;
use crate::quadrature::Integrator;
use crate::state::{partial_trace, Arm, DensityOperator, TwoPhotonState};

/// Detector and timing parameters. Rates in 1/s, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub pair_rate: f64,
    pub integration_time: f64,
    pub coincidence_window: f64,
    /// Uncorrelated background singles rates `[A, B]`.
    pub singles_rates: [f64; 2],
    pub rng_seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            pair_rate: 2000.0,
            integration_time: 10.0,
            coincidence_window: 2e-9,
            singles_rates: [0.0, 0.0],
            rng_seed: 0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        let rates_ok = self.pair_rate >= 0.0 && self.singles_rates.iter().all(|&r| r >= 0.0);
        if !(rates_ok && self.integration_time >= 0.0 && self.coincidence_window > 0.0) {
            return Err(Error::invalid("detection rates and times must be non-negative, window positive"));
        }
        Ok(())
    }

    /// Accidental coincidences per integration period.
    pub fn accidentals(&self) -> f64 {
        self.singles_rates[0] * self.singles_rates[1] * self.coincidence_window * self.integration_time
    }

    /// Mean coincidence count for a pair-detection probability `p`.
    pub fn mean_counts(&self, p: f64) -> f64 {
        p * self.pair_rate * self.integration_time + self.accidentals()
    }

    /// Independent generator for measurement number `stream`.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(stream);
        rng
    }
}

/// One analyzer-pair measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRecord {
    pub setting_a: AnalyzerSetting,
    pub setting_b: AnalyzerSetting,
    pub expected_rate: f64,
    pub counts: u64,
    pub singles_a: u64,
    pub singles_b: u64,
}

/// Post-channel pair state together with the single-arm states the
/// detectors see on their own.
#[derive(Debug, Clone)]
pub struct PairSource {
    rho: DensityOperator,
    reduced_a: DMatrix<Complex64>,
    reduced_b: DMatrix<Complex64>,
}

impl PairSource {
    /// Photon A passes the channel; photon B's singles are unaffected by it.
    pub fn new(state: &TwoPhotonState, ch: &FiberChannel) -> Result<Self> {
        let rho = apply_channel_arm_a(state, ch)?;
        let reduced_a = partial_trace(&rho, Arm::A);
        let reduced_b = partial_trace(&DensityOperator::from_pure(state), Arm::B);
        Ok(PairSource { rho, reduced_a, reduced_b })
    }

    /// Uses the reduced states of `rho` itself, renormalized for arm B.
    pub fn from_density(rho: DensityOperator) -> Result<Self> {
        let t = rho.trace();
        if !(t > 0.0) {
            return Err(Error::ZeroState);
        }
        let reduced_a = partial_trace(&rho, Arm::A);
        let reduced_b = partial_trace(&rho, Arm::B).unscale(t);
        Ok(PairSource { rho, reduced_a, reduced_b })
    }

    pub fn density(&self) -> &DensityOperator {
        &self.rho
    }

    /// Probability that a photon on `arm` couples to analyzer `v`.
    pub fn marginal(&self, v: &ModeVector, arm: Arm) -> Result<f64> {
        let m = match arm {
            Arm::A => &self.reduced_a,
            Arm::B => &self.reduced_b,
        };
        if v.basis() != self.rho.basis() {
            return Err(Error::BasisMismatch("analyzer vector and state"));
        }
        Ok(quadratic_form(m, v.amplitudes()).max(0.0))
    }
}

fn quadratic_form(m: &DMatrix<Complex64>, v: &[Complex64]) -> f64 {
    let n = v.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..n {
        if v[r] == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mut row = Complex64::new(0.0, 0.0);
        for c in 0..n {
            row += m[(r, c)] * v[c];
        }
        acc += v[r].conj() * row;
    }
    acc.re
}

/// `⟨a⊗b| ρ |a⊗b⟩`. Analyzer vectors are used as given, so coupling
/// efficiency is included.
pub fn coincidence_probability(rho: &DensityOperator, a: &ModeVector, b: &ModeVector) -> Result<f64> {
    let basis = rho.basis();
    if a.basis() != basis || b.basis() != basis {
        return Err(Error::BasisMismatch("analyzer vectors and state"));
    }
    let d = basis.len();
    let (av, bv) = (a.amplitudes(), b.amplitudes());
    let ab: Vec<Complex64> = (0..d * d).map(|r| av[r / d] * bv[r % d]).collect();
    Ok(quadratic_form(rho.matrix(), &ab).max(0.0))
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Poisson coincidence count for probability `p`, drawn from stream `stream`.
pub fn simulate_counts(p: f64, cfg: &DetectionConfig, stream: u64) -> u64 {
    poisson(cfg.mean_counts(p), &mut cfg.rng(stream))
}

/// Coincidence and singles for one analyzer pair.
///
/// Stream `stream` yields the coincidence draw followed by the two singles
/// draws; with `noiseless` the rounded means are reported instead.
pub fn measure(
    source: &PairSource,
    (sa, a): (&AnalyzerSetting, &ModeVector),
    (sb, b): (&AnalyzerSetting, &ModeVector),
    cfg: &DetectionConfig,
    stream: u64,
    noiseless: bool,
) -> Result<CoincidenceRecord> {
    let p = coincidence_probability(&source.rho, a, b)?;
    let t = cfg.integration_time;
    let mean_a = (source.marginal(a, Arm::A)? * cfg.pair_rate + cfg.singles_rates[0]) * t;
    let mean_b = (source.marginal(b, Arm::B)? * cfg.pair_rate + cfg.singles_rates[1]) * t;
    let mean_c = cfg.mean_counts(p);
    let (counts, singles_a, singles_b) = if noiseless {
        (mean_c.round() as u64, mean_a.round() as u64, mean_b.round() as u64)
    } else {
        let mut rng = cfg.rng(stream);
        let c = poisson(mean_c, &mut rng);
        let na = poisson(mean_a, &mut rng);
        (c, na, poisson(mean_b, &mut rng))
    };
    Ok(CoincidenceRecord { setting_a: *sa, setting_b: *sb, expected_rate: p, counts, singles_a, singles_b })
}

/// Rotates analyzer A through `phi_values` (radians) with B held fixed.
///
/// Record `i` uses RNG stream `stream_offset + i`.
#[allow(clippy::too_many_arguments)]
pub fn fringe_scan(
    source: &PairSource,
    template_a: &AnalyzerSetting,
    setting_b: &AnalyzerSetting,
    phi_values: &[f64],
    integrator: &Integrator,
    cfg: &DetectionConfig,
    stream_offset: u64,
    noiseless: bool,
) -> Result<Vec<CoincidenceRecord>> {
    cfg.validate()?;
    let basis = source.rho.basis();
    let b = analyzer_vector(setting_b, basis, integrator)?;
    phi_values
        .par_iter()
        .enumerate()
        .map(|(i, &phi)| {
            let sa = AnalyzerSetting { phi, ..*template_a };
            let a = analyzer_vector(&sa, basis, integrator)?;
            measure(source, (&sa, &a), (setting_b, &b), cfg, stream_offset + i as u64, noiseless)
        })
        .collect()
}

/// Least-squares fit of `y = A + c cos 2φ + s sin 2φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Angle of the maximum, in `[0, π)`.
    pub phase: f64,
    /// Root-mean-square residual divided by the offset.
    pub relative_residual: f64,
}

impl SinusoidFit {
    pub fn visibility(&self) -> f64 {
        if self.offset > 0.0 {
            (self.amplitude / self.offset).min(1.0)
        } else {
            0.0
        }
    }
}

pub fn fit_fringe(phi: &[f64], y: &[f64]) -> Result<SinusoidFit> {
    if phi.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: phi.len(), actual: y.len() });
    }
    if phi.len() < 3 {
        return Err(Error::invalid("a fringe fit needs at least three points"));
    }
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&p, &v) in phi.iter().zip(y) {
        let row = Vector3::new(1.0, (2.0 * p).cos(), (2.0 * p).sin());
        ata += row * row.transpose();
        aty += row * v;
    }
    let coef = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| Error::invalid("fringe angles do not determine a sinusoid"))?;
    let (a, c, s) = (coef[0], coef[1], coef[2]);
    let rss: f64 = phi
        .iter()
        .zip(y)
        .map(|(&p, &v)| {
            let r = v - (a + c * (2.0 * p).cos() + s * (2.0 * p).sin());
            r * r
        })
        .sum();
    let rms = (rss / phi.len() as f64).sqrt();
    Ok(SinusoidFit {
        offset: a,
        amplitude: c.hypot(s),
        phase: (0.5 * s.atan2(c)).rem_euclid(std::f64::consts::PI),
        relative_residual: if a != 0.0 { rms / a.abs() } else { f64::INFINITY },
    })
}

/// A located dip and its adjacent peaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    pub position: f64,
    pub min: f64,
    pub left_peak: f64,
    pub right_peak: f64,
    pub visibility: f64,
}

/// Dips shallower than this fraction of their lower flanking peak are ignored.
pub const MIN_RELATIVE_DEPTH: f64 = 0.01;

/// Flanking peaks below this fraction of the scan maximum are treated as
/// numerical noise.
pub const NOISE_FLOOR: f64 = 1e-9;

/// Finds the most prominent dip flanked by a peak on each side.
///
/// The flanking peak on each side is the highest sample before the scan
/// drops below the dip again; a flank whose highest sample is the scan
/// boundary does not count as a peak. `smoothing` is the width of
/// an optional centered moving average.
pub fn find_dip(scan: &[(f64, f64)], smoothing: Option<usize>) -> Result<Dip> {
    let y = smooth(scan.iter().map(|p| p.1).collect(), smoothing.unwrap_or(1));
    let n = y.len();
    let top = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(f64, Dip)> = None;
    let mut i = 1;
    while i + 1 < n {
        if !(y[i] < y[i - 1]) {
            i += 1;
            continue;
        }
        // plateau bottoms count once, at their center
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 >= n || !(y[j + 1] > y[j]) {
            i = j + 1;
            continue;
        }
        let (l, r) = (flank_peak(&y, i, -1), flank_peak(&y, j, 1));
        let interior = l > 0 && r + 1 < n;
        let flank = y[l].min(y[r]);
        let prominence = flank - y[i];
        if interior && flank > NOISE_FLOOR * top && prominence > MIN_RELATIVE_DEPTH * flank {
            let max = 0.5 * (y[l] + y[r]);
            let dip = Dip {
                position: 0.5 * (scan[i].0 + scan[j].0),
                min: y[i],
                left_peak: y[l],
                right_peak: y[r],
                visibility: (max - y[i]) / (max + y[i]),
            };
            if best.is_none_or(|(p, _)| prominence > p) {
                best = Some((prominence, dip));
            }
        }
        i = j + 1;
    }
    best.map(|(_, d)| d).ok_or(Error::NoDipFound)
}

/// `(MAX − MIN)/(MAX + MIN)` of the most prominent dip.
pub fn visibility(scan: &[(f64, f64)], smoothing: Option<usize>) -> Result<f64> {
    find_dip(scan, smoothing).map(|d| d.visibility)
}

fn flank_peak(y: &[f64], from: usize, step: isize) -> usize {
    let mut best = from;
    let mut k = from as isize + step;
    while k >= 0 && (k as usize) < y.len() && y[k as usize] >= y[from] {
        if y[k as usize] > y[best] {
            best = k as usize;
        }
        k += step;
    }
    best
}

fn smooth(y: Vec<f64>, window: usize) -> Vec<f64> {
    if window <= 1 {
        return y;
    }
    let half = window / 2;
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{Basis, BeamGeometry, ModeIndex};
    use crate::state::spdc_state;
    use std::f64::consts::PI;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn geom() -> BeamGeometry {
        BeamGeometry::new(0.8e-3).unwrap()
    }

    fn bell_rho() -> DensityOperator {
        let s = spdc_state(&[(ModeIndex::HG00, c(0.0)), (ModeIndex::HG10, c(1.0)), (ModeIndex::HG01, c(1.0))]).unwrap();
        DensityOperator::from_pure(&s)
    }

    fn pair_vector(phi: f64) -> ModeVector {
        ModeVector::from_real(Basis::lowest_three(), &[0.0, phi.sin(), phi.cos()], geom()).unwrap()
    }

    #[test]
    fn bell_state_gives_cos_squared() {
        let rho = bell_rho();
        for (a, b) in [(0.0, 0.0), (0.3, 0.1), (1.0, -0.4), (2.0, 2.5), (0.7, 0.7 + PI / 2.0)] {
            let p = coincidence_probability(&rho, &pair_vector(a), &pair_vector(b)).unwrap();
            assert!((p - 0.5 * (a - b).cos().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn scaling_analyzer_scales_probability() {
        let rho = bell_rho();
        let a = pair_vector(0.4);
        let k = Complex64::new(0.3, -0.5);
        let p = coincidence_probability(&rho, &a, &pair_vector(0.1)).unwrap();
        let q = coincidence_probability(&rho, &a.scaled(k), &pair_vector(0.1)).unwrap();
        assert!((q - k.norm_sqr() * p).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_gives_zero_counts() {
        let cfg = DetectionConfig::default();
        assert_eq!(simulate_counts(0.0, &cfg, 3), 0);
        assert_eq!(simulate_counts(0.4, &cfg, 3), simulate_counts(0.4, &cfg, 3));
        assert_ne!(simulate_counts(0.4, &cfg, 3), simulate_counts(0.4, &cfg, 4));
    }

    #[test]
    fn accidentals_follow_singles_product() {
        let cfg = DetectionConfig { singles_rates: [1e5, 2e5], ..DetectionConfig::default() };
        assert!((cfg.accidentals() - 1e5 * 2e5 * 2e-9 * 10.0).abs() < 1e-9);
        assert!(DetectionConfig { coincidence_window: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn sinusoid_fit_recovers_parameters() {
        let phi: Vec<f64> = (0..36).map(|i| i as f64 * PI / 36.0).collect();
        let y: Vec<f64> = phi.iter().map(|p| 3.0 + 2.0 * (2.0 * (p - 0.3)).cos()).collect();
        let f = fit_fringe(&phi, &y).unwrap();
        assert!((f.offset - 3.0).abs() < 1e-12);
        assert!((f.visibility() - 2.0 / 3.0).abs() < 1e-12);
        assert!((f.phase - 0.3).abs() < 1e-12);
        assert!(f.relative_residual < 1e-12);
    }

    #[test]
    fn dip_definition() {
        let scan: Vec<(f64, f64)> = [50.0, 100.0, 30.0, 110.0, 60.0].iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
        let d = find_dip(&scan, None).unwrap();
        assert_eq!(d.position, 2.0);
        assert!((d.visibility - 75.0 / 135.0).abs() < 1e-12);
        let perfect = [(0.0, 1.0), (1.0, 2.0), (2.0, 0.0), (3.0, 2.0), (4.0, 1.0)];
        assert_eq!(visibility(&perfect, None).unwrap(), 1.0);
    }

    #[test]
    fn flat_or_monotone_scans_have_no_dip() {
        let flat: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 5.0)).collect();
        assert!(matches!(visibility(&flat, None), Err(Error::NoDipFound)));
        let rising: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, i as f64)).collect();
        assert!(matches!(visibility(&rising, None), Err(Error::NoDipFound)));
        // minimum at the boundary has only one flank
        let valley = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 1.0)];
        assert!(visibility(&valley, None).is_err());
    }

    #[test]
    fn plateau_dip_is_centered() {
        let scan = [(0.0, 1.0), (1.0, 3.0), (2.0, 1.0), (3.0, 1.0), (4.0, 3.0), (5.0, 2.0)];
        assert_eq!(find_dip(&scan, None).unwrap().position, 2.5);
    }

    #[test]
    fn noisy_scan_picks_the_main_dip() {
        let scan: Vec<(f64, f64)> = (0..101)
            .map(|i| {
                let x = i as f64 / 10.0 - 5.0;
                (x, 2.0 - x.cos() + if i % 2 == 0 { 0.05 } else { -0.05 })
            })
            .collect();
        for window in [None, Some(5)] {
            assert!(find_dip(&scan, window).unwrap().position.abs() < 0.15);
        }
    }
}
