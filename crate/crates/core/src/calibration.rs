//! Weighted least-squares estimation of fiber channel parameters.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::analyzer_vector;
use crate::bell::{Chsh, PlateAnalyzers};
use crate::channel::{apply_channel_arm_a, FiberChannel};
use crate::error::{Error, Result};
use crate::measurement::{coincidence_probability, CoincidenceRecord, DetectionConfig};
use crate::modes::{ModeIndex, ModeVector};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::quadrature::Integrator;
use crate::state::TwoPhotonState;

/// A channel field that the fit may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    ThetaRot,
    Mix,
    MixAxis,
    Gamma,
    /// Amplitude transmission shared by every mode of this order.
    TransmissionOrder(u32),
}

impl FreeParam {
    pub fn name(&self) -> String {
        match self {
            FreeParam::ThetaRot => "theta_rot_deg".into(),
            FreeParam::Mix => "mix".into(),
            FreeParam::MixAxis => "mix_axis_deg".into(),
            FreeParam::Gamma => "gamma".into(),
            FreeParam::TransmissionOrder(k) => format!("t_order_{k}"),
        }
    }

    /// Default box in internal units (radians for angles). Rotation is only
    /// identifiable mod 180° and the dephasing axis mod 90°.
    pub fn default_bounds(&self) -> (f64, f64) {
        match self {
            FreeParam::ThetaRot => (-FRAC_PI_2, FRAC_PI_2),
            FreeParam::MixAxis => (0.0, FRAC_PI_2),
            FreeParam::Mix | FreeParam::Gamma => (0.0, 1.0),
            FreeParam::TransmissionOrder(_) => (1e-3, 1.0),
        }
    }

    fn is_angle(&self) -> bool {
        matches!(self, FreeParam::ThetaRot | FreeParam::MixAxis)
    }

    /// Internal value to reported units (degrees for angles).
    pub fn to_reported(&self, v: f64) -> f64 {
        if self.is_angle() {
            v.to_degrees()
        } else {
            v
        }
    }

    fn set(&self, ch: &mut FiberChannel, modes: &[ModeIndex], v: f64) {
        match *self {
            FreeParam::ThetaRot => ch.theta_rot = v,
            FreeParam::Mix => ch.mix = v,
            FreeParam::MixAxis => ch.mix_axis = v,
            FreeParam::Gamma => ch.gamma = v,
            FreeParam::TransmissionOrder(k) => {
                for (t, m) in ch.t.iter_mut().zip(modes) {
                    if m.order() == k {
                        *t = v;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub param: FreeParam,
    pub lower: f64,
    pub upper: f64,
}

impl ParamSpec {
    pub fn new(param: FreeParam) -> Self {
        let (lower, upper) = param.default_bounds();
        ParamSpec { param, lower, upper }
    }
}

/// A summary statistic to match, weighted by its stated uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitTarget {
    /// Largest CHSH value over all plate angles.
    MaxS { value: f64, sigma: f64 },
}

pub struct FitProblem {
    pub observations: Vec<CoincidenceRecord>,
    pub targets: Vec<FitTarget>,
    pub free: Vec<ParamSpec>,
    /// Values of every parameter not in `free`; also the default start.
    pub channel: FiberChannel,
    pub state: TwoPhotonState,
    pub detection: DetectionConfig,
    pub integrator: Integrator,
    /// Seeds the Latin-hypercube starts.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: Vec<Estimate>,
    pub residual: f64,
    /// In reported units; absent when the curvature is singular.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub converged: bool,
    pub unidentifiable: bool,
    #[serde(skip)]
    pub channel: Option<FiberChannel>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.estimates.iter().find(|e| e.name == name).map(|e| e.value)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.estimates.iter().find(|e| e.name == name).and_then(|e| e.std_error)
    }
}

/// Number of multi-start points.
pub const STARTS: usize = 5;

struct Objective<'a> {
    problem: &'a FitProblem,
    vectors: Vec<(ModeVector, ModeVector)>,
    plates: Option<PlateAnalyzers>,
}

impl<'a> Objective<'a> {
    fn new(problem: &'a FitProblem) -> Result<Self> {
        let basis = problem.state.basis();
        let vectors = problem
            .observations
            .par_iter()
            .map(|r| {
                Ok((
                    analyzer_vector(&r.setting_a, basis, &problem.integrator)?,
                    analyzer_vector(&r.setting_b, basis, &problem.integrator)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let plates = if problem.targets.is_empty() {
            None
        } else {
            Some(PlateAnalyzers::new(basis, &problem.integrator)?)
        };
        Ok(Objective { problem, vectors, plates })
    }

    fn channel(&self, x: &[f64]) -> FiberChannel {
        let mut ch = self.problem.channel.clone();
        let modes = self.problem.state.basis().modes();
        for (spec, &v) in self.problem.free.iter().zip(x) {
            spec.param.set(&mut ch, modes, v);
        }
        ch
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let p = self.problem;
        let rho = apply_channel_arm_a(&p.state, &self.channel(x))?;
        let mut chi2 = 0.0;
        for (rec, (a, b)) in p.observations.iter().zip(&self.vectors) {
            let pred = p.detection.mean_counts(coincidence_probability(&rho, a, b)?);
            let obs = rec.counts as f64;
            let sigma2 = if rec.counts > 0 { obs } else { 1.0 };
            chi2 += (obs - pred).powi(2) / sigma2;
        }
        if let Some(plates) = &self.plates {
            let chsh = Chsh::with_analyzers(&rho, plates.clone(), p.detection.clone(), true);
            let s_max = chsh.s_maximize(None)?.s;
            for t in &p.targets {
                let FitTarget::MaxS { value, sigma } = *t;
                chi2 += ((s_max - value) / sigma).powi(2);
            }
        }
        Ok(chi2)
    }
}

fn latin_hypercube(lower: &[f64], upper: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; lower.len()]; n];
    for j in 0..lower.len() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (i, &s) in strata.iter().enumerate() {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            points[i][j] = lower[j] + u * (upper[j] - lower[j]);
        }
    }
    points
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        let k = self.free.len();
        if k == 0 {
            return Err(Error::IllPosed("no free parameters".into()));
        }
        let (n_obs, n_tgt) = (self.observations.len(), self.targets.len());
        if n_obs + 2 * n_tgt < 2 * k {
            return Err(Error::IllPosed(format!(
                "{n_obs} observations and {n_tgt} targets cannot constrain {k} free parameters"
            )));
        }
        for (i, a) in self.free.iter().enumerate() {
            if !(a.lower < a.upper) {
                return Err(Error::IllPosed(format!("empty bounds for {}", a.param.name())));
            }
            if self.free[..i].iter().any(|b| b.param == a.param) {
                return Err(Error::IllPosed(format!("{} listed twice", a.param.name())));
            }
        }
        for t in &self.targets {
            let FitTarget::MaxS { sigma, .. } = *t;
            if !(sigma > 0.0) {
                return Err(Error::IllPosed("target uncertainty must be positive".into()));
            }
        }
        self.channel.validate(self.state.basis())?;
        self.detection.validate()
    }
}

/// Multi-start bounded simplex fit with a finite-difference covariance.
pub fn fit_channel(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let objective = Objective::new(problem)?;
    let lower: Vec<f64> = problem.free.iter().map(|s| s.lower).collect();
    let upper: Vec<f64> = problem.free.iter().map(|s| s.upper).collect();
    let f = |x: &[f64]| objective.value(x).unwrap_or(f64::INFINITY);
    let opts = NelderMeadOptions { ftol_rel: 1e-9, ftol_abs: 1e-14, xtol: 1e-11, initial_step: 0.15, max_evals: 10_000 };

    let starts = latin_hypercube(&lower, &upper, STARTS, problem.seed);
    let runs: Vec<_> = starts.par_iter().map(|x0| nelder_mead(f, x0, &lower, &upper, &opts)).collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.value < runs[best].value {
            best = i;
        }
    }
    // a restart guards against simplex collapse
    let polish = nelder_mead(f, &runs[best].x, &lower, &upper, &NelderMeadOptions { initial_step: 0.01, ..opts });
    let evals: usize = runs.iter().map(|r| r.evals).sum::<usize>() + polish.evals;
    let (x, value, converged) = if polish.value <= runs[best].value {
        (polish.x, polish.value, polish.converged || runs[best].converged)
    } else {
        (runs[best].x.clone(), runs[best].value, runs[best].converged)
    };
    if !value.is_finite() {
        return Err(Error::IllPosed("objective is not finite anywhere the fit looked".into()));
    }

    let covariance = covariance(&f, &x, &lower, &upper);
    let scale: Vec<f64> = problem.free.iter().map(|s| s.param.to_reported(1.0)).collect();
    let cov_reported = covariance.as_ref().map(|c| {
        (0..x.len()).map(|i| (0..x.len()).map(|j| c[(i, j)] * scale[i] * scale[j]).collect()).collect::<Vec<Vec<f64>>>()
    });
    let estimates = problem
        .free
        .iter()
        .enumerate()
        .map(|(i, s)| Estimate {
            name: s.param.name(),
            value: s.param.to_reported(x[i]),
            std_error: cov_reported.as_ref().map(|c: &Vec<Vec<f64>>| c[i][i].sqrt()),
        })
        .collect();
    Ok(FitResult {
        estimates,
        residual: value.max(0.0),
        unidentifiable: covariance.is_none(),
        covariance: cov_reported,
        iterations: evals,
        converged,
        channel: Some(objective.channel(&x)),
    })
}

/// `2 H⁻¹` of χ², or `None` when the curvature is not positive definite.
fn covariance(f: &impl Fn(&[f64]) -> f64, x: &[f64], lower: &[f64], upper: &[f64]) -> Option<DMatrix<f64>> {
    let n = x.len();
    let h: Vec<f64> = (0..n).map(|i| 1e-4 * (upper[i] - lower[i])).collect();
    // keep the stencil inside the box
    let c: Vec<f64> = (0..n).map(|i| x[i].clamp(lower[i] + 2.0 * h[i], upper[i] - 2.0 * h[i])).collect();
    let at = |di: &[(usize, f64)]| {
        let mut p = c.clone();
        for &(i, d) in di {
            p[i] += d;
        }
        f(&p)
    };
    let f0 = f(&c);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        hess[(i, i)] = (at(&[(i, h[i])]) - 2.0 * f0 + at(&[(i, -h[i])])) / (h[i] * h[i]);
        for j in 0..i {
            let v = (at(&[(i, h[i]), (j, h[j])]) - at(&[(i, h[i]), (j, -h[j])]) - at(&[(i, -h[i]), (j, h[j])])
                + at(&[(i, -h[i]), (j, -h[j])]))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = hess.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) || eig.iter().any(|&e| e <= 1e-10 * max) {
        return None;
    }
    hess.try_inverse().map(|inv| inv * 2.0)
}
