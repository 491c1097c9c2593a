//! JSON experiment configuration.
//!
//! Units are part of the key names: degrees for plate angles, millimeters
//! for beam and analyzer offsets, micrometers for fiber geometry.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calibration::{FitTarget, FreeParam, ParamSpec};
use crate::channel::{preset_channel, DispersionSource, FiberChannel};
use crate::dispersion::{CapillaryParams, FilterShape, SpectralFilter, BESSEL_J0_ZERO, BESSEL_J1_ZERO};
use crate::error::{Error, Result};
use crate::measurement::DetectionConfig;
use crate::modes::{Basis, BeamGeometry, ModeIndex};
use crate::quadrature::{Integrator, QuadratureSpec};
use crate::state::{spdc_state_on, uniform_spdc_state, TwoPhotonState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub noiseless: bool,
    pub beam: BeamConfig,
    pub quadrature: QuadratureSpec,
    pub state: StateConfig,
    pub channel: ChannelConfig,
    pub detection: DetectionSection,
    pub fringe: FringeConfig,
    pub chsh_scan: ChshScanConfig,
    pub dip: DipConfig,
    pub dispersion: DispersionConfig,
    pub fit: FitConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            noiseless: false,
            beam: BeamConfig::default(),
            quadrature: QuadratureSpec::default(),
            state: StateConfig::default(),
            channel: ChannelConfig::Preset("paper-30cm".into()),
            detection: DetectionSection::default(),
            fringe: FringeConfig::default(),
            chsh_scan: ChshScanConfig::default(),
            dip: DipConfig::default(),
            dispersion: DispersionConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub w0_mm: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { w0_mm: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchmidtTerm {
    pub m: u32,
    pub n: u32,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Schmidt weights on the analysis basis. Modes not listed get zero weight;
/// an empty list means equal weights on every basis mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateConfig {
    pub basis: Vec<ModeIndex>,
    pub schmidt: Vec<SchmidtTerm>,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig { basis: Basis::lowest_three().modes().to_vec(), schmidt: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelConfig {
    /// `ideal` or `paper-30cm`.
    Preset(String),
    Custom(CustomChannel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomChannel {
    #[serde(default)]
    pub length_m: f64,
    /// Amplitude transmission by mode order; the last entry covers higher orders.
    pub t_by_order: Vec<f64>,
    #[serde(default)]
    pub theta_rot_deg: f64,
    #[serde(default)]
    pub mix: f64,
    #[serde(default)]
    pub mix_axis_deg: f64,
    /// Either a fixed `gamma` or `gamma_from`, not both; neither means 1.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub gamma_from: Option<DispersionSource>,
}

impl ChannelConfig {
    pub fn build(&self, basis: &Basis) -> Result<FiberChannel> {
        match self {
            ChannelConfig::Preset(name) => preset_channel(name, basis).map_err(|e| config_err("channel", e)),
            ChannelConfig::Custom(c) => {
                let gamma = match (c.gamma, &c.gamma_from) {
                    (Some(_), Some(_)) => return Err(config_msg("channel", "give either gamma or gamma_from")),
                    (Some(g), None) => g,
                    (None, Some(src)) => src.gamma(c.length_m).map_err(|e| config_err("channel.gamma_from", e))?,
                    (None, None) => 1.0,
                };
                let ch = FiberChannel {
                    length_m: c.length_m,
                    t: FiberChannel::transmission_by_order(basis, &c.t_by_order)
                        .map_err(|e| config_err("channel.t_by_order", e))?,
                    theta_rot: c.theta_rot_deg.to_radians(),
                    mix: c.mix,
                    mix_axis: c.mix_axis_deg.to_radians(),
                    gamma,
                };
                ch.validate(basis).map_err(|e| config_err("channel", e))?;
                Ok(ch)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    pub pair_rate_hz: f64,
    pub integration_time_s: f64,
    pub coincidence_window_ns: f64,
    pub singles_rates_hz: [f64; 2],
}

impl Default for DetectionSection {
    fn default() -> Self {
        let d = DetectionConfig::default();
        DetectionSection {
            pair_rate_hz: d.pair_rate,
            integration_time_s: d.integration_time,
            coincidence_window_ns: d.coincidence_window * 1e9,
            singles_rates_hz: d.singles_rates,
        }
    }
}

impl DetectionSection {
    pub fn build(&self, seed: u64) -> Result<DetectionConfig> {
        let d = DetectionConfig {
            pair_rate: self.pair_rate_hz,
            integration_time: self.integration_time_s,
            coincidence_window: self.coincidence_window_ns * 1e-9,
            singles_rates: self.singles_rates_hz,
            rng_seed: seed,
        };
        d.validate().map_err(|e| config_err("detection", e))?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FringeConfig {
    pub betas_deg: Vec<f64>,
    pub alpha_start_deg: f64,
    pub alpha_stop_deg: f64,
    pub alpha_step_deg: f64,
}

impl Default for FringeConfig {
    fn default() -> Self {
        FringeConfig { betas_deg: vec![0.0, 45.0, 90.0, -45.0], alpha_start_deg: 0.0, alpha_stop_deg: 180.0, alpha_step_deg: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChshScanConfig {
    pub alpha1_deg: f64,
    pub alpha2_deg: f64,
    pub beta_start_deg: f64,
    pub beta_stop_deg: f64,
    pub beta_step_deg: f64,
}

impl Default for ChshScanConfig {
    fn default() -> Self {
        ChshScanConfig { alpha1_deg: 0.0, alpha2_deg: -45.0, beta_start_deg: 0.0, beta_stop_deg: 360.0, beta_step_deg: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DipConfig {
    pub delta_pp_mm: Vec<f64>,
    pub scan_start_mm: f64,
    pub scan_stop_mm: f64,
    pub scan_step_mm: f64,
    /// The dip basis is `{HG00, HG10, HG01} ∪ {HG_m0 : m ≤ x_line_max_m}`
    /// with equal Schmidt weights.
    pub x_line_max_m: u32,
    pub quadrature: QuadratureSpec,
    /// Moving-average window for dip location; `null` for none.
    pub smoothing: Option<usize>,
}

impl Default for DipConfig {
    fn default() -> Self {
        DipConfig {
            delta_pp_mm: vec![0.0, 0.4, 0.8],
            scan_start_mm: -1.5,
            scan_stop_mm: 3.5,
            scan_step_mm: 0.02,
            x_line_max_m: 24,
            quadrature: QuadratureSpec { points_per_axis: 240, half_extent: 8.0 },
            smoothing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub center_nm: f64,
    pub fwhm_nm: f64,
    pub shape: FilterShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionConfig {
    pub core_radius_um: f64,
    pub wavelength_nm: f64,
    pub n_clad: f64,
    pub u1: f64,
    pub u2: f64,
    pub length_m: f64,
    pub filter: FilterConfig,
    /// Measured delay used for a second coherence estimate, if given.
    pub measured_delay_ps_per_m: Option<f64>,
}

impl Default for DispersionConfig {
    fn default() -> Self {
        DispersionConfig {
            core_radius_um: 12.5,
            wavelength_nm: 826.0,
            n_clad: 1.45,
            u1: BESSEL_J0_ZERO,
            u2: BESSEL_J1_ZERO,
            length_m: 0.3,
            filter: FilterConfig { center_nm: 826.1, fwhm_nm: 1.0, shape: FilterShape::Gaussian },
            measured_delay_ps_per_m: Some(1.5),
        }
    }
}

impl DispersionConfig {
    pub fn capillary(&self) -> CapillaryParams {
        CapillaryParams {
            r: self.core_radius_um * 1e-6,
            lambda: self.wavelength_nm * 1e-9,
            n_clad: self.n_clad,
            u1: self.u1,
            u2: self.u2,
        }
    }

    pub fn spectral_filter(&self) -> Result<SpectralFilter> {
        SpectralFilter::new(self.filter.center_nm * 1e-9, self.filter.fwhm_nm * 1e-9, self.filter.shape)
            .map_err(|e| config_err("dispersion.filter", e))
    }
}

/// A free parameter with optional bounds in reported units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FreeParamConfig {
    Bare(FreeParam),
    Bounded {
        param: FreeParam,
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
    },
}

impl FreeParamConfig {
    pub fn spec(&self) -> ParamSpec {
        match *self {
            FreeParamConfig::Bare(p) => ParamSpec::new(p),
            FreeParamConfig::Bounded { param, lower, upper } => {
                let unit = param.to_reported(1.0);
                let (lo, hi) = param.default_bounds();
                ParamSpec { param, lower: lower.map_or(lo, |v| v / unit), upper: upper.map_or(hi, |v| v / unit) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Fringe-schema CSV, relative to the config file.
    pub observations_csv: Option<PathBuf>,
    pub targets: Vec<FitTarget>,
    pub free: Vec<FreeParamConfig>,
    /// Seeds the multi-start points.
    pub start_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            observations_csv: None,
            targets: Vec::new(),
            free: vec![FreeParamConfig::Bare(FreeParam::ThetaRot), FreeParamConfig::Bare(FreeParam::Mix)],
            start_seed: 42,
        }
    }
}

pub(crate) fn config_err(path: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::Config { path: path.into(), message: other.to_string() },
    }
}

pub(crate) fn config_msg(path: &str, msg: &str) -> Error {
    Error::Config { path: path.into(), message: msg.into() }
}

/// A parsed config with its location, for resolving relative paths.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config { path, message: e.into_inner().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
        let config = Self::from_json(&text)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, dir })
    }

    /// Semantic checks that do not need any numerical work.
    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        Integrator::new(self.quadrature, self.geometry()?).map_err(|e| config_err("quadrature", e))?;
        let basis = self.basis()?;
        self.state()?;
        self.channel.build(&basis)?;
        self.detection.build(self.seed)?;
        let positive = |v: f64, key: &str| if v > 0.0 { Ok(()) } else { Err(config_msg(key, "must be positive")) };
        positive(self.fringe.alpha_step_deg, "fringe.alpha_step_deg")?;
        positive(self.chsh_scan.beta_step_deg, "chsh_scan.beta_step_deg")?;
        positive(self.dip.scan_step_mm, "dip.scan_step_mm")?;
        if self.fringe.alpha_stop_deg < self.fringe.alpha_start_deg {
            return Err(config_msg("fringe.alpha_stop_deg", "must not be below alpha_start_deg"));
        }
        if self.chsh_scan.beta_stop_deg < self.chsh_scan.beta_start_deg {
            return Err(config_msg("chsh_scan.beta_stop_deg", "must not be below beta_start_deg"));
        }
        if self.dip.scan_stop_mm <= self.dip.scan_start_mm {
            return Err(config_msg("dip.scan_stop_mm", "must exceed scan_start_mm"));
        }
        if self.dip.delta_pp_mm.is_empty() {
            return Err(config_msg("dip.delta_pp_mm", "needs at least one offset"));
        }
        if self.dispersion.length_m < 0.0 {
            return Err(config_msg("dispersion.length_m", "must not be negative"));
        }
        self.dispersion.spectral_filter()?;
        for (i, f) in self.fit.free.iter().enumerate() {
            let s = f.spec();
            if !(s.lower < s.upper) {
                return Err(config_msg(&format!("fit.free[{i}]"), "lower bound must be below upper bound"));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<BeamGeometry> {
        BeamGeometry::new(self.beam.w0_mm * 1e-3).map_err(|e| config_err("beam.w0_mm", e))
    }

    pub fn integrator(&self) -> Result<Integrator> {
        Integrator::new(self.quadrature, self.geometry()?)
    }

    pub fn basis(&self) -> Result<Basis> {
        Basis::new(self.state.basis.clone()).map_err(|e| config_err("state.basis", e))
    }

    pub fn state(&self) -> Result<TwoPhotonState> {
        let basis = self.basis()?;
        if self.state.schmidt.is_empty() {
            return uniform_spdc_state(&basis).map_err(|e| config_err("state", e));
        }
        let terms: Vec<(ModeIndex, Complex64)> =
            self.state.schmidt.iter().map(|t| (ModeIndex::new(t.m, t.n), Complex64::new(t.re, t.im))).collect();
        spdc_state_on(&basis, &terms).map_err(|e| config_err("state.schmidt", e))
    }

    pub fn detection_config(&self) -> Result<DetectionConfig> {
        self.detection.build(self.seed)
    }
}
