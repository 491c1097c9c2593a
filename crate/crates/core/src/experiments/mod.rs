//! Figure-style experiments driven by one JSON config.
//!
//! Every command writes its CSV (authoritative), a best-effort plot and a
//! JSON summary into the output directory.

pub mod config;
pub mod output;

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::{analyzer_vector, AnalyzerSetting};
use crate::bell::{BellResult, Chsh, ChshSettings};
use crate::calibration::{fit_channel, FitProblem, FitResult};
use crate::channel::apply_channel_arm_a;
use crate::dispersion::{capillary_intermodal_delay, coherence_factor};
use crate::error::{Error, Result};
use crate::measurement::{find_dip, fit_fringe, fringe_scan, measure, CoincidenceRecord, PairSource};
use crate::modes::Basis;
use crate::quadrature::Integrator;
use crate::state::{uniform_spdc_state, Arm};

pub use config::{ExperimentConfig, LoadedConfig};
use config::config_err;
use output::{heatmap_pgm, line_plot_svg, write_csv, write_json, Series};

/// Inclusive grid `start, start + step, …` up to `stop`.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

/// Fringe CSV row; also the observation schema read by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeRow {
    pub beta_deg: f64,
    pub alpha_deg: f64,
    pub prob: f64,
    pub counts: u64,
    pub singles_a: u64,
    pub singles_b: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeSummary {
    pub beta_deg: f64,
    /// From a sinusoid fit to the counts.
    pub visibility: f64,
    /// From a sinusoid fit to the probabilities.
    pub visibility_theory: f64,
    pub max_alpha_deg: f64,
}

pub fn cmd_fringe(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<FringeSummary>> {
    let integrator = cfg.integrator()?;
    let geom = integrator.geom();
    let state = cfg.state()?;
    let channel = cfg.channel.build(state.basis())?;
    let detection = cfg.detection_config()?;
    let source = PairSource::new(&state, &channel)?;
    let f = &cfg.fringe;
    let alphas_deg = grid(f.alpha_start_deg, f.alpha_stop_deg, f.alpha_step_deg);
    let alphas: Vec<f64> = alphas_deg.iter().map(|a| a.to_radians()).collect();

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut series = Vec::new();
    for (k, &beta) in f.betas_deg.iter().enumerate() {
        let b = AnalyzerSetting::centered(beta.to_radians(), geom);
        let offset = (k * alphas.len()) as u64;
        let recs = fringe_scan(&source, &b, &b, &alphas, &integrator, &detection, offset, cfg.noiseless)?;
        let counts: Vec<f64> = recs.iter().map(|r| r.counts as f64).collect();
        let probs: Vec<f64> = recs.iter().map(|r| r.expected_rate).collect();
        let fit_c = fit_fringe(&alphas, &counts)?;
        let fit_p = fit_fringe(&alphas, &probs)?;
        summaries.push(FringeSummary {
            beta_deg: beta,
            visibility: fit_c.visibility(),
            visibility_theory: fit_p.visibility(),
            max_alpha_deg: fit_p.phase.to_degrees(),
        });
        series.push(Series {
            label: format!("beta = {beta} deg"),
            points: alphas_deg.iter().copied().zip(counts.iter().copied()).collect(),
        });
        rows.extend(recs.iter().zip(&alphas_deg).map(|(r, &a)| FringeRow {
            beta_deg: beta,
            alpha_deg: a,
            prob: r.expected_rate,
            counts: r.counts,
            singles_a: r.singles_a,
            singles_b: r.singles_b,
        }));
    }
    write_csv(&out_dir.join("fringe.csv"), &rows)?;
    write_json(&out_dir.join("fringe_summary.json"), &summaries)?;
    line_plot_svg(&out_dir.join("fringe.svg"), "Coincidence fringes", "alpha (deg)", "coincidences", &series)?;
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub beta1_deg: f64,
    pub beta2_deg: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "delta_S")]
    pub delta_s: f64,
    pub violated: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshPoint {
    pub angles_deg: [f64; 4],
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "delta_S")]
    pub delta_s: f64,
}

impl From<&BellResult> for ChshPoint {
    fn from(r: &BellResult) -> Self {
        ChshPoint { angles_deg: r.settings.to_degrees(), s: r.s, delta_s: r.delta_s }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshSummary {
    pub grid_max: ChshPoint,
    pub violated_pixels: usize,
    pub total_pixels: usize,
    /// Maximum over all four angles.
    pub maximized: ChshPoint,
}

pub fn cmd_chsh_scan(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ChshSummary> {
    let integrator = cfg.integrator()?;
    let state = cfg.state()?;
    let channel = cfg.channel.build(state.basis())?;
    let rho = apply_channel_arm_a(&state, &channel)?;
    let chsh = Chsh::new(&rho, &integrator, cfg.detection_config()?, cfg.noiseless)?;
    let c = &cfg.chsh_scan;
    let betas_deg = grid(c.beta_start_deg, c.beta_stop_deg, c.beta_step_deg);
    let betas: Vec<f64> = betas_deg.iter().map(|b| b.to_radians()).collect();
    let scan = chsh.s_scan(c.alpha1_deg.to_radians(), c.alpha2_deg.to_radians(), &betas)?;
    let violated = scan.violated();
    let n = betas.len();
    let rows: Vec<ScanRow> = (0..n * n)
        .map(|k| ScanRow {
            beta1_deg: betas_deg[k / n],
            beta2_deg: betas_deg[k % n],
            s: scan.s[k],
            delta_s: scan.delta_s[k],
            violated: violated[k] as u8,
        })
        .collect();
    write_csv(&out_dir.join("chsh_scan.csv"), &rows)?;
    let bound = 2.0 * 2f64.sqrt();
    heatmap_pgm(&out_dir.join("chsh_scan.pgm"), n, &scan.s, -bound, bound, &violated)?;

    let maximized = chsh.s_maximize(Some(&ChshSettings {
        alpha1: scan.alpha1,
        alpha2: scan.alpha2,
        beta1: scan.best.settings.beta1,
        beta2: scan.best.settings.beta2,
    }))?;
    let summary = ChshSummary {
        grid_max: (&scan.best).into(),
        violated_pixels: scan.violation_count(),
        total_pixels: n * n,
        maximized: (&maximized).into(),
    };
    write_json(&out_dir.join("chsh_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipRow {
    pub delta_pp_mm: f64,
    pub delta_smf_mm: f64,
    pub prob: f64,
    pub counts_norm: f64,
    pub theory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipSummary {
    pub delta_pp_mm: f64,
    /// Dip of the theory curve; `None` when the curve has no dip.
    pub dip_mm: Option<f64>,
    pub visibility: Option<f64>,
    pub counts_dip_mm: Option<f64>,
    pub counts_visibility: Option<f64>,
}

/// Basis used for the nonlocal dip.
pub fn dip_basis(cfg: &ExperimentConfig) -> Basis {
    Basis::lowest_three_plus_x_line(cfg.dip.x_line_max_m.max(1))
}

pub fn cmd_dip(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<DipSummary>> {
    let geom = cfg.geometry()?;
    let integrator = Integrator::new(cfg.dip.quadrature, geom).map_err(|e| config_err("dip.quadrature", e))?;
    let basis = dip_basis(cfg);
    let state = uniform_spdc_state(&basis)?;
    let channel = cfg.channel.build(&basis)?;
    let detection = cfg.detection_config()?;
    let source = PairSource::new(&state, &channel)?;
    let d = &cfg.dip;
    let scan_mm = grid(d.scan_start_mm, d.scan_stop_mm, d.scan_step_mm);

    // the edge normal and the probe scan both run along +x
    let b_settings: Vec<AnalyzerSetting> =
        scan_mm.iter().map(|&s| AnalyzerSetting::gaussian_probe(FRAC_PI_2, s * 1e-3, geom)).collect();
    let b_vectors = b_settings
        .par_iter()
        .map(|s| analyzer_vector(s, &basis, &integrator))
        .collect::<Result<Vec<_>>>()?;
    let b_marginals = b_vectors.iter().map(|v| source.marginal(v, Arm::B)).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut series = Vec::new();
    for (k, &dpp) in d.delta_pp_mm.iter().enumerate() {
        let sa = AnalyzerSetting { delta_pp: dpp * 1e-3, ..AnalyzerSetting::centered(FRAC_PI_2, geom) };
        let a = analyzer_vector(&sa, &basis, &integrator)?;
        let offset = (k * scan_mm.len()) as u64;
        let recs: Vec<CoincidenceRecord> = b_settings
            .par_iter()
            .zip(&b_vectors)
            .enumerate()
            .map(|(i, (sb, b))| measure(&source, (&sa, &a), (sb, b), &detection, offset + i as u64, cfg.noiseless))
            .collect::<Result<_>>()?;
        let mut theory_curve = Vec::with_capacity(recs.len());
        let mut count_curve = Vec::with_capacity(recs.len());
        for ((r, &s), &mb) in recs.iter().zip(&scan_mm).zip(&b_marginals) {
            let theory = if mb > 0.0 { r.expected_rate / mb } else { 0.0 };
            let counts_norm = if r.singles_b > 0 { r.counts as f64 / r.singles_b as f64 } else { 0.0 };
            theory_curve.push((s, theory));
            count_curve.push((s, counts_norm));
            rows.push(DipRow { delta_pp_mm: dpp, delta_smf_mm: s, prob: r.expected_rate, counts_norm, theory });
        }
        let dip = find_dip(&theory_curve, None).ok();
        let counts_dip = find_dip(&count_curve, d.smoothing).ok();
        summaries.push(DipSummary {
            delta_pp_mm: dpp,
            dip_mm: dip.map(|x| x.position),
            visibility: dip.map(|x| x.visibility),
            counts_dip_mm: counts_dip.map(|x| x.position),
            counts_visibility: counts_dip.map(|x| x.visibility),
        });
        series.push(Series { label: format!("dPP = {dpp} mm"), points: theory_curve });
    }
    write_csv(&out_dir.join("dip.csv"), &rows)?;
    write_json(&out_dir.join("dip_summary.json"), &summaries)?;
    line_plot_svg(&out_dir.join("dip.svg"), "Nonlocal dip", "delta_SMF,B (mm)", "coincidences / singles B", &series)?;
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    pub delay_ps_per_m: f64,
    pub length_m: f64,
    pub delta_tau_ps: f64,
    pub gamma: f64,
    pub measured_delay_ps_per_m: Option<f64>,
    pub gamma_measured: Option<f64>,
}

pub fn cmd_dispersion(cfg: &ExperimentConfig, out_dir: &Path) -> Result<DispersionSummary> {
    let d = &cfg.dispersion;
    let delay = capillary_intermodal_delay(&d.capillary())?;
    let filter = d.spectral_filter()?;
    let summary = DispersionSummary {
        delay_ps_per_m: delay * 1e12,
        length_m: d.length_m,
        delta_tau_ps: delay * d.length_m * 1e12,
        gamma: coherence_factor(delay, d.length_m, &filter),
        measured_delay_ps_per_m: d.measured_delay_ps_per_m,
        gamma_measured: d.measured_delay_ps_per_m.map(|m| coherence_factor(m * 1e-12, d.length_m, &filter)),
    };
    write_csv(&out_dir.join("dispersion.csv"), std::slice::from_ref(&summary))?;
    write_json(&out_dir.join("dispersion.json"), &summary)?;
    Ok(summary)
}

/// Reads fringe-schema observations as centered-plate records.
pub fn read_observations(path: &Path, cfg: &ExperimentConfig) -> Result<Vec<CoincidenceRecord>> {
    let geom = cfg.geometry()?;
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Config { path: "fit.observations_csv".into(), message: e.to_string() })?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let r: FringeRow = row.map_err(|e| Error::Config { path: "fit.observations_csv".into(), message: e.to_string() })?;
        out.push(CoincidenceRecord {
            setting_a: AnalyzerSetting::centered(r.alpha_deg.to_radians(), geom),
            setting_b: AnalyzerSetting::centered(r.beta_deg.to_radians(), geom),
            expected_rate: r.prob,
            counts: r.counts,
            singles_a: r.singles_a,
            singles_b: r.singles_b,
        });
    }
    Ok(out)
}

/// `base_dir` resolves a relative observations path.
pub fn cmd_fit(cfg: &ExperimentConfig, base_dir: &Path, out_dir: &Path) -> Result<FitResult> {
    let observations = match &cfg.fit.observations_csv {
        Some(p) => read_observations(&base_dir.join(p), cfg)?,
        None => Vec::new(),
    };
    let state = cfg.state()?;
    let problem = FitProblem {
        observations,
        targets: cfg.fit.targets.clone(),
        free: cfg.fit.free.iter().map(|f| f.spec()).collect(),
        channel: cfg.channel.build(state.basis())?,
        state,
        detection: cfg.detection_config()?,
        integrator: cfg.integrator()?,
        seed: cfg.fit.start_seed,
    };
    let result = fit_channel(&problem)?;
    write_json(&out_dir.join("fit_result.json"), &result)?;
    Ok(result)
}
