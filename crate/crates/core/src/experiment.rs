//! Command-level runs. Each `run_*` takes a parsed configuration and an output
//! directory, writes its artifacts plus `manifest.json`, and returns a report.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bloch::{default_velocity_grid, velocity_comb, VelocityComb};
use crate::comb::{detect_peaks, fit_comb_model, vc_to_afc, AfcProfile, CombFit, MeasuredMetrics, DEFAULT_MIN_PROMINENCE};
use crate::config::{self, ExperimentConfig, OfcField, SweepSpec};
use crate::io;
use crate::memory::{default_section_grid, propagate, Medium, MemoryResult, RetrievalMode, StorageConfig};
use crate::model::{afc_metrics_analytic, design_conditions, AfcMetrics, AnalyticAfc, VelocityGrid, FINESSE_PARAMETER_BOUND};
use crate::pulses::{ofc_spectrum, Field, PulseTrain};
use crate::stirapoz::{default_map_velocities, oz_map, pap_width_from_stirap, stirap_widths, OzMap};
use crate::{Error, Result};

pub const TOOL_NAME: &str = "afcpap";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest per-class change in ρ33 accepted when the integrator step is halved.
pub const COMB_CONVERGENCE_TOL: f64 = 1e-6;
/// Largest change in either efficiency accepted under grid refinement.
pub const STORE_CONVERGENCE_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub check_convergence: bool,
    pub keep_cells: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Info,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub event: &'static str,
    pub message: String,
}

impl Diagnostic {
    fn warn(event: &'static str, message: impl Into<String>) -> Self {
        Diagnostic { level: Level::Warn, event, message: message.into() }
    }

    fn info(event: &'static str, message: impl Into<String>) -> Self {
        Diagnostic { level: Level::Info, event, message: message.into() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub diagnostics: Vec<Diagnostic>,
    pub summary: Value,
}

impl Report {
    fn write_json(&mut self, out: &Path, name: &str, value: &impl Serialize) -> Result<()> {
        let path = out.join(name);
        io::write_json(&path, value)?;
        self.files.push(path);
        Ok(())
    }

    fn add(&mut self, path: PathBuf) {
        self.files.push(path);
    }
}

pub fn manifest(command: &str, cfg: &ExperimentConfig, derived: Value, artifacts: &[PathBuf]) -> Value {
    let names: Vec<String> = artifacts
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    json!({
        "tool": { "name": TOOL_NAME, "version": TOOL_VERSION },
        "command": command,
        "config": cfg.resolved().to_value(),
        "derived": derived,
        "artifacts": names,
    })
}

/// Comb figures of merit in the exported layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub gamma_rad_s: f64,
    pub delta_sep_rad_s: f64,
    pub n_peaks: Option<f64>,
    pub peak_fwhm_rad_s: f64,
    pub finesse: f64,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_peaks_raw: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_time_s: Option<f64>,
}

impl MetricsBlock {
    pub fn analytic(m: &AfcMetrics) -> Self {
        MetricsBlock {
            gamma_rad_s: m.gamma,
            delta_sep_rad_s: m.delta_sep,
            n_peaks: Some(m.n_peaks),
            peak_fwhm_rad_s: m.peak_fwhm,
            finesse: m.finesse,
            method: "analytic".into(),
            n_peaks_raw: None,
            residual: None,
            retrieval_time_s: Some(m.retrieval_time),
        }
    }

    pub fn measured(m: &MeasuredMetrics) -> Self {
        MetricsBlock {
            gamma_rad_s: m.gamma,
            delta_sep_rad_s: m.delta_sep,
            n_peaks: Some(m.n_peaks as f64),
            peak_fwhm_rad_s: m.peak_fwhm,
            finesse: m.finesse,
            method: "measured".into(),
            n_peaks_raw: Some(m.n_peaks_raw),
            residual: None,
            retrieval_time_s: Some(std::f64::consts::TAU / m.delta_sep),
        }
    }

    pub fn fit(f: &CombFit) -> Self {
        MetricsBlock {
            gamma_rad_s: f.gamma,
            delta_sep_rad_s: f.delta_sep,
            n_peaks: None,
            peak_fwhm_rad_s: f.peak_fwhm,
            finesse: f.delta_sep / f.peak_fwhm,
            method: "fit".into(),
            n_peaks_raw: None,
            residual: Some(f.residual),
            retrieval_time_s: Some(std::f64::consts::TAU / f.delta_sep),
        }
    }
}

/// Reference detunings drawn as guide lines next to sweep results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guides {
    /// Δ⁰ at which Ω₀²σ/Δ⁰ reaches (4/5)√π.
    pub finesse_boundary_delta0_rad_s: f64,
    /// Δ⁰ = Ω₀√(ω32/ω13).
    pub oz_threshold_delta0_rad_s: f64,
    pub oz_threshold_ratio: f64,
    /// √(ω32/ω12), the alternative bound.
    pub oz_threshold_ratio_omega12: f64,
}

pub fn guides(cfg: &ExperimentConfig) -> Result<Guides> {
    let train = cfg.train()?;
    let system = cfg.system();
    let ratio = (system.omega32 / system.omega13()).sqrt();
    Ok(Guides {
        finesse_boundary_delta0_rad_s: train.pump_rabi0 * train.pump_rabi0 * train.sigma / FINESSE_PARAMETER_BOUND,
        oz_threshold_delta0_rad_s: train.pump_rabi0 * ratio,
        oz_threshold_ratio: ratio,
        oz_threshold_ratio_omega12: (system.omega32 / system.omega12).sqrt(),
    })
}

fn analytic(cfg: &ExperimentConfig, diags: &mut Vec<Diagnostic>) -> Result<Option<AnalyticAfc>> {
    let train = cfg.train()?;
    let delta0 = cfg.detunings()?.pump.abs();
    if delta0 == 0.0 {
        diags.push(Diagnostic::warn("analytic", "nominal detuning is zero; closed-form width undefined"));
        return Ok(None);
    }
    let a = afc_metrics_analytic(train.pump_rabi0, train.sigma, train.t_int, delta0, &cfg.system())?;
    if !a.width_valid {
        diags.push(Diagnostic::warn("analytic", "detuning below the optimal-zone threshold; closed-form width outside its range"));
    }
    Ok(Some(a))
}

fn analytic_document(cfg: &ExperimentConfig, a: Option<&AnalyticAfc>) -> Result<Value> {
    let train = cfg.train()?;
    let system = cfg.system();
    let delta0 = cfg.detunings()?.pump.abs();
    let design = design_conditions(train.pump_rabi0, train.sigma, delta0.max(f64::MIN_POSITIVE), &system);
    let stirap = stirap_widths(delta0, train.pump_rabi0, &system).ok().map(|w| {
        let pap = pap_width_from_stirap(w.stirap_fwhm, train.sigma, train.t_int).ok();
        json!({
            "regime": w.regime,
            "velocity_width_m_s": w.velocity_width,
            "velocity_width_exact_m_s": w.velocity_width_exact,
            "stirap_fwhm_rad_s": w.stirap_fwhm,
            "pap_fwhm_rad_s": pap,
        })
    });
    Ok(json!({
        "analytic": a.map(|a| {
            let mut v = serde_json::to_value(MetricsBlock::analytic(&a.metrics)).expect("serializable");
            v["width_valid"] = json!(a.width_valid);
            v["width_valid_omega12"] = json!(a.width_valid_omega12);
            v
        }),
        "design": design,
        "guides": guides(cfg)?,
        "stirap": stirap,
        "xi": system.xi(),
        "r": system.r(),
    }))
}

pub fn run_metrics(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let mut report = Report::default();
    let a = analytic(cfg, &mut report.diagnostics)?;
    let doc = analytic_document(cfg, a.as_ref())?;
    report.write_json(out, "metrics.json", &doc)?;
    let m = manifest("metrics", cfg, json!({}), &report.files);
    report.write_json(out, "manifest.json", &m)?;
    report.summary = doc;
    Ok(report)
}

/// Velocity comb plus everything measured on it.
#[derive(Debug, Clone)]
pub struct CombRun {
    pub comb: VelocityComb,
    pub profile: AfcProfile,
    pub analytic: Option<AnalyticAfc>,
    pub measured: Option<MeasuredMetrics>,
    pub fit: Option<CombFit>,
    /// Largest per-class ρ33 change under step halving.
    pub convergence: Option<f64>,
}

impl CombRun {
    pub fn mean_rho33(&self) -> f64 {
        self.comb.rho33.iter().sum::<f64>() / self.comb.rho33.len() as f64
    }
}

pub fn comb_grid(cfg: &ExperimentConfig) -> Result<VelocityGrid> {
    if let Some(g) = cfg.explicit_grid()? {
        return Ok(g);
    }
    let train = cfg.train()?;
    default_velocity_grid(
        &cfg.system(),
        train.pump_rabi0,
        train.sigma,
        train.t_int,
        cfg.detunings()?.pump,
        &cfg.gas()?,
    )
}

pub fn prepare_comb(cfg: &ExperimentConfig, check_convergence: bool, diags: &mut Vec<Diagnostic>) -> Result<CombRun> {
    let system = cfg.system();
    let gas = cfg.gas()?;
    let train = cfg.train()?;
    let det = cfg.detunings()?;
    let grid = comb_grid(cfg)?;
    let opts = cfg.evolve_options();
    diags.push(Diagnostic::info("comb", format!("{} velocity classes, spacing {:e} m/s", grid.len(), grid.spacing())));
    let comb = velocity_comb(&system, &train, det, &gas, &grid, &opts)?;
    let convergence = if check_convergence {
        let finer = crate::bloch::EvolveOptions { policy: opts.policy.halved(), ..opts };
        let fine = velocity_comb(&system, &train, det, &gas, &grid, &finer)?;
        let change = comb.rho33.iter().zip(&fine.rho33).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change > COMB_CONVERGENCE_TOL {
            return Err(Error::NotConverged { quantity: "rho33".into(), change, tolerance: COMB_CONVERGENCE_TOL });
        }
        diags.push(Diagnostic::info("convergence", format!("max rho33 change {change:e}")));
        Some(change)
    } else {
        None
    };
    let profile = vc_to_afc(&comb, system.omega34())?;
    let analytic = analytic(cfg, diags)?;
    let prominence = cfg.grid.min_prominence.unwrap_or(DEFAULT_MIN_PROMINENCE);
    let (measured, fit) = match detect_peaks(&profile, prominence) {
        Ok(peaks) => {
            let measured = peaks.metrics().map_err(|e| diags.push(Diagnostic::warn("measure", e.to_string()))).ok();
            let fit = fit_comb_model(&profile, &peaks).map_err(|e| diags.push(Diagnostic::warn("fit", e.to_string()))).ok();
            (measured, fit)
        }
        Err(e) => {
            diags.push(Diagnostic::warn("peaks", e.to_string()));
            (None, None)
        }
    };
    Ok(CombRun { comb, profile, analytic, measured, fit, convergence })
}

fn comb_document(cfg: &ExperimentConfig, run: &CombRun) -> Result<Value> {
    let mut doc = analytic_document(cfg, run.analytic.as_ref())?;
    doc["measured"] = json!(run.measured.as_ref().map(MetricsBlock::measured));
    doc["fit"] = json!(run.fit.as_ref().map(MetricsBlock::fit));
    doc["mean_rho33"] = json!(run.mean_rho33());
    if let Some(c) = run.convergence {
        doc["convergence"] = json!({ "max_rho33_change": c, "tolerance": COMB_CONVERGENCE_TOL });
    }
    Ok(doc)
}

pub fn run_comb(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Report> {
    let mut report = Report::default();
    let run = prepare_comb(cfg, opts.check_convergence, &mut report.diagnostics)?;
    let comb_path = out.join("comb.csv");
    io::write_comb(&comb_path, &run.comb)?;
    report.add(comb_path);
    let afc_path = out.join("afc.csv");
    io::write_afc(&afc_path, &run.profile)?;
    report.add(afc_path);
    let doc = comb_document(cfg, &run)?;
    report.write_json(out, "metrics.json", &doc)?;
    let derived = json!({
        "grid": { "v_min_m_s": run.comb.grid.v_min, "v_max_m_s": run.comb.grid.v_max, "points": run.comb.grid.len() },
        "t_end_s": run.comb.params.t_end,
        "step_policy": run.comb.params.policy,
        "omega_map_rad_s": run.profile.omega_map,
    });
    let m = manifest("comb", cfg, derived, &report.files);
    report.write_json(out, "manifest.json", &m)?;
    report.summary = doc;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorySummary {
    pub eta_s: f64,
    pub eta_r: f64,
    pub echo_time_s: f64,
    pub od_effective: f64,
    pub transmitted: f64,
}

impl From<&MemoryResult> for MemorySummary {
    fn from(r: &MemoryResult) -> Self {
        MemorySummary {
            eta_s: r.storage_efficiency,
            eta_r: r.retrieval_efficiency,
            echo_time_s: r.echo_time,
            od_effective: r.od_effective,
            transmitted: r.transmitted,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StoreRun {
    pub comb: VelocityComb,
    pub medium: Medium,
    pub storage: StorageConfig,
    pub result: MemoryResult,
    /// Every retrieval variant that was run, the configured one first.
    pub variants: Vec<(RetrievalMode, MemorySummary)>,
    /// Efficiency changes under halved time step and doubled z resolution.
    pub convergence: Option<(f64, f64)>,
}

impl StoreRun {
    pub fn summary(&self) -> MemorySummary {
        MemorySummary::from(&self.result)
    }

    pub fn variant(&self, mode: RetrievalMode) -> Option<MemorySummary> {
        self.variants.iter().find(|(m, _)| *m == mode).map(|(_, s)| *s)
    }
}

fn mode_key(mode: RetrievalMode) -> &'static str {
    match mode {
        RetrievalMode::Backward => "backward",
        RetrievalMode::BackwardConjugate => "backward_conjugate",
        RetrievalMode::Forward => "forward",
    }
}

/// Comb section around the photon spectrum, then propagation of the photon through it.
pub fn prepare_store(cfg: &ExperimentConfig, check_convergence: bool, diags: &mut Vec<Diagnostic>) -> Result<StoreRun> {
    let system = cfg.system();
    let gas = cfg.gas()?;
    let train = cfg.train()?;
    let det = cfg.detunings()?;
    let storage = cfg.storage()?;
    let xi = system.xi();
    let tooth_spacing = xi * std::f64::consts::TAU / train.t_int;
    let retrieval_time = train.t_int / xi;
    let tooth_width = analytic(cfg, &mut Vec::new())?.map_or(tooth_spacing, |a| a.metrics.peak_fwhm.min(tooth_spacing));
    let grid = match cfg.explicit_grid()? {
        Some(g) => g,
        None => default_section_grid(
            &system,
            storage.photon_width,
            tooth_spacing,
            tooth_width,
            cfg.grid.per_tooth.unwrap_or(8.0),
        )?,
    };
    diags.push(Diagnostic::info("comb", format!("{} velocity classes, spacing {:e} m/s", grid.len(), grid.spacing())));
    let comb = velocity_comb(&system, &train, det, &gas, &grid, &cfg.evolve_options())?;
    let medium = Medium::from_comb(&comb, &gas, retrieval_time);
    let result = propagate(&medium, &storage, &system, &gas)?;
    let mut variants = vec![(storage.retrieval, MemorySummary::from(&result))];
    let other = match storage.retrieval {
        RetrievalMode::Backward => Some(RetrievalMode::BackwardConjugate),
        RetrievalMode::BackwardConjugate => Some(RetrievalMode::Backward),
        RetrievalMode::Forward => None,
    };
    if let Some(mode) = other {
        let alt = StorageConfig { retrieval: mode, ..storage.clone() };
        variants.push((mode, MemorySummary::from(&propagate(&medium, &alt, &system, &gas)?)));
    }
    let convergence = if check_convergence {
        let fine = StorageConfig {
            time_step: Some(0.5 * storage.time_step()),
            z_points: 2 * storage.z_points - 1,
            record_every: storage.record_every * 2,
            ..storage.clone()
        };
        let f = propagate(&medium, &fine, &system, &gas)?;
        let ds = (f.storage_efficiency - result.storage_efficiency).abs();
        let dr = (f.retrieval_efficiency - result.retrieval_efficiency).abs();
        let worst = ds.max(dr);
        if worst > STORE_CONVERGENCE_TOL {
            let quantity = if ds >= dr { "eta_s" } else { "eta_r" };
            return Err(Error::NotConverged { quantity: quantity.into(), change: worst, tolerance: STORE_CONVERGENCE_TOL });
        }
        diags.push(Diagnostic::info("convergence", format!("eta_s change {ds:e}, eta_r change {dr:e}")));
        Some((ds, dr))
    } else {
        None
    };
    Ok(StoreRun { comb, medium, storage, result, variants, convergence })
}

fn memory_document(cfg: &ExperimentConfig, run: &StoreRun) -> Result<Value> {
    let s = run.summary();
    let mut doc = json!({
        "mode": run.storage.retrieval,
        "eta_s": s.eta_s,
        "eta_r": s.eta_r,
        "echo_time_s": s.echo_time_s,
        "od_effective": s.od_effective,
        "transmitted": s.transmitted,
        "t_switch_s": run.result.t_switch,
        "t_final_s": run.result.t_final,
        "photon_center_s": run.result.photon_center,
        "retrieval_time_s": run.medium.retrieval_time,
        "config": cfg.resolved().to_value(),
    });
    for (mode, summary) in &run.variants {
        doc[mode_key(*mode)] = json!(summary);
    }
    if let Some((ds, dr)) = run.convergence {
        doc["convergence"] = json!({ "eta_s_change": ds, "eta_r_change": dr, "tolerance": STORE_CONVERGENCE_TOL });
    }
    Ok(doc)
}

pub fn run_store(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Report> {
    let mut report = Report::default();
    let run = prepare_store(cfg, opts.check_convergence, &mut report.diagnostics)?;
    let s = run.summary();
    if s.eta_r > s.eta_s + 0.01 {
        report.diagnostics.push(Diagnostic::warn("memory", "retrieval exceeds storage efficiency"));
    }
    for (name, writer) in [
        ("field.csv", io::write_field as fn(&Path, &MemoryResult) -> Result<()>),
        ("spacetime.csv", io::write_spacetime),
    ] {
        let path = out.join(name);
        writer(&path, &run.result)?;
        report.add(path);
    }
    let profile_path = out.join("afc.csv");
    io::write_afc(&profile_path, &vc_to_afc(&run.comb, cfg.system().omega34())?)?;
    report.add(profile_path);
    let doc = memory_document(cfg, &run)?;
    report.write_json(out, "memory.json", &doc)?;
    let st = &run.storage;
    let derived = json!({
        "grid": { "v_min_m_s": run.comb.grid.v_min, "v_max_m_s": run.comb.grid.v_max, "points": run.comb.grid.len() },
        "control_detuning_rad_s": st.control_detuning(),
        "photon_center_s": st.photon_center(),
        "t_final_s": run.result.t_final,
        "time_step_s": st.time_step(),
        "coupling": st.coupling.unwrap_or_else(|| cfg.system().coupling_g()),
    });
    let m = manifest("store", cfg, derived, &report.files);
    report.write_json(out, "manifest.json", &m)?;
    report.summary = doc;
    Ok(report)
}

const STORE_OUTPUTS: &[&str] = &["eta_s", "eta_r", "echo_time_s", "od_effective", "eta_r_conjugate"];
const COMB_OUTPUTS: &[&str] = &["mean_rho33", "gamma_rad_s", "delta_sep_rad_s", "n_peaks", "peak_fwhm_rad_s", "finesse"];

/// One evaluated sweep cell: its configuration, axis values and requested outputs.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: usize,
    pub config: ExperimentConfig,
    pub axes: Vec<Option<f64>>,
    pub outputs: Vec<Option<f64>>,
    pub diagnostics: Vec<Diagnostic>,
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(value, |v, k| v.get(k))
}

fn cell_config(base: &Value, spec: &SweepSpec, index: usize) -> Result<ExperimentConfig> {
    let mut value = base.clone();
    if let Some(map) = value.as_object_mut() {
        map.remove("sweep");
    }
    for (axis, v) in spec.axes.iter().zip(spec.cell(index)) {
        config::set_path(&mut value, &axis.path, v.clone())?;
    }
    config::from_value(value).map_err(|e| match e {
        Error::Config { path, reason } => Error::config(path, format!("sweep cell {index}: {reason}")),
        other => other,
    })
}

pub fn run_cell(base: &Value, spec: &SweepSpec, index: usize) -> Result<SweepCell> {
    let cfg = cell_config(base, spec, index)?;
    let resolved = cfg.to_value();
    let axes = spec.axes.iter().map(|a| lookup(&resolved, &a.path).and_then(Value::as_f64)).collect();
    let wants = |set: &[&str]| spec.outputs.iter().any(|o| set.contains(&o.as_str()));
    let mut diagnostics = Vec::new();
    let store = if wants(STORE_OUTPUTS) { Some(prepare_store(&cfg, false, &mut diagnostics)?) } else { None };
    let comb = if wants(COMB_OUTPUTS) { Some(prepare_comb(&cfg, false, &mut diagnostics)?) } else { None };
    let an = analytic(&cfg, &mut diagnostics)?;
    let summary = store.as_ref().map(StoreRun::summary);
    let measured = comb.as_ref().and_then(|c| c.measured);
    let outputs = spec
        .outputs
        .iter()
        .map(|name| match name.as_str() {
            "eta_s" => summary.map(|s| s.eta_s),
            "eta_r" => summary.map(|s| s.eta_r),
            "echo_time_s" => summary.map(|s| s.echo_time_s),
            "od_effective" => summary.map(|s| s.od_effective),
            "eta_r_conjugate" => store.as_ref().and_then(|r| r.variant(RetrievalMode::BackwardConjugate)).map(|s| s.eta_r),
            "mean_rho33" => comb.as_ref().map(CombRun::mean_rho33),
            "gamma_rad_s" => measured.map(|m| m.gamma),
            "delta_sep_rad_s" => measured.map(|m| m.delta_sep),
            "n_peaks" => measured.map(|m| m.n_peaks as f64),
            "peak_fwhm_rad_s" => measured.map(|m| m.peak_fwhm),
            "finesse" => measured.map(|m| m.finesse),
            "finesse_analytic" => an.map(|a| a.metrics.finesse),
            "peak_fwhm_analytic_rad_s" => an.map(|a| a.metrics.peak_fwhm),
            _ => None,
        })
        .collect();
    Ok(SweepCell { index, config: cfg, axes, outputs, diagnostics })
}

pub fn run_sweep(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Report> {
    let spec = cfg.sweep.clone().ok_or_else(|| Error::config("sweep", "section required by this command"))?;
    let base = cfg.to_value();
    let n = spec.cell_count();
    let cells = (0..n)
        .into_par_iter()
        .map(|i| run_cell(&base, &spec, i))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<SweepCell>>>()?;
    let mut report = Report::default();
    let header: Vec<&str> = std::iter::once("cell")
        .chain(spec.axes.iter().map(|a| a.path.as_str()))
        .chain(spec.outputs.iter().map(String::as_str))
        .collect();
    let rows = cells.iter().map(|c| {
        std::iter::once(Some(c.index as f64)).chain(c.axes.iter().copied()).chain(c.outputs.iter().copied()).collect::<Vec<_>>()
    });
    let table = out.join("table.csv");
    io::write_csv(&table, &header, rows)?;
    report.add(table);
    for c in &cells {
        for d in &c.diagnostics {
            report.diagnostics.push(Diagnostic { message: format!("cell {}: {}", c.index, d.message), ..d.clone() });
        }
        if opts.keep_cells {
            let dir = out.join("cells").join(format!("cell_{:04}", c.index));
            let outputs: serde_json::Map<String, Value> =
                spec.outputs.iter().cloned().zip(c.outputs.iter().map(|v| json!(v))).collect();
            let m = json!({
                "tool": { "name": TOOL_NAME, "version": TOOL_VERSION },
                "command": "sweep-cell",
                "config": c.config.resolved().to_value(),
                "derived": { "cell": c.index, "outputs": outputs },
                "artifacts": [],
            });
            let path = dir.join("manifest.json");
            io::write_json(&path, &m)?;
        }
    }
    let m = manifest("sweep", cfg, json!({ "cells": n }), &report.files);
    report.write_json(out, "manifest.json", &m)?;
    report.summary = json!({ "cells": n });
    Ok(report)
}

/// Map grid and drive, as configured.
pub fn map_inputs(cfg: &ExperimentConfig) -> Result<(crate::model::AtomicSystem, Vec<f64>, Vec<f64>)> {
    let m = cfg.map.clone().unwrap_or_default();
    let mut system = cfg.system();
    if !m.decay.unwrap_or(true) {
        system.gamma21 = 0.0;
        system.gamma23 = 0.0;
    }
    let rabi0 = cfg.train()?.pump_rabi0;
    let ratio_max = m.ratio_max.unwrap_or(3.0);
    let nr = m.ratio_points.unwrap_or(61).max(2);
    let ratios = (0..nr).map(|i| ratio_max * i as f64 / (nr - 1) as f64).collect();
    let nv = m.v_points.unwrap_or(61);
    let velocities = match (m.v_min_m_s, m.v_max_m_s) {
        (Some(lo), Some(hi)) if hi > lo && nv >= 2 => (0..nv).map(|i| lo + (hi - lo) * i as f64 / (nv - 1) as f64).collect(),
        (None, None) => default_map_velocities(&system, rabi0, ratio_max, nv),
        _ => return Err(Error::config("map.v_min_m_s", "give both bounds with v_max_m_s > v_min_m_s")),
    };
    Ok((system, ratios, velocities))
}

pub fn prepare_map(cfg: &ExperimentConfig) -> Result<(crate::model::AtomicSystem, OzMap)> {
    let (system, ratios, velocities) = map_inputs(cfg)?;
    let pulses = cfg.envelopes()?;
    let map = oz_map(&system, &pulses, &ratios, &velocities, &cfg.evolve_options())?;
    Ok((system, map))
}

pub fn run_stirap_map(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let mut report = Report::default();
    let (system, map) = prepare_map(cfg)?;
    let map_path = out.join("map.csv");
    io::write_map(&map_path, &map)?;
    report.add(map_path);
    let curves_path = out.join("curves.csv");
    io::write_curves(&curves_path, &map, &system)?;
    report.add(curves_path);
    let containment = map.containment(&system);
    if containment < 0.9 {
        report.diagnostics.push(Diagnostic::warn("map", format!("only {:.1}% of the transfer region lies inside the zone", 100.0 * containment)));
    }
    let doc = json!({
        "containment": containment,
        "threshold_ratio": (system.omega32 / system.omega13()).sqrt(),
        "rabi0_rad_s": map.rabi0,
        "ratios": map.ratios.len(),
        "velocities": map.velocities.len(),
    });
    report.write_json(out, "map.json", &doc)?;
    let m = manifest("stirap-map", cfg, json!({ "decay_rates": [system.gamma21, system.gamma23] }), &report.files);
    report.write_json(out, "manifest.json", &m)?;
    report.summary = doc;
    Ok(report)
}

/// Frequency grid spanning ±span/σ with `bins` points per tooth, centred on a grid point at 0.
pub fn ofc_grid(train: &PulseTrain, bins: usize, span_sigma: f64) -> Vec<f64> {
    let step = std::f64::consts::TAU / train.t_int / bins as f64;
    let half = (span_sigma / train.sigma / step).ceil() as i64;
    (-half..=half).map(|k| k as f64 * step).collect()
}

pub fn run_ofc(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let mut report = Report::default();
    let train = cfg.train()?;
    let o = cfg.ofc.clone().unwrap_or_default();
    let grid = ofc_grid(&train, o.bins_per_tooth.unwrap_or(32), o.span_sigma.unwrap_or(4.0));
    let fields: &[(Field, &str)] = match o.field {
        OfcField::Pump => &[(Field::Pump, "pump")],
        OfcField::Dump => &[(Field::Dump, "dump")],
        OfcField::Both => &[(Field::Pump, "pump"), (Field::Dump, "dump")],
    };
    let mut doc = serde_json::Map::new();
    for &(field, name) in fields {
        let spectrum = ofc_spectrum(&train, field, &grid)?;
        let path = out.join(format!("ofc_{name}.csv"));
        io::write_spectrum(&path, &spectrum)?;
        report.add(path);
        doc.insert(
            name.into(),
            json!({
                "envelope_bandwidth_rad_s": spectrum.envelope_bandwidth,
                "tooth_spacing_rad_s": spectrum.tooth_spacing,
                "teeth_rad_s": spectrum.tooth_frequencies(),
            }),
        );
    }
    let doc = Value::Object(doc);
    report.write_json(out, "ofc.json", &doc)?;
    let m = manifest("ofc", cfg, json!({ "points": grid.len() }), &report.files);
    report.write_json(out, "manifest.json", &m)?;
    report.summary = doc;
    Ok(report)
}
