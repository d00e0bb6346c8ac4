//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every entry point takes the experiment configuration as a JSON string with
//! the same schema as the TOML files used by the command-line tool.

use afcpap::bloch::{velocity_comb, EvolveOptions};
use afcpap::config::{self, ExperimentConfig};
use afcpap::experiment::{guides, ofc_grid};
use afcpap::model::{afc_metrics_analytic, VelocityGrid};
use afcpap::pulses::{ofc_spectrum, Field};
use afcpap::to_hz;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn parse(config_json: &str) -> Result<ExperimentConfig, String> {
    let value = serde_json::from_str(config_json).map_err(|e| e.to_string())?;
    config::from_value(value).map_err(|e| e.to_string())
}

/// Closed-form figures of merit in MHz and µs.
pub fn metrics_json(config_json: &str) -> Result<String, String> {
    let cfg = parse(config_json)?;
    let train = cfg.train().map_err(|e| e.to_string())?;
    let delta0 = cfg.detunings().map_err(|e| e.to_string())?.pump.abs();
    let system = cfg.system();
    let a = afc_metrics_analytic(train.pump_rabi0, train.sigma, train.t_int, delta0, &system).map_err(|e| e.to_string())?;
    let g = guides(&cfg).map_err(|e| e.to_string())?;
    let m = a.metrics;
    Ok(json!({
        "bandwidth_mhz": to_hz(m.gamma) / 1e6,
        "separation_mhz": to_hz(m.delta_sep) / 1e6,
        "tooth_width_mhz": to_hz(m.peak_fwhm) / 1e6,
        "finesse": m.finesse,
        "teeth": m.n_peaks,
        "retrieval_time_us": m.retrieval_time * 1e6,
        "width_formula_valid": a.width_valid,
        "threshold_ratio": g.oz_threshold_ratio,
        "finesse_boundary_mhz": to_hz(g.finesse_boundary_delta0_rad_s) / 1e6,
    })
    .to_string())
}

/// Pump-train spectrum: the first half holds frequencies (MHz), the second |Ω̃|.
pub fn spectrum(config_json: &str, bins_per_tooth: usize, span_sigma: f64) -> Result<Vec<f64>, String> {
    let cfg = parse(config_json)?;
    let train = cfg.train().map_err(|e| e.to_string())?;
    let grid = ofc_grid(&train, bins_per_tooth.max(16), span_sigma);
    let s = ofc_spectrum(&train, Field::Pump, &grid).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = s.frequencies.iter().map(|w| to_hz(*w) / 1e6).collect();
    out.extend(s.amplitudes.iter().map(|a| a.norm()));
    Ok(out)
}

/// Final ρ33 on `points` velocity classes in [v_min, v_max].
pub fn comb(config_json: &str, v_min: f64, v_max: f64, points: usize) -> Result<Vec<f64>, String> {
    let cfg = parse(config_json)?;
    let grid = VelocityGrid::new(v_min, v_max, points).map_err(|e| e.to_string())?;
    let train = cfg.train().map_err(|e| e.to_string())?;
    let det = cfg.detunings().map_err(|e| e.to_string())?;
    let gas = cfg.gas().map_err(|e| e.to_string())?;
    let vc = velocity_comb(&cfg.system(), &train, det, &gas, &grid, &EvolveOptions::default()).map_err(|e| e.to_string())?;
    Ok(vc.rho33)
}

#[wasm_bindgen(js_name = analyticMetrics)]
pub fn analytic_metrics(config_json: &str) -> Result<String, JsError> {
    metrics_json(config_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = pumpSpectrum)]
pub fn pump_spectrum(config_json: &str, bins_per_tooth: usize, span_sigma: f64) -> Result<Vec<f64>, JsError> {
    spectrum(config_json, bins_per_tooth, span_sigma).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = velocityComb)]
pub fn velocity_comb_js(config_json: &str, v_min: f64, v_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    comb(config_json, v_min, v_max, points).map_err(|e| JsError::new(&e))
}
