//! Experiment configuration: a nested TOML document (or a previously written
//! run manifest) parsed into typed sections.
//!
//! Frequencies are given in Hz and converted to rad/s by the accessors below.
//! Quantities may be plain SI numbers or strings with a unit suffix
//! (`"6.2 ns"`, `"151 MHz"`, `"2 cm"`).

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::bloch::{Detunings, EvolveOptions, StepPolicy};
use crate::constants::AMU;
use crate::hz;
use crate::memory::{RetrievalMode, StorageConfig};
use crate::model::{AtomicSystem, GasParameters, VelocityGrid};
use crate::pulses::{default_envelope_width, PulseTrain, StirapPulses};
use crate::{Error, Result};

struct UnitVisitor {
    what: &'static str,
    units: &'static [(&'static str, i32)],
}

impl<'de> Visitor<'de> for UnitVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a {} as a number or a string with a unit", self.what)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, s: &str) -> Result<f64, E> {
        parse_with_unit(s, self.units)
            .ok_or_else(|| E::custom(format!("cannot read `{s}` as a {}", self.what)))
    }
}

/// `"6.2 ns"` → 6.2e-9. The exponent is spliced into the literal so the
/// result is the correctly rounded double of the written value.
fn parse_with_unit(s: &str, units: &[(&str, i32)]) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    for &(unit, exp) in units {
        let Some(number) = s.strip_suffix(unit) else { continue };
        let number = number.trim_end();
        if number.is_empty() || number.ends_with(|c: char| c.is_alphabetic() && c != 'e' && c != 'E') {
            continue;
        }
        let (mantissa, own) = match number.split_once(['e', 'E']) {
            Some((m, e)) => (m, e.parse::<i32>().ok()?),
            None => (number, 0),
        };
        let v = format!("{mantissa}e{}", own + exp).parse::<f64>().ok();
        if v.is_some_and(f64::is_finite) {
            return v;
        }
    }
    None
}

macro_rules! quantity {
    ($(#[$doc:meta])* $name:ident, $what:literal, $units:expr) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
        pub struct $name(pub f64);

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_f64(self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                d.deserialize_any(UnitVisitor { what: $what, units: $units }).map($name)
            }
        }
    };
}

quantity!(
    /// Ordinary frequency in Hz.
    Hertz,
    "frequency",
    &[("THz", 12), ("GHz", 9), ("MHz", 6), ("kHz", 3), ("Hz", 0)]
);
quantity!(
    /// Time in seconds.
    Seconds,
    "time",
    &[("ps", -12), ("ns", -9), ("us", -6), ("µs", -6), ("μs", -6), ("ms", -3), ("s", 0)]
);
quantity!(
    /// Length in metres.
    Meters,
    "length",
    &[("um", -6), ("µm", -6), ("μm", -6), ("mm", -3), ("cm", -2), ("m", 0)]
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSection {
    pub omega12_hz: Hertz,
    pub omega32_hz: Hertz,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega42_hz: Option<Hertz>,
    pub gamma21_per_s: f64,
    pub gamma23_per_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherence_decay_per_s: Option<f64>,
    /// C·m
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipole23_c_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
    /// Atomic mass units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atomic_mass_u: Option<f64>,
    pub density_m3: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_m_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PapSection {
    pub rabi0_hz: Hertz,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_rabi0_hz: Option<Hertz>,
    pub n_pulses: usize,
    pub t_int_s: Seconds,
    pub sigma_s: Seconds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_e_s: Option<Seconds>,
    pub delta0_hz: Hertz,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_delta0_hz: Option<Hertz>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min_m_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max_m_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Integrator step divisor; 2 halves every step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end_s: Option<Seconds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_prominence: Option<f64>,
    /// Velocity classes per comb tooth for the storage section grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_tooth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSection {
    pub signal_detuning_hz: Hertz,
    /// Absent: compensate the light shift automatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_detuning_hz: Option<Hertz>,
    pub control_rabi_hz: Hertz,
    /// Intervals during which the control field is on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_gate_s: Option<Vec<(Seconds, Seconds)>>,
    pub photon_width_s: Seconds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_center_s: Option<Seconds>,
    pub length_m: Meters,
    pub z_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final_s: Option<Seconds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step_s: Option<Seconds>,
    /// Photon-atom coupling in rad·m^(1/2)/s; derived from the dipole when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default)]
    pub retrieval: RetrievalMode,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_record_every() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted key path into the configuration, e.g. `pap.delta0_hz`.
    pub path: String,
    pub values: Vec<Value>,
}

pub const DEFAULT_SWEEP_CAP: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

impl SweepSpec {
    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Axis values of cell `index`, last axis fastest.
    pub fn cell(&self, mut index: usize) -> Vec<&Value> {
        let mut out = vec![&Value::Null; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.values.len();
            out[k] = &axis.values[index % n];
            index /= n;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min_m_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max_m_s: Option<f64>,
    /// Keep spontaneous decay on; false zeroes both rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OfcField {
    Pump,
    Dump,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OfcSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins_per_tooth: Option<usize>,
    /// Half-span of the grid in units of 1/σ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_sigma: Option<f64>,
    #[serde(default)]
    pub field: OfcField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub atom: AtomSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas: Option<GasSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pap: Option<PapSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ofc: Option<OfcSection>,
}

/// Parse a config document held as a JSON value, reporting the key path of
/// the first offending entry.
pub fn from_value(value: Value) -> Result<ExperimentConfig> {
    let value = unwrap_manifest(value);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let (key, reason) = match missing_field(&inner) {
            Some(field) if path == "." => (field.to_string(), inner.clone()),
            Some(field) => (format!("{path}.{field}"), inner.clone()),
            None => (path, inner),
        };
        Error::config(key, reason)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

/// A manifest carries the resolved config under `config`; accept it as input.
fn unwrap_manifest(value: Value) -> Value {
    match value {
        Value::Object(mut map) if map.contains_key("tool") && map.contains_key("config") => {
            map.remove("config").unwrap_or(Value::Null)
        }
        other => other,
    }
}

/// Parse TOML text.
pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
    from_value(toml_to_value(text)?)
}

pub fn toml_to_value(text: &str) -> Result<Value> {
    toml::from_str::<Value>(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1));
        let at = line.map_or_else(|| "<document>".to_string(), |l| format!("line {l}"));
        Error::config(at, e.message().to_string())
    })
}

/// Load a TOML config or a JSON manifest from disk as a raw value.
pub fn load_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::config("<document>", e.to_string()))
    } else {
        toml_to_value(&text)
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    from_value(load_value(path)?)
}

/// Replace the entry at a dotted key path, creating intermediate tables.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = unwrap_manifest_mut(root);
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(path, "malformed key path"));
    }
    for key in &keys[..keys.len() - 1] {
        let map = node.as_object_mut().ok_or_else(|| Error::config(path, "not a table"))?;
        node = map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let map = node.as_object_mut().ok_or_else(|| Error::config(path, "not a table"))?;
    map.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn unwrap_manifest_mut(value: &mut Value) -> &mut Value {
    let is_manifest = value.get("tool").is_some() && value.get("config").is_some();
    if is_manifest {
        value.get_mut("config").expect("checked above")
    } else {
        value
    }
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section.as_ref().ok_or_else(|| Error::config(name, "section required by this command"))
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.atom;
        positive("atom.omega12_hz", a.omega12_hz.0)?;
        positive("atom.omega32_hz", a.omega32_hz.0)?;
        if a.omega12_hz.0 <= a.omega32_hz.0 {
            return Err(Error::config("atom.omega12_hz", "must exceed atom.omega32_hz"));
        }
        for (k, v) in [("atom.gamma21_per_s", a.gamma21_per_s), ("atom.gamma23_per_s", a.gamma23_per_s)] {
            if !(v >= 0.0) {
                return Err(Error::config(k, "must be non-negative"));
            }
        }
        if let Some(g) = &self.gas {
            positive("gas.density_m3", g.density_m3)?;
            match (g.eta_m_s, g.temperature_k, g.atomic_mass_u) {
                (Some(eta), _, _) => positive("gas.eta_m_s", eta)?,
                (None, Some(t), Some(m)) => {
                    positive("gas.temperature_k", t)?;
                    positive("gas.atomic_mass_u", m)?;
                }
                (None, None, _) => return Err(Error::config("gas.temperature_k", "give eta_m_s or temperature and mass")),
                (None, _, None) => return Err(Error::config("gas.atomic_mass_u", "give eta_m_s or temperature and mass")),
            }
        }
        if let Some(p) = &self.pap {
            positive("pap.rabi0_hz", p.rabi0_hz.0)?;
            positive("pap.t_int_s", p.t_int_s.0)?;
            positive("pap.sigma_s", p.sigma_s.0)?;
            if p.n_pulses < 2 {
                return Err(Error::config("pap.n_pulses", "need at least 2 pulses"));
            }
            if p.sigma_s.0 >= p.t_int_s.0 / 4.0 {
                return Err(Error::config("pap.sigma_s", "must be below t_int_s/4"));
            }
            if let Some(s) = p.sigma_e_s {
                positive("pap.sigma_e_s", s.0)?;
            }
        }
        if let (Some(lo), Some(hi)) = (self.grid.v_min_m_s, self.grid.v_max_m_s) {
            if lo >= hi {
                return Err(Error::config("grid.v_max_m_s", "must exceed grid.v_min_m_s"));
            }
        }
        if self.grid.v_min_m_s.is_some() != self.grid.v_max_m_s.is_some() {
            return Err(Error::config("grid.v_min_m_s", "give both bounds or neither"));
        }
        if let Some(r) = self.grid.refinement {
            if !(r >= 1.0) {
                return Err(Error::config("grid.refinement", "must be ≥ 1"));
            }
        }
        if let Some(s) = &self.storage {
            positive("storage.photon_width_s", s.photon_width_s.0)?;
            positive("storage.length_m", s.length_m.0)?;
            if s.signal_detuning_hz.0 == 0.0 {
                return Err(Error::config("storage.signal_detuning_hz", "must be nonzero"));
            }
            if s.z_points < 3 {
                return Err(Error::config("storage.z_points", "need at least 3"));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.axes.is_empty() {
                return Err(Error::config("sweep.axes", "at least one axis"));
            }
            let cap = sw.cap.unwrap_or(DEFAULT_SWEEP_CAP);
            let cells = sw.cell_count();
            if cells == 0 || cells > cap {
                return Err(Error::config("sweep.axes", format!("{cells} cells, allowed 1..={cap}")));
            }
            for o in &sw.outputs {
                if !SWEEP_OUTPUTS.contains(&o.as_str()) {
                    return Err(Error::config("sweep.outputs", format!("unknown output `{o}`")));
                }
            }
        }
        Ok(())
    }

    pub fn system(&self) -> AtomicSystem {
        let a = &self.atom;
        let mut s = AtomicSystem::new(hz(a.omega12_hz.0), hz(a.omega32_hz.0), a.gamma21_per_s, a.gamma23_per_s);
        if let Some(w) = a.omega42_hz {
            s = s.with_omega42(hz(w.0));
        }
        s.coherence_decay = a.coherence_decay_per_s;
        s.dipole23 = a.dipole23_c_m;
        s
    }

    pub fn gas(&self) -> Result<GasParameters> {
        let g = require(&self.gas, "gas")?;
        Ok(match g.eta_m_s {
            Some(eta) => GasParameters::with_eta(eta, g.density_m3),
            None => GasParameters {
                temperature: g.temperature_k.unwrap_or_default(),
                atomic_mass: g.atomic_mass_u.unwrap_or_default() * AMU,
                density: g.density_m3,
                eta_override: None,
            },
        })
    }

    pub fn pap(&self) -> Result<&PapSection> {
        require(&self.pap, "pap")
    }

    pub fn train(&self) -> Result<PulseTrain> {
        let p = self.pap()?;
        let mut train = PulseTrain::new(hz(p.rabi0_hz.0), p.n_pulses, p.t_int_s.0, p.sigma_s.0);
        if let Some(d) = p.dump_rabi0_hz {
            train.dump_rabi0 = hz(d.0);
        }
        if let Some(s) = p.sigma_e_s {
            train = train.with_sigma_e(s.0);
        }
        Ok(train)
    }

    pub fn envelopes(&self) -> Result<StirapPulses> {
        Ok(self.train()?.envelopes())
    }

    pub fn detunings(&self) -> Result<Detunings> {
        let p = self.pap()?;
        Ok(Detunings { pump: hz(p.delta0_hz.0), dump: hz(p.dump_delta0_hz.unwrap_or(p.delta0_hz).0) })
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        let policy = StepPolicy { refinement: self.grid.refinement.unwrap_or(1.0), ..StepPolicy::default() };
        EvolveOptions { t_start: None, t_end: self.grid.t_end_s.map(|t| t.0), policy }
    }

    /// The explicit velocity grid, when one is configured.
    pub fn explicit_grid(&self) -> Result<Option<VelocityGrid>> {
        match (self.grid.v_min_m_s, self.grid.v_max_m_s) {
            (Some(lo), Some(hi)) => {
                let n = self.grid.points.ok_or_else(|| Error::config("grid.points", "required with explicit bounds"))?;
                VelocityGrid::new(lo, hi, n).map(Some).map_err(|e| Error::config("grid", e.to_string()))
            }
            _ => Ok(None),
        }
    }

    pub fn storage(&self) -> Result<StorageConfig> {
        let s = require(&self.storage, "storage")?;
        Ok(StorageConfig {
            signal_detuning: hz(s.signal_detuning_hz.0),
            control_detuning: s.control_detuning_hz.map(|h| hz(h.0)),
            control_rabi: hz(s.control_rabi_hz.0),
            control_gate: s.control_gate_s.as_ref().map(|g| g.iter().map(|(a, b)| (a.0, b.0)).collect()),
            photon_width: s.photon_width_s.0,
            photon_center: s.photon_center_s.map(|t| t.0),
            length: s.length_m.0,
            z_points: s.z_points,
            t_final: s.t_final_s.map(|t| t.0),
            time_step: s.time_step_s.map(|t| t.0),
            coupling: s.coupling,
            retrieval: s.retrieval,
            record_every: s.record_every,
        })
    }

    /// Fill every default that can be stated without running anything, so the
    /// manifest spells out the parameters that were used.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut out = self.clone();
        let system = self.system();
        out.atom.coherence_decay_per_s = Some(system.coherence_decay());
        if let Some(p) = out.pap.as_mut() {
            p.dump_rabi0_hz.get_or_insert(p.rabi0_hz);
            p.dump_delta0_hz.get_or_insert(p.delta0_hz);
            let tau = (p.n_pulses.max(1) - 1) as f64 * p.t_int_s.0;
            p.sigma_e_s.get_or_insert(Seconds(default_envelope_width(tau)));
        }
        out.grid.refinement.get_or_insert(1.0);
        out.grid.min_prominence.get_or_insert(crate::comb::DEFAULT_MIN_PROMINENCE);
        if let Some(sw) = out.sweep.as_mut() {
            sw.cap.get_or_insert(DEFAULT_SWEEP_CAP);
        }
        out
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Metric names a sweep table may request.
pub const SWEEP_OUTPUTS: &[&str] = &[
    "eta_s",
    "eta_r",
    "echo_time_s",
    "od_effective",
    "eta_r_conjugate",
    "mean_rho33",
    "gamma_rad_s",
    "delta_sep_rad_s",
    "n_peaks",
    "peak_fwhm_rad_s",
    "finesse",
    "finesse_analytic",
    "peak_fwhm_analytic_rad_s",
];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FIG4: &str = r#"
[atom]
omega12_hz = "1592.5 THz"
omega32_hz = "637 THz"
gamma21_per_s = 1e7
gamma23_per_s = 1e7

[gas]
eta_m_s = 350
density_m3 = 1.0

[pap]
rabi0_hz = "151 MHz"
n_pulses = 16
t_int_s = "0.17 us"
sigma_s = "6.2 ns"
delta0_hz = "360 MHz"
"#;

    #[test]
    fn units_are_normalised() {
        let cfg = from_toml_str(FIG4).unwrap();
        let p = cfg.pap().unwrap();
        assert_eq!(p.sigma_s.0, 6.2e-9);
        assert_eq!(p.t_int_s.0, 0.17e-6);
        assert_eq!(p.rabi0_hz.0, 151e6);
        assert_eq!(cfg.atom.omega12_hz.0, 1592.5e12);
        assert_relative_eq!(cfg.system().omega32, hz(637e12));
        assert_eq!(parse_with_unit("2 cm", &[("mm", -3), ("cm", -2), ("m", 0)]), Some(0.02));
        assert_eq!(parse_with_unit("1.5e3 kHz", &[("kHz", 3)]), Some(1.5e6));
        assert_eq!(parse_with_unit("-380.38 MHz", &[("MHz", 6)]), Some(-380.38e6));
        assert_eq!(parse_with_unit("3 furlongs", &[("s", 0)]), None);
    }

    #[test]
    fn missing_key_reports_path() {
        let text = FIG4.replace("sigma_s = \"6.2 ns\"\n", "");
        match from_toml_str(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "pap.sigma_s"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let text = FIG4.replace("[gas]", "[gas]\ncolour = 3");
        match from_toml_str(&text) {
            Err(Error::Config { path, reason }) => {
                assert!(path.starts_with("gas"), "{path}");
                assert!(reason.contains("colour"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
        let text = FIG4.replace("[gas]", "[gaz]\nx = 1\n[gas]");
        assert!(matches!(from_toml_str(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn bad_unit_rejected() {
        let text = FIG4.replace("\"6.2 ns\"", "\"6.2 MHz\"");
        match from_toml_str(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "pap.sigma_s"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolved_round_trips_through_json() {
        let cfg = from_toml_str(FIG4).unwrap().resolved();
        let manifest = serde_json::json!({ "tool": { "name": "x" }, "config": cfg.to_value() });
        let text = serde_json::to_string_pretty(&manifest).unwrap();
        let back = from_value(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.resolved(), cfg);
        let train = back.train().unwrap();
        assert_relative_eq!(train.sigma_e, default_envelope_width(15.0 * 0.17e-6), max_relative = 1e-15);
    }

    #[test]
    fn sweep_cells_enumerate_last_axis_fastest() {
        let spec = SweepSpec {
            axes: vec![
                SweepAxis { path: "a".into(), values: vec![1.into(), 2.into()] },
                SweepAxis { path: "b".into(), values: vec![10.into(), 20.into(), 30.into()] },
            ],
            outputs: vec![],
            cap: None,
        };
        assert_eq!(spec.cell_count(), 6);
        assert_eq!(spec.cell(0), vec![&Value::from(1), &Value::from(10)]);
        assert_eq!(spec.cell(4), vec![&Value::from(2), &Value::from(20)]);
    }

    #[test]
    fn sweep_cap_enforced() {
        let mut text = FIG4.to_string();
        text.push_str("[sweep]\noutputs = [\"finesse\"]\ncap = 2\n[[sweep.axes]]\npath = \"pap.n_pulses\"\nvalues = [4, 8, 16]\n");
        match from_toml_str(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "sweep.axes"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn set_path_overrides() {
        let mut v = toml_to_value(FIG4).unwrap();
        set_path(&mut v, "pap.delta0_hz", Value::from("100 MHz")).unwrap();
        let cfg = from_value(v).unwrap();
        assert_eq!(cfg.pap().unwrap().delta0_hz.0, 100e6);
    }
}
