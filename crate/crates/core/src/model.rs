//! Gas and atom parameters, Doppler kinematics, and closed-form comb predictions.
//!
//! All frequencies are angular (rad/s). Configuration layers convert from Hz.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{C, EPSILON_0, HBAR, K_B};
use crate::{Error, Result};

/// Upper bound on Ω₀²σ/Δ⁰ for a comb finesse of about ten: (4/5)√π.
pub const FINESSE_PARAMETER_BOUND: f64 = 0.8 * 1.772_453_850_905_516;

/// Level structure of the Λ system plus the storage state |4⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicSystem {
    /// |1⟩↔|2⟩ transition (rad/s).
    pub omega12: f64,
    /// |3⟩↔|2⟩ transition (rad/s).
    pub omega32: f64,
    /// |4⟩↔|2⟩ transition (rad/s). Zero means |4⟩ is degenerate with |2⟩, so ω34 = ω32.
    pub omega42: f64,
    /// Population decay |2⟩→|1⟩ (1/s).
    pub gamma21: f64,
    /// Population decay |2⟩→|3⟩ (1/s).
    pub gamma23: f64,
    /// Optical coherence decay γ used in the propagation equations; defaults to γ21/2.
    pub coherence_decay: Option<f64>,
    /// |2⟩↔|3⟩ dipole moment (C·m); derived from γ23 when absent.
    pub dipole23: Option<f64>,
}

impl AtomicSystem {
    pub fn new(omega12: f64, omega32: f64, gamma21: f64, gamma23: f64) -> Self {
        Self {
            omega12,
            omega32,
            omega42: 0.0,
            gamma21,
            gamma23,
            coherence_decay: None,
            dipole23: None,
        }
    }

    pub fn with_omega42(mut self, omega42: f64) -> Self {
        self.omega42 = omega42;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega32 > 0.0) {
            return Err(Error::param("omega32", "must be > 0"));
        }
        if self.omega12 == self.omega32 {
            return Err(Error::DegenerateGroundStates);
        }
        if !(self.omega12 > self.omega32) {
            return Err(Error::param("omega12", "must exceed omega32"));
        }
        if self.omega42 < 0.0 {
            return Err(Error::param("omega42", "must be ≥ 0"));
        }
        if self.omega42 > 0.0 && self.omega42 <= self.omega32 {
            return Err(Error::param("omega42", "must exceed omega32 when set"));
        }
        for (name, rate) in [("gamma21", self.gamma21), ("gamma23", self.gamma23)] {
            if !(rate >= 0.0) {
                return Err(Error::param(name, "must be ≥ 0"));
            }
        }
        if let Some(g) = self.coherence_decay {
            if !(g >= 0.0) {
                return Err(Error::param("coherence_decay", "must be ≥ 0"));
            }
        }
        if let Some(mu) = self.dipole23 {
            if !(mu > 0.0) {
                return Err(Error::param("dipole23", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Ground-state splitting ω13 = ω12 − ω32.
    pub fn omega13(&self) -> f64 {
        self.omega12 - self.omega32
    }

    /// Storage transition ω34 = ω42 − ω32, or ω32 when |4⟩ is not separately specified.
    pub fn omega34(&self) -> f64 {
        if self.omega42 > 0.0 {
            self.omega42 - self.omega32
        } else {
            self.omega32
        }
    }

    /// ξ = ω34/ω13.
    pub fn xi(&self) -> f64 {
        self.omega34() / self.omega13()
    }

    /// r = ω12/ω32.
    pub fn r(&self) -> f64 {
        self.omega12 / self.omega32
    }

    pub fn coherence_decay(&self) -> f64 {
        self.coherence_decay.unwrap_or(0.5 * self.gamma21)
    }

    /// Dipole moment of |2⟩↔|3⟩, from the Weisskopf–Wigner rate
    /// γ23 = μ²ω³/(3πε₀ħc³) unless given explicitly.
    pub fn dipole23(&self) -> f64 {
        self.dipole23.unwrap_or_else(|| {
            let w3 = self.omega32.powi(3);
            (3.0 * PI * EPSILON_0 * HBAR * C.powi(3) * self.gamma23 / w3).sqrt()
        })
    }

    /// Photon-atom coupling g = μ23 √(ω32 / 2ε₀ħ), in m^{3/2}/s.
    pub fn coupling_g(&self) -> f64 {
        self.dipole23() * (self.omega32 / (2.0 * EPSILON_0 * HBAR)).sqrt()
    }
}

/// Thermal vapor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasParameters {
    /// K
    pub temperature: f64,
    /// kg
    pub atomic_mass: f64,
    /// Total atomic density ϱ (atoms/m³).
    pub density: f64,
    /// Velocity standard deviation (m/s) overriding √(k_B T/m).
    pub eta_override: Option<f64>,
}

impl GasParameters {
    /// Gas described directly by its velocity spread.
    pub fn with_eta(eta: f64, density: f64) -> Self {
        Self { temperature: 0.0, atomic_mass: 0.0, density, eta_override: Some(eta) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0) {
            return Err(Error::param("density", "must be > 0"));
        }
        match self.eta_override {
            Some(eta) if !(eta > 0.0) => Err(Error::param("eta_override", "must be > 0")),
            Some(_) => Ok(()),
            None if !(self.temperature > 0.0 && self.atomic_mass > 0.0) => Err(Error::param(
                "temperature",
                "temperature and atomic_mass must be > 0 without eta_override",
            )),
            None => Ok(()),
        }
    }

    /// Velocity standard deviation η = √(k_B T/m).
    pub fn eta(&self) -> f64 {
        self.eta_override
            .unwrap_or_else(|| (K_B * self.temperature / self.atomic_mass).sqrt())
    }
}

/// Uniform, strictly increasing velocity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    pub v_min: f64,
    pub v_max: f64,
    pub values: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(v_min: f64, v_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::param("n_points", "velocity grid needs at least 3 points"));
        }
        if !(v_max > v_min) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(Error::param("v_max", "must exceed v_min"));
        }
        let dv = (v_max - v_min) / (n_points - 1) as f64;
        let values = (0..n_points).map(|i| v_min + dv * i as f64).collect();
        Ok(Self { v_min, v_max, values })
    }

    /// Symmetric grid with an odd point count, so that v = 0 is a node.
    pub fn symmetric(half_width: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::param("spacing", "must be > 0"));
        }
        let half = (half_width / spacing).ceil().max(1.0) as usize;
        let v_max = half as f64 * spacing;
        Self::new(-v_max, v_max, 2 * half + 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.v_max - self.v_min) / (self.values.len() - 1) as f64
    }

    /// Trapezoid quadrature weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dv = self.spacing();
        let n = self.values.len();
        (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * dv } else { dv })
            .collect()
    }
}

/// Comb figures of merit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfcMetrics {
    /// Envelope width Γ (rad/s).
    pub gamma: f64,
    /// Peak separation Δδ (rad/s).
    pub delta_sep: f64,
    /// Number of peaks N_c.
    pub n_peaks: f64,
    /// Peak FWHM ϖ (rad/s).
    pub peak_fwhm: f64,
    /// Finesse Δδ/ϖ.
    pub finesse: f64,
    /// Echo time T̃ = 2π/Δδ (s).
    pub retrieval_time: f64,
}

/// Analytic comb prediction together with the validity of the peak-width formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticAfc {
    pub metrics: AfcMetrics,
    /// |Δ⁰| > Ω₀√(ω32/ω13), the threshold of the optimal-zone analysis.
    pub width_valid: bool,
    /// |Δ⁰| > Ω₀√(ω32/ω12), the bound quoted alongside the width formula.
    pub width_valid_omega12: bool,
}

/// Maxwell–Boltzmann density of atoms per unit velocity (atoms·s/m⁴).
pub fn maxwell_boltzmann(v: f64, gas: &GasParameters) -> f64 {
    let eta = gas.eta();
    gas.density / ((2.0 * PI).sqrt() * eta) * (-v * v / (2.0 * eta * eta)).exp()
}

/// Doppler-shifted pump and dump detunings Δ(v) = Δ⁰ + ω⁰v/c.
pub fn doppler_detunings(
    v: f64,
    pump_detuning: f64,
    dump_detuning: f64,
    pump_carrier: f64,
    dump_carrier: f64,
) -> (f64, f64) {
    (
        pump_detuning + pump_carrier * v / C,
        dump_detuning + dump_carrier * v / C,
    )
}

/// Velocity of the comb tooth of the given order: v = (j−k)·Δω·c/ω13.
pub fn v_two_photon(order: i64, delta_omega: f64, omega13: f64) -> Result<f64> {
    if omega13 == 0.0 {
        return Err(Error::DegenerateGroundStates);
    }
    Ok(order as f64 * delta_omega * C / omega13)
}

/// Closed-form comb figures of merit for a PAP-prepared comb.
///
/// `rabi0` is the common peak Rabi frequency Ω₀, `sigma` the sub-pulse width,
/// `t_int` the inter-pulse period, and `detuning` the nominal detuning Δ⁰.
pub fn afc_metrics_analytic(
    rabi0: f64,
    sigma: f64,
    t_int: f64,
    detuning: f64,
    system: &AtomicSystem,
) -> Result<AnalyticAfc> {
    for (name, x) in [("rabi0", rabi0), ("sigma", sigma), ("t_int", t_int), ("detuning", detuning)] {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::param(name, "must be finite and > 0"));
        }
    }
    system.validate()?;
    let xi = system.xi();
    let sqrt_pi = PI.sqrt();
    let gamma = 2f64.sqrt() * xi / sigma;
    let delta_sep = xi * 2.0 * PI / t_int;
    let n_peaks = 2.0 * t_int / (sqrt_pi * sigma);
    let peak_fwhm = sqrt_pi * rabi0 * rabi0 * sigma * xi / (4.0 * detuning * t_int);
    let finesse = 8.0 * sqrt_pi * detuning / (rabi0 * rabi0 * sigma);
    let retrieval_time = t_int / xi;
    let width_valid = detuning.abs() > rabi0 * (system.omega32 / system.omega13()).sqrt();
    let width_valid_omega12 = detuning.abs() > rabi0 * (system.omega32 / system.omega12).sqrt();
    Ok(AnalyticAfc {
        metrics: AfcMetrics { gamma, delta_sep, n_peaks, peak_fwhm, finesse, retrieval_time },
        width_valid,
        width_valid_omega12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConditions {
    /// Ω₀²σ/Δ⁰.
    pub finesse_parameter: f64,
    /// Ω₀²σ/Δ⁰ ≤ (4/5)√π.
    pub finesse_ok: bool,
    /// ω34 < ω13, i.e. the echo comes later than T_int.
    pub ratio_ok: bool,
}

pub fn design_conditions(rabi0: f64, sigma: f64, detuning: f64, system: &AtomicSystem) -> DesignConditions {
    let finesse_parameter = rabi0 * rabi0 * sigma / detuning;
    DesignConditions {
        finesse_parameter,
        finesse_ok: finesse_parameter <= FINESSE_PARAMETER_BOUND,
        ratio_ok: system.omega34() < system.omega13(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hz;
    use approx::assert_relative_eq;

    fn fig4() -> AtomicSystem {
        AtomicSystem::new(hz(2.5 * 637e12), hz(637e12), 1e7, 1e7)
    }

    #[test]
    fn mb_peak_and_symmetry() {
        let gas = GasParameters::with_eta(350.0, 1.0);
        assert_relative_eq!(maxwell_boltzmann(0.0, &gas), 1.1398e-3, max_relative = 1e-4);
        for v in [0.3, 17.0, 350.0, 1234.5] {
            assert_eq!(maxwell_boltzmann(v, &gas), maxwell_boltzmann(-v, &gas));
        }
    }

    #[test]
    fn mb_quadrature() {
        let gas = GasParameters::with_eta(350.0, 2.5e20);
        let eta = gas.eta();
        let grid = VelocityGrid::new(-6.0 * eta, 6.0 * eta, 100_000).unwrap();
        let total: f64 = grid
            .values
            .iter()
            .zip(grid.trapezoid_weights())
            .map(|(&v, w)| w * maxwell_boltzmann(v, &gas))
            .sum();
        assert_relative_eq!(total, gas.density, max_relative = 1e-8);
    }

    #[test]
    fn thermal_eta() {
        let gas = GasParameters {
            temperature: 1073.15,
            atomic_mass: 137.327 * crate::constants::AMU,
            density: 2.5e20,
            eta_override: None,
        };
        assert_relative_eq!(gas.eta(), 255.0, max_relative = 0.01);
        assert!(gas.validate().is_ok());
        let bad = GasParameters { density: 0.0, ..gas };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn doppler_examples() {
        let (p, d) = doppler_detunings(0.0, 1.0, 2.0, hz(1592.5e12), hz(637e12));
        assert_eq!((p, d), (1.0, 2.0));
        let (p, _) = doppler_detunings(300.0, 0.0, 0.0, hz(1592.5e12), hz(637e12));
        assert_relative_eq!(p, hz(1.593e9), max_relative = 1e-3);
        let d0 = 5.0;
        let (a, _) = doppler_detunings(7.0, d0, 0.0, 3e15, 1e15);
        let (b, _) = doppler_detunings(14.0, d0, 0.0, 3e15, 1e15);
        assert_relative_eq!(b - d0, 2.0 * (a - d0), max_relative = 1e-12);
    }

    #[test]
    fn two_photon_velocity() {
        let w13 = hz(955.5e12);
        assert_eq!(v_two_photon(0, hz(1.0 / 0.17e-6), w13).unwrap(), 0.0);
        let v = v_two_photon(1, 2.0 * PI / 0.17e-6, w13).unwrap();
        assert_relative_eq!(v, 1.847, max_relative = 1e-3);
        let v = v_two_photon(1, 2.0 * PI / 0.7e-6, w13).unwrap();
        assert_relative_eq!(v, 0.449, max_relative = 5e-3);
        assert!(matches!(v_two_photon(1, 1.0, 0.0), Err(Error::DegenerateGroundStates)));
    }

    #[test]
    fn two_photon_velocity_maps_to_comb_spacing() {
        let sys = fig4();
        let t_int = 0.17e-6;
        let a = afc_metrics_analytic(hz(151e6), 6.2e-9, t_int, hz(360e6), &sys).unwrap();
        for n in [1i64, 2, 5, -3] {
            let v = v_two_photon(n, 2.0 * PI / t_int, sys.omega13()).unwrap();
            assert_relative_eq!(
                sys.omega34() * v / C,
                n as f64 * a.metrics.delta_sep,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn fig4_analytic_values() {
        let a = afc_metrics_analytic(hz(151e6), 6.2e-9, 0.17e-6, hz(360e6), &fig4()).unwrap();
        let m = a.metrics;
        assert_relative_eq!(m.gamma, hz(24.19e6), max_relative = 0.01);
        assert_relative_eq!(m.delta_sep, hz(3.91e6), max_relative = 0.01);
        assert_relative_eq!(m.peak_fwhm, hz(0.684e6), max_relative = 0.01);
        assert_relative_eq!(m.finesse, 5.72, max_relative = 0.01);
        assert!((m.n_peaks - 30.9).abs() < 0.1);
        assert!(a.width_valid && a.width_valid_omega12);
        assert_relative_eq!(m.finesse * m.peak_fwhm, m.delta_sep, max_relative = 1e-12);
        assert_relative_eq!(m.retrieval_time * m.delta_sep, 2.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn width_validity_flags() {
        let sys = fig4();
        let rabi0 = hz(100e6);
        // between √(ω32/ω12)Ω₀ ≈ 0.632Ω₀ and √(ω32/ω13)Ω₀ ≈ 0.816Ω₀
        let a = afc_metrics_analytic(rabi0, 6.2e-9, 0.17e-6, 0.7 * rabi0, &sys).unwrap();
        assert!(!a.width_valid);
        assert!(a.width_valid_omega12);
    }

    #[test]
    fn analytic_rejects_nonpositive() {
        assert!(afc_metrics_analytic(0.0, 6.2e-9, 0.17e-6, 1.0, &fig4()).is_err());
        assert!(afc_metrics_analytic(1.0, 6.2e-9, -1.0, 1.0, &fig4()).is_err());
    }

    #[test]
    fn design_condition_examples() {
        let ba = AtomicSystem::new(hz(540e12), hz(200e12), 1.19e8, 0.25e6).with_omega42(hz(265.35e12));
        let c = design_conditions(hz(51.72e6), 10.77e-9, hz(129.35e6), &ba);
        assert_relative_eq!(c.finesse_parameter, 1.40, max_relative = 0.01);
        assert!(c.finesse_ok && c.ratio_ok);
        assert_relative_eq!(ba.r(), 2.7, max_relative = 1e-12);

        // ω34 = ω13 sits on the boundary: no gain in echo time
        let edge = AtomicSystem::new(hz(540e12), hz(200e12), 0.0, 0.0).with_omega42(hz(540e12));
        let c = design_conditions(1.0, 1.0, 1.0, &edge);
        assert!(!c.ratio_ok);
        let a = afc_metrics_analytic(1.0, 1e-9, 1e-6, 1.0, &edge).unwrap();
        assert_relative_eq!(a.metrics.retrieval_time, 1e-6, max_relative = 1e-12);
    }

    #[test]
    fn system_validation() {
        assert!(fig4().validate().is_ok());
        let degenerate = AtomicSystem::new(1.0, 1.0, 0.0, 0.0);
        assert!(matches!(degenerate.validate(), Err(Error::DegenerateGroundStates)));
        assert!(AtomicSystem::new(1.0, 2.0, 0.0, 0.0).validate().is_err());
        assert!(AtomicSystem::new(2.0, 1.0, -1.0, 0.0).validate().is_err());
    }

    #[test]
    fn grid_basics() {
        let g = VelocityGrid::symmetric(1.0, 0.1).unwrap();
        assert_eq!(g.len(), 21);
        assert!(g.values[10].abs() < 1e-15);
        assert!(g.values.windows(2).all(|w| w[1] > w[0]));
        assert!(VelocityGrid::new(0.0, 1.0, 2).is_err());
    }
}
