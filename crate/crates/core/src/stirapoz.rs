//! Optimal-zone analysis of single-envelope STIRAP in a moving Λ system: the
//! boundary curves in (v, Δ⁰/Ω₀), the resulting transfer widths, their link to
//! the PAP tooth width, and brute-force ρ33(v, Δ⁰/Ω₀) maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{evolve, Detunings, EvolveOptions};
use crate::constants::C;
use crate::model::AtomicSystem;
use crate::pulses::StirapPulses;
use crate::{Error, Result};

/// Boundary velocities (m/s) of the optimal zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OzCurves {
    pub vs_plus: f64,
    pub vs_minus: f64,
    /// `None` below the threshold, where these roots are complex.
    pub vp_plus: Option<f64>,
    pub vp_minus: Option<f64>,
    /// |Δ⁰|/Ω₀ at which the inner curves appear, √(ω32/ω13).
    pub threshold: f64,
}

impl OzCurves {
    /// Inside the outer curves and, where they exist, outside the inner ones.
    pub fn contains(&self, v: f64) -> bool {
        let outer = v >= self.vs_minus && v <= self.vs_plus;
        let inner = match (self.vp_minus, self.vp_plus) {
            (Some(lo), Some(hi)) => v > lo && v < hi,
            _ => false,
        };
        outer && !inner
    }
}

pub fn oz_curves(delta0: f64, rabi0: f64, system: &AtomicSystem) -> OzCurves {
    let (w12, w32, w13) = (system.omega12, system.omega32, system.omega13());
    let outer = (w13 * (delta0 * delta0 * w13 + rabi0 * rabi0 * w12)).sqrt();
    let scale_s = C / (2.0 * w12 * w13);
    let discriminant = w13 * (delta0 * delta0 * w13 - rabi0 * rabi0 * w32);
    let (vp_plus, vp_minus) = if discriminant >= 0.0 {
        let root = discriminant.sqrt();
        let scale_p = C / (2.0 * w32 * w13);
        (Some(scale_p * (root - w13 * delta0)), Some(scale_p * (-root - w13 * delta0)))
    } else {
        (None, None)
    };
    OzCurves {
        vs_plus: scale_s * (outer - w13 * delta0),
        vs_minus: scale_s * (-outer - w13 * delta0),
        vp_plus,
        vp_minus,
        threshold: (w32 / w13).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StirapWidths {
    pub regime: Regime,
    /// FWHM of ρ33(v), m/s: ½(Vs⁺ − Vs⁻) below threshold, Ω₀²c/(4ω13Δ⁰) above.
    pub velocity_width: f64,
    /// ½(Vs⁺ − Vs⁻) or ½(Vs⁺ − Vp⁺) without the large-detuning expansion.
    pub velocity_width_exact: f64,
    /// The same width on the storage detuning axis, rad/s.
    pub stirap_fwhm: f64,
}

pub fn stirap_widths(delta0: f64, rabi0: f64, system: &AtomicSystem) -> Result<StirapWidths> {
    if !(delta0 > 0.0) || !(rabi0 > 0.0) {
        return Err(Error::param("delta0/rabi0", "must be positive"));
    }
    let curves = oz_curves(delta0, rabi0, system);
    let to_delta = system.omega34() / C;
    let (regime, velocity_width, velocity_width_exact) = if delta0 / rabi0 > curves.threshold {
        let expanded = rabi0 * rabi0 * C / (4.0 * system.omega13() * delta0);
        let exact = 0.5 * (curves.vs_plus - curves.vp_plus.unwrap_or(curves.vs_plus));
        (Regime::Above, expanded, exact)
    } else {
        let w = 0.5 * (curves.vs_plus - curves.vs_minus);
        (Regime::Below, w, w)
    };
    Ok(StirapWidths { regime, velocity_width, velocity_width_exact, stirap_fwhm: velocity_width * to_delta })
}

/// PAP tooth width from the STIRAP width: (√π σ/T_int)·ϖ_STIRAP.
pub fn pap_width_from_stirap(stirap_fwhm: f64, sigma: f64, t_int: f64) -> Result<f64> {
    if !(stirap_fwhm > 0.0) || !(sigma > 0.0) || !(t_int > 0.0) {
        return Err(Error::param("stirap_fwhm/sigma/t_int", "must be positive"));
    }
    Ok(std::f64::consts::PI.sqrt() * sigma / t_int * stirap_fwhm)
}

/// Final ρ33 over a (Δ⁰/Ω₀, v) grid, one column per ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OzMap {
    pub rabi0: f64,
    pub ratios: Vec<f64>,
    pub velocities: Vec<f64>,
    /// `rho33[i][j]` at `ratios[i]`, `velocities[j]`.
    pub rho33: Vec<Vec<f64>>,
}

impl OzMap {
    /// Fraction of cells with ρ33 > 0.5 that lie inside the optimal zone.
    pub fn containment(&self, system: &AtomicSystem) -> f64 {
        let mut inside = 0usize;
        let mut total = 0usize;
        for (ratio, column) in self.ratios.iter().zip(&self.rho33) {
            let curves = oz_curves(ratio * self.rabi0, self.rabi0, system);
            for (&v, &p) in self.velocities.iter().zip(column) {
                if p > 0.5 {
                    total += 1;
                    inside += curves.contains(v) as usize;
                }
            }
        }
        if total == 0 {
            1.0
        } else {
            inside as f64 / total as f64
        }
    }
}

/// Velocity range for a map over ratios up to `max_ratio`: every outer curve
/// plus a quarter of the Δ⁰ = 0 zone width on each side.
pub fn default_map_velocities(system: &AtomicSystem, rabi0: f64, max_ratio: f64, points: usize) -> Vec<f64> {
    let at_rest = oz_curves(0.0, rabi0, system);
    let far = oz_curves(max_ratio * rabi0, rabi0, system);
    let pad = 0.25 * (at_rest.vs_plus - at_rest.vs_minus);
    let lo = at_rest.vs_minus.min(far.vs_minus) - pad;
    let hi = at_rest.vs_plus.max(far.vs_plus) + pad;
    let n = points.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Evaluate ρ33 after the envelope pulses for every (ratio, v) cell.
pub fn oz_map(
    system: &AtomicSystem,
    pulses: &StirapPulses,
    ratios: &[f64],
    velocities: &[f64],
    opts: &EvolveOptions,
) -> Result<OzMap> {
    system.validate()?;
    let rabi0 = pulses.pump_rabi0;
    let cells: Vec<(usize, usize)> =
        (0..ratios.len()).flat_map(|i| (0..velocities.len()).map(move |j| (i, j))).collect();
    let values = cells
        .par_iter()
        .map(|&(i, j)| {
            let det = Detunings::common(ratios[i] * rabi0);
            evolve(system, pulses, velocities[j], det, opts).map(|e| e.state.rho33())
        })
        .collect::<Result<Vec<f64>>>()?;
    let rho33 = values.chunks(velocities.len()).map(|c| c.to_vec()).collect();
    Ok(OzMap { rabi0, ratios: ratios.to_vec(), velocities: velocities.to_vec(), rho33 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hz;
    use crate::model::afc_metrics_analytic;
    use approx::assert_relative_eq;

    fn fig4() -> AtomicSystem {
        AtomicSystem::new(hz(2.5 * 637e12), hz(637e12), 1e7, 1e7)
    }

    #[test]
    fn curves_at_zero_detuning() {
        let sys = fig4();
        let rabi = hz(151e6);
        let c = oz_curves(0.0, rabi, &sys);
        let expected = C * rabi / (2.0 * (sys.omega12 * sys.omega13()).sqrt());
        assert_relative_eq!(c.vs_plus, expected, max_relative = 1e-12);
        assert_relative_eq!(c.vs_minus, -expected, max_relative = 1e-12);
        assert!(c.vp_plus.is_none() && c.vp_minus.is_none());
    }

    #[test]
    fn threshold_value_and_double_root() {
        let sys = fig4();
        let c = oz_curves(1.0, 1.0, &sys);
        assert_relative_eq!(c.threshold, (1.0f64 / 1.5).sqrt(), max_relative = 1e-12);
        let rabi = hz(151e6);
        // ratio nudged up so rounding cannot push the discriminant below zero
        let at = oz_curves(c.threshold * (1.0 + 1e-15) * rabi, rabi, &sys);
        let (p, m) = (at.vp_plus.unwrap(), at.vp_minus.unwrap());
        assert!((p - m).abs() < 1e-4 * p.abs(), "{p} vs {m}");
        assert!(oz_curves(0.8 * rabi, rabi, &sys).vp_plus.is_none());
    }

    #[test]
    fn fig4_widths() {
        let sys = fig4();
        let w = stirap_widths(hz(360e6), hz(151e6), &sys).unwrap();
        assert_eq!(w.regime, Regime::Above);
        assert_relative_eq!(w.stirap_fwhm, hz(10.55e6), max_relative = 2e-3);
        assert_relative_eq!(w.stirap_fwhm, w.velocity_width * sys.omega34() / C, max_relative = 1e-12);
        let half = stirap_widths(hz(720e6), hz(151e6), &sys).unwrap();
        assert_relative_eq!(half.stirap_fwhm, 0.5 * w.stirap_fwhm, max_relative = 1e-12);
        assert_eq!(stirap_widths(hz(10e6), hz(151e6), &sys).unwrap().regime, Regime::Below);
    }

    #[test]
    fn pap_width_chain() {
        let sys = fig4();
        let (rabi, sigma, t_int, delta) = (hz(151e6), 6.2e-9, 0.17e-6, hz(360e6));
        let w = stirap_widths(delta, rabi, &sys).unwrap();
        let pap = pap_width_from_stirap(w.stirap_fwhm, sigma, t_int).unwrap();
        assert_relative_eq!(pap, hz(0.682e6), max_relative = 3e-3);
        let analytic = afc_metrics_analytic(rabi, sigma, t_int, delta, &sys).unwrap();
        assert_relative_eq!(pap, analytic.metrics.peak_fwhm, max_relative = 1e-12);
        let s = std::f64::consts::PI.sqrt();
        assert_relative_eq!(pap_width_from_stirap(3.0, t_int / s, t_int).unwrap(), 3.0, max_relative = 1e-12);
        assert_relative_eq!(
            pap_width_from_stirap(3.0, sigma, 2.0 * t_int).unwrap(),
            0.5 * pap_width_from_stirap(3.0, sigma, t_int).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn no_field_no_transfer() {
        let sys = fig4();
        let pulses = StirapPulses { pump_rabi0: 1e-3, dump_rabi0: 1e-3, sigma_e: 1e-7, tau: 2e-7 };
        let map = oz_map(&sys, &pulses, &[0.0, 1.0], &[-1.0, 0.0, 1.0], &EvolveOptions::default()).unwrap();
        assert!(map.rho33.iter().flatten().all(|&p| p < 1e-6));
    }
}
