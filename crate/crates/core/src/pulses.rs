//! Pump and dump pulse trains for piecewise adiabatic passage (PAP), the
//! single-envelope STIRAP limit, dark-state diagnostics, and the optical
//! frequency comb (OFC) spectra of the trains.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::C;
use crate::model::AtomicSystem;
use crate::{Error, Result};

/// Fields below e^{-32} ≈ 1.3e-14 of their peak are treated as off when the
/// integrator looks for windows of free evolution.
const WINDOW_HALF_WIDTH: f64 = 8.0;

/// Beyond this many widths a Gaussian underflows to exactly 0.0 in f64.
const UNDERFLOW_WIDTHS: f64 = 39.0;

/// Which of the two trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Pump,
    Dump,
}

/// Time-dependent Rabi frequencies driving the Λ system.
pub trait Drive: Sync {
    /// (Ω_p(t), Ω_d(t)) in rad/s.
    fn rabi(&self, t: f64) -> (f64, f64);

    /// Largest Rabi frequency reached by either field.
    fn peak_rabi(&self) -> f64;

    /// Shortest time scale of the field shape (sub-pulse width for trains).
    fn shape_time(&self) -> f64;

    /// Default integration interval: first field onset to readout time.
    fn span(&self) -> (f64, f64);

    /// Disjoint, sorted intervals inside `[start, end]` where the fields are
    /// not negligible. Outside them the atoms evolve freely.
    fn active_windows(&self, start: f64, end: f64) -> Vec<(f64, f64)>;
}

/// Two trains of N Gaussian sub-pulses under counterintuitively ordered
/// Gaussian envelopes. Sub-pulses of both trains sit at t = l·T_int; the dump
/// envelope peaks at t = 0 and the pump envelope at τ = (N−1)·T_int.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    pub pump_rabi0: f64,
    pub dump_rabi0: f64,
    pub n_pulses: usize,
    pub t_int: f64,
    pub sigma: f64,
    pub sigma_e: f64,
    pub tau: f64,
}

impl PulseTrain {
    /// Equal peak Rabi frequencies and the default envelope width
    /// σ_e = τ/(2√(2 ln 2)), i.e. an envelope FWHM equal to τ.
    pub fn new(rabi0: f64, n_pulses: usize, t_int: f64, sigma: f64) -> Self {
        let tau = n_pulses.saturating_sub(1) as f64 * t_int;
        Self {
            pump_rabi0: rabi0,
            dump_rabi0: rabi0,
            n_pulses,
            t_int,
            sigma,
            sigma_e: default_envelope_width(tau),
            tau,
        }
    }

    pub fn with_sigma_e(mut self, sigma_e: f64) -> Self {
        self.sigma_e = sigma_e;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pulses < 2 {
            return Err(Error::param("n_pulses", "need at least 2 pulses"));
        }
        for (name, x) in [
            ("pump_rabi0", self.pump_rabi0),
            ("dump_rabi0", self.dump_rabi0),
            ("t_int", self.t_int),
            ("sigma", self.sigma),
            ("sigma_e", self.sigma_e),
        ] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::param(name, "must be finite and > 0"));
            }
        }
        if !(self.sigma < self.t_int / 4.0) {
            return Err(Error::param("sigma", "sub-pulses must satisfy σ < T_int/4"));
        }
        let expected = (self.n_pulses - 1) as f64 * self.t_int;
        if (self.tau - expected).abs() > 1e-12 * expected {
            return Err(Error::param("tau", "must equal (N−1)·T_int"));
        }
        Ok(())
    }

    /// Sum of unit Gaussian sub-pulses at t. Terms further than 39σ away
    /// underflow to zero and are skipped, so the result equals the full sum.
    pub fn sub_pulse_sum(&self, t: f64) -> f64 {
        let reach = UNDERFLOW_WIDTHS * self.sigma;
        let last = self.n_pulses as i64 - 1;
        let lo = (((t - reach) / self.t_int).ceil() as i64).clamp(0, last + 1);
        let hi = (((t + reach) / self.t_int).floor() as i64).clamp(-1, last);
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        (lo..=hi)
            .map(|l| {
                let d = t - l as f64 * self.t_int;
                (-d * d * inv).exp()
            })
            .sum()
    }

    pub fn pump_envelope(&self, t: f64) -> f64 {
        let d = t - self.tau;
        (-d * d / (2.0 * self.sigma_e * self.sigma_e)).exp()
    }

    pub fn dump_envelope(&self, t: f64) -> f64 {
        (-t * t / (2.0 * self.sigma_e * self.sigma_e)).exp()
    }

    /// Pump Rabi frequency Ω_p(t).
    pub fn omega_p(&self, t: f64) -> f64 {
        self.pump_rabi0 * self.pump_envelope(t) * self.sub_pulse_sum(t)
    }

    /// Dump Rabi frequency Ω_d(t).
    pub fn omega_d(&self, t: f64) -> f64 {
        self.dump_rabi0 * self.dump_envelope(t) * self.sub_pulse_sum(t)
    }

    /// Sub-pulse centre times l·T_int.
    pub fn pulse_centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_pulses).map(move |l| l as f64 * self.t_int)
    }

    /// Time at which the sequence is read out: τ + 4σ_e.
    pub fn readout_time(&self) -> f64 {
        self.tau + 4.0 * self.sigma_e
    }

    /// The envelopes alone, i.e. the STIRAP process this train is piecewise equivalent to.
    pub fn envelopes(&self) -> StirapPulses {
        StirapPulses {
            pump_rabi0: self.pump_rabi0,
            dump_rabi0: self.dump_rabi0,
            sigma_e: self.sigma_e,
            tau: self.tau,
        }
    }
}

/// σ_e = τ/(2√(2 ln 2)).
pub fn default_envelope_width(tau: f64) -> f64 {
    tau / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

impl Drive for PulseTrain {
    fn rabi(&self, t: f64) -> (f64, f64) {
        let s = self.sub_pulse_sum(t);
        (
            self.pump_rabi0 * self.pump_envelope(t) * s,
            self.dump_rabi0 * self.dump_envelope(t) * s,
        )
    }

    fn peak_rabi(&self) -> f64 {
        self.pump_rabi0.max(self.dump_rabi0)
    }

    fn shape_time(&self) -> f64 {
        self.sigma
    }

    fn span(&self) -> (f64, f64) {
        (-WINDOW_HALF_WIDTH * self.sigma, self.readout_time())
    }

    fn active_windows(&self, start: f64, end: f64) -> Vec<(f64, f64)> {
        let half = WINDOW_HALF_WIDTH * self.sigma;
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(self.n_pulses);
        for c in self.pulse_centers() {
            let (a, b) = ((c - half).max(start), (c + half).min(end));
            if b <= a {
                continue;
            }
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }
}

/// Single pump and dump Gaussians with the PAP envelope timing (plain STIRAP).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StirapPulses {
    pub pump_rabi0: f64,
    pub dump_rabi0: f64,
    pub sigma_e: f64,
    /// Pump delay; the dump peaks at t = 0.
    pub tau: f64,
}

impl Drive for StirapPulses {
    fn rabi(&self, t: f64) -> (f64, f64) {
        let inv = 1.0 / (2.0 * self.sigma_e * self.sigma_e);
        let dp = t - self.tau;
        (
            self.pump_rabi0 * (-dp * dp * inv).exp(),
            self.dump_rabi0 * (-t * t * inv).exp(),
        )
    }

    fn peak_rabi(&self) -> f64 {
        self.pump_rabi0.max(self.dump_rabi0)
    }

    fn shape_time(&self) -> f64 {
        self.sigma_e
    }

    fn span(&self) -> (f64, f64) {
        (-4.0 * self.sigma_e, self.tau + 4.0 * self.sigma_e)
    }

    fn active_windows(&self, start: f64, end: f64) -> Vec<(f64, f64)> {
        vec![(start, end)]
    }
}

/// Mixing angle θ = arctan(Ω_p/Ω_d) of the dark state.
pub fn mixing_angle(t: f64, drive: &impl Drive) -> Result<f64> {
    let (p, d) = drive.rabi(t);
    if p == 0.0 && d == 0.0 {
        return Err(Error::UndefinedMixingAngle { t });
    }
    Ok(p.atan2(d))
}

/// Dark state amplitudes (c1, c3) = (cos θ, −sin θ).
pub fn dark_state(t: f64, drive: &impl Drive) -> Result<(f64, f64)> {
    let theta = mixing_angle(t, drive)?;
    Ok((theta.cos(), -theta.sin()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adiabaticity {
    /// Ωτ with Ω² = Ω_p0² + Ω_d0².
    pub omega_tau: f64,
    /// Ωτ > 10π/√2.
    pub ok: bool,
}

/// Global adiabaticity threshold 10π/√2.
pub const ADIABATIC_THRESHOLD: f64 = 10.0 * PI / std::f64::consts::SQRT_2;

pub fn check_adiabaticity(train: &PulseTrain) -> Adiabaticity {
    let omega = train.pump_rabi0.hypot(train.dump_rabi0);
    let omega_tau = omega * train.tau;
    Adiabaticity { omega_tau, ok: omega_tau > ADIABATIC_THRESHOLD }
}

/// Fourier spectrum Ω̃(ω) = ∫Ω(t)e^{−iωt}dt of one train.
#[derive(Debug, Clone, PartialEq)]
pub struct OfcSpectrum {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    /// Envelope bandwidth 1/σ (rad/s).
    pub envelope_bandwidth: f64,
    /// Nominal tooth spacing 2π/T_int (rad/s).
    pub tooth_spacing: f64,
}

impl OfcSpectrum {
    /// Frequencies of the maxima of |Ω̃| that dominate half a tooth spacing
    /// on either side (side lobes are skipped).
    pub fn tooth_frequencies(&self) -> Vec<f64> {
        let mags: Vec<f64> = self.amplitudes.iter().map(|a| a.norm()).collect();
        let f = &self.frequencies;
        let half = 0.5 * self.tooth_spacing;
        (1..mags.len().saturating_sub(1))
            .filter(|&i| mags[i] > mags[i - 1] && mags[i] >= mags[i + 1])
            .filter(|&i| {
                f.iter()
                    .zip(&mags)
                    .filter(|(w, _)| (**w - f[i]).abs() <= half)
                    .all(|(_, &m)| m <= mags[i])
            })
            .map(|i| f[i])
            .collect()
    }
}

/// Sub-pulse weights Ω_n of a train in the sum-of-Gaussians form.
pub fn harmonic_weights(train: &PulseTrain, which: Field) -> Vec<f64> {
    train
        .pulse_centers()
        .map(|c| match which {
            Field::Pump => train.pump_envelope(c),
            Field::Dump => train.dump_envelope(c),
        })
        .collect()
}

/// Analytic OFC of a train, treating each sub-pulse as a Gaussian weighted by
/// the envelope at its centre:
/// Ω̃(ω) = √(2π) σ Ω₀ e^{−ω²σ²/2} Σ_n Ω_n e^{−i n T_int ω}.
///
/// `omega_grid` must be uniform with at least 16 bins per tooth spacing 2π/T_int.
pub fn ofc_spectrum(train: &PulseTrain, which: Field, omega_grid: &[f64]) -> Result<OfcSpectrum> {
    if omega_grid.len() < 2 {
        return Err(Error::param("omega_grid", "need at least 2 frequencies"));
    }
    let step = (omega_grid[omega_grid.len() - 1] - omega_grid[0]) / (omega_grid.len() - 1) as f64;
    let bins = TAU / train.t_int / step.abs();
    if !(bins >= 16.0) {
        return Err(Error::GridTooCoarse { bins_per_tooth: bins, required: 16 });
    }
    let weights = harmonic_weights(train, which);
    let rabi0 = match which {
        Field::Pump => train.pump_rabi0,
        Field::Dump => train.dump_rabi0,
    };
    let prefactor = (TAU).sqrt() * train.sigma * rabi0;
    let amplitudes = omega_grid
        .iter()
        .map(|&w| {
            let sum: Complex64 = weights
                .iter()
                .enumerate()
                .map(|(n, &wn)| Complex64::from_polar(wn, -(n as f64) * train.t_int * w))
                .sum();
            sum * prefactor * (-0.5 * w * w * train.sigma * train.sigma).exp()
        })
        .collect();
    Ok(OfcSpectrum {
        frequencies: omega_grid.to_vec(),
        amplitudes,
        envelope_bandwidth: 1.0 / train.sigma,
        tooth_spacing: TAU / train.t_int,
    })
}

/// Detunings of a pair of OFC harmonics seen by an atom moving at `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicMatch {
    pub pump_detuning: f64,
    pub dump_detuning: f64,
    pub resonant: bool,
}

/// Default resonance tolerance for [`harmonic_match`]: 2π·1 kHz.
pub const HARMONIC_TOLERANCE: f64 = TAU * 1e3;

/// Pump harmonic `n` and dump harmonic `m` detunings
/// Δ_p^n(v) = ω_p⁰(1+v/c) + nΔω − ω12 and Δ_d^m(v) = ω_d⁰(1+v/c) + mΔω − ω32,
/// and whether they satisfy the generalized two-photon resonance.
/// No validation of `system`, so degenerate ground states can be examined.
#[allow(clippy::too_many_arguments)]
pub fn harmonic_match(
    v: f64,
    n: i64,
    m: i64,
    t_int: f64,
    system: &AtomicSystem,
    pump_detuning: f64,
    dump_detuning: f64,
    tol: f64,
) -> HarmonicMatch {
    let dw = TAU / t_int;
    let pump_carrier = system.omega12 + pump_detuning;
    let dump_carrier = system.omega32 + dump_detuning;
    let p = pump_detuning + pump_carrier * v / C + n as f64 * dw;
    let d = dump_detuning + dump_carrier * v / C + m as f64 * dw;
    HarmonicMatch { pump_detuning: p, dump_detuning: d, resonant: (p - d).abs() < tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hz;
    use crate::model::v_two_photon;
    use approx::assert_relative_eq;

    fn fig4_train() -> PulseTrain {
        PulseTrain::new(hz(151e6), 16, 0.17e-6, 6.2e-9)
    }

    #[test]
    fn train_peaks() {
        let tr = fig4_train();
        tr.validate().unwrap();
        let expected = tr.dump_rabi0 * (1.0 + (-tr.t_int.powi(2) / (2.0 * tr.sigma.powi(2))).exp());
        assert_relative_eq!(tr.omega_d(0.0), expected, max_relative = 1e-12);
        assert_relative_eq!(tr.omega_d(0.0), tr.dump_rabi0, max_relative = 1e-12);
        assert_relative_eq!(tr.omega_p(tr.tau), tr.pump_rabi0, max_relative = 1e-12);
    }

    #[test]
    fn envelope_ratio_at_origin() {
        let tr = fig4_train();
        let ratio = tr.omega_p(0.0) / tr.omega_d(0.0);
        assert_relative_eq!(ratio, 0.0625, max_relative = 1e-9);
    }

    #[test]
    fn truncated_sum_matches_direct_sum() {
        let tr = fig4_train();
        for k in 0..2000 {
            let t = -1e-7 + k as f64 * 1.37e-9;
            let direct: f64 = tr
                .pulse_centers()
                .map(|c| (-(t - c).powi(2) / (2.0 * tr.sigma.powi(2))).exp())
                .sum();
            assert_relative_eq!(tr.sub_pulse_sum(t), direct, max_relative = 1e-14);
        }
    }

    #[test]
    fn sub_pulse_maxima_coincide() {
        let tr = fig4_train();
        let h = tr.sigma * 1e-3;
        for c in tr.pulse_centers() {
            let (l, m, r) = (tr.sub_pulse_sum(c - h), tr.sub_pulse_sum(c), tr.sub_pulse_sum(c + h));
            assert!(m > l && m > r, "maximum not at {c}");
            // the envelopes only drag the product maxima by a small fraction of σ
            for f in [PulseTrain::omega_p, PulseTrain::omega_d] {
                let (l, r) = (f(&tr, c - 0.05 * tr.sigma), f(&tr, c + 0.05 * tr.sigma));
                assert!(f(&tr, c) > l.min(r), "maximum far from {c}");
            }
        }
    }

    #[test]
    fn validation() {
        assert!(PulseTrain::new(1e8, 1, 1e-7, 1e-9).validate().is_err());
        assert!(PulseTrain::new(1e8, 4, 1e-7, 3e-8).validate().is_err());
        assert!(PulseTrain::new(0.0, 4, 1e-7, 1e-9).validate().is_err());
        let mut tr = fig4_train();
        tr.tau *= 1.1;
        assert!(tr.validate().is_err());
    }

    #[test]
    fn windows_cover_pulses() {
        let tr = fig4_train();
        let (a, b) = tr.span();
        let w = tr.active_windows(a, b);
        assert_eq!(w.len(), tr.n_pulses);
        assert!(w.windows(2).all(|p| p[0].1 < p[1].0));
        // Overlapping windows merge.
        let dense = PulseTrain::new(1e8, 5, 1e-7, 2e-8);
        assert_eq!(dense.active_windows(-1.0, 1.0).len(), 1);
    }

    #[test]
    fn mixing_angle_cases() {
        let s = StirapPulses { pump_rabi0: 0.0, dump_rabi0: 1.0, sigma_e: 1.0, tau: 1.0 };
        assert_eq!(mixing_angle(0.0, &s).unwrap(), 0.0);
        assert_eq!(dark_state(0.0, &s).unwrap(), (1.0, -0.0));
        let s = StirapPulses { pump_rabi0: 2.0, dump_rabi0: 2.0, sigma_e: 1.0, tau: 0.0 };
        assert_relative_eq!(mixing_angle(0.3, &s).unwrap(), PI / 4.0, max_relative = 1e-14);
        let tr = fig4_train();
        let between = 0.5 * tr.t_int;
        let far = tr.tau + 50.0 * tr.t_int;
        assert!(matches!(mixing_angle(far, &tr), Err(Error::UndefinedMixingAngle { .. })));
        assert!(mixing_angle(between, &tr).is_ok());
    }

    #[test]
    fn mixing_angle_monotone_at_centres() {
        let tr = fig4_train();
        let angles: Vec<f64> = tr.pulse_centers().map(|c| mixing_angle(c, &tr).unwrap()).collect();
        assert!(angles.windows(2).all(|w| w[1] > w[0]));
        assert!(angles[0] < 0.07);
        assert!(angles[angles.len() - 1] > 1.5);
    }

    #[test]
    fn adiabaticity() {
        let a = check_adiabaticity(&fig4_train());
        assert_relative_eq!(a.omega_tau, 3.42e3, max_relative = 0.01);
        assert!(a.ok);
        let mut tr = fig4_train();
        tr.pump_rabi0 = ADIABATIC_THRESHOLD / tr.tau / std::f64::consts::SQRT_2;
        tr.dump_rabi0 = tr.pump_rabi0;
        let a = check_adiabaticity(&tr);
        assert!(!a.ok);
        tr.pump_rabi0 = 1e-3;
        tr.dump_rabi0 = 1e-3;
        assert!(!check_adiabaticity(&tr).ok);
    }

    fn omega_grid(tr: &PulseTrain, teeth: f64, bins: usize) -> Vec<f64> {
        let dw = TAU / tr.t_int;
        let n = (2.0 * teeth * bins as f64) as usize + 1;
        (0..n).map(|i| -teeth * dw + i as f64 * dw / bins as f64).collect()
    }

    #[test]
    fn ofc_global_maximum_at_zero() {
        let tr = fig4_train();
        let grid = omega_grid(&tr, 5.0, 32);
        let spec = ofc_spectrum(&tr, Field::Dump, &grid).unwrap();
        let zero = grid.len() / 2;
        let expected = TAU.sqrt() * tr.sigma * tr.dump_rabi0 * harmonic_weights(&tr, Field::Dump).iter().sum::<f64>();
        assert_relative_eq!(spec.amplitudes[zero].norm(), expected, max_relative = 1e-12);
        let max = spec.amplitudes.iter().map(|a| a.norm()).fold(0.0, f64::max);
        assert_eq!(max, spec.amplitudes[zero].norm());
        assert_eq!(spec.envelope_bandwidth, 1.0 / tr.sigma);
    }

    #[test]
    fn ofc_teeth_spacing() {
        for n in [4, 16, 40] {
            let tr = PulseTrain::new(hz(151e6), n, 0.17e-6, 6.2e-9);
            let grid = omega_grid(&tr, 6.0, 64);
            let spec = ofc_spectrum(&tr, Field::Pump, &grid).unwrap();
            let dw = TAU / tr.t_int;
            let bin = dw / 64.0;
            let teeth = spec.tooth_frequencies();
            assert!(teeth.len() >= 11, "N={n}: {} teeth", teeth.len());
            let central: Vec<f64> = teeth.iter().copied().filter(|f| f.abs() <= 1.0 / tr.sigma).collect();
            for pair in central.windows(2) {
                assert!((pair[1] - pair[0] - dw).abs() <= bin * (1.0 + 1e-9), "N={n}: spacing {}", pair[1] - pair[0]);
            }
            if n >= 16 {
                for f in teeth.iter().filter(|f| f.abs() <= 1.0 / tr.sigma) {
                    let k = (f / dw).round();
                    assert!((f - k * dw).abs() <= bin, "N={n}: tooth at {f}");
                }
            }
        }
    }

    #[test]
    fn ofc_height_grows_with_n() {
        let h = |n| {
            let tr = PulseTrain::new(hz(151e6), n, 0.17e-6, 6.2e-9);
            ofc_spectrum(&tr, Field::Dump, &omega_grid(&tr, 1.0, 16)).unwrap().amplitudes[16].norm()
        };
        assert!(h(8) > h(4) && h(16) > h(8));
    }

    #[test]
    fn ofc_grid_check() {
        let tr = fig4_train();
        let coarse = omega_grid(&tr, 3.0, 8);
        assert!(matches!(
            ofc_spectrum(&tr, Field::Dump, &coarse),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn harmonic_examples() {
        let sys = AtomicSystem::new(hz(1592.5e12), hz(637e12), 1e7, 1e7);
        let t_int = 0.17e-6;
        let d0 = hz(360e6);
        assert!(harmonic_match(0.0, 0, 0, t_int, &sys, d0, d0, HARMONIC_TOLERANCE).resonant);
        let v1 = v_two_photon(1, TAU / t_int, sys.omega13()).unwrap();
        for n in [-3i64, 0, 2, 7] {
            assert!(harmonic_match(v1, n, n + 1, t_int, &sys, d0, d0, HARMONIC_TOLERANCE).resonant);
            assert!(!harmonic_match(v1, n, n, t_int, &sys, d0, d0, HARMONIC_TOLERANCE).resonant);
        }
        let degenerate = AtomicSystem::new(hz(637e12), hz(637e12), 0.0, 0.0);
        assert!(harmonic_match(0.0, 2, 2, t_int, &degenerate, 0.0, 0.0, HARMONIC_TOLERANCE).resonant);
        assert!(!harmonic_match(0.0, 1, 2, t_int, &degenerate, 0.0, 0.0, HARMONIC_TOLERANCE).resonant);
    }
}
