//! Density-matrix dynamics of the Λ system |1⟩–|2⟩–|3⟩ under pump and dump
//! fields, and the velocity comb ρ33(v) left behind by a PAP sequence.
//!
//! In the frame rotating with the fields,
//!
//! ```text
//! H/ħ = −Δp|2⟩⟨2| − (Δp − Δd)|3⟩⟨3| + (Ωp/2)(|1⟩⟨2| + h.c.) + (Ωd/2)(|3⟩⟨2| + h.c.)
//! ```
//!
//! with spontaneous decay |2⟩→|1⟩ at γ21 and |2⟩→|3⟩ at γ23. Inside the
//! windows where a drive is on, the master equation is integrated with
//! fixed-step classical RK4; between windows the fields vanish and the
//! evolution (phase rotation plus decay) is applied in closed form.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::C;
use crate::model::{maxwell_boltzmann, AtomicSystem, GasParameters, VelocityGrid};
use crate::pulses::Drive;
use crate::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Hard cap on RK4 steps in one call, to turn a runaway step policy into an error.
const MAX_STEPS: u64 = 2_000_000_000;

/// 3×3 density matrix over (|1⟩, |2⟩, |3⟩).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix3(pub [[Complex64; 3]; 3]);

impl DensityMatrix3 {
    /// Pure state |k⟩⟨k| (k = 0, 1, 2 for |1⟩, |2⟩, |3⟩).
    pub fn pure(k: usize) -> Self {
        let mut m = [[ZERO; 3]; 3];
        m[k][k] = Complex64::new(1.0, 0.0);
        Self(m)
    }

    pub fn ground() -> Self {
        Self::pure(0)
    }

    pub fn population(&self, k: usize) -> f64 {
        self.0[k][k].re
    }

    pub fn rho33(&self) -> f64 {
        self.0[2][2].re
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0].re + self.0[1][1].re + self.0[2][2].re
    }

    /// Largest |ρ_ij − ρ_ji*|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                err = err.max((self.0[i][j] - self.0[j][i].conj()).norm());
            }
        }
        err
    }

    fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    #[inline]
    fn axpy(&self, h: f64, k: &Self) -> Self {
        let mut out = self.0;
        for (row, krow) in out.iter_mut().zip(k.0.iter()) {
            for (x, y) in row.iter_mut().zip(krow.iter()) {
                *x += y * h;
            }
        }
        Self(out)
    }
}

/// Step-size rule for the RK4 windows:
/// dt = min(shape/`shape_divisions`, 1/(`rate_factor`·max(|Δp|, |Δd|, Ω_peak))) / `refinement`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub shape_divisions: f64,
    pub rate_factor: f64,
    /// Divides the step; 2.0 is the step-halving check.
    pub refinement: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self { shape_divisions: 10.0, rate_factor: 20.0, refinement: 1.0 }
    }
}

impl StepPolicy {
    pub fn halved(self) -> Self {
        Self { refinement: 2.0 * self.refinement, ..self }
    }

    pub fn step(&self, shape_time: f64, pump_detuning: f64, dump_detuning: f64, peak_rabi: f64) -> f64 {
        let rate = pump_detuning.abs().max(dump_detuning.abs()).max(peak_rabi);
        let by_shape = shape_time / self.shape_divisions;
        let by_rate = if rate > 0.0 { 1.0 / (self.rate_factor * rate) } else { f64::INFINITY };
        by_shape.min(by_rate) / self.refinement
    }
}

/// Nominal detunings (atoms at rest) of the two fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detunings {
    pub pump: f64,
    pub dump: f64,
}

impl Detunings {
    /// Nominal two-photon resonance Δp⁰ = Δd⁰ = Δ⁰.
    pub fn common(delta0: f64) -> Self {
        Self { pump: delta0, dump: delta0 }
    }

    /// Doppler-shifted (Δp(v), Δd(v)) with carriers ω12 + Δp⁰ and ω32 + Δd⁰.
    pub fn at_velocity(&self, v: f64, system: &AtomicSystem) -> (f64, f64) {
        crate::model::doppler_detunings(
            v,
            self.pump,
            self.dump,
            system.omega12 + self.pump,
            system.omega32 + self.dump,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvolveOptions {
    /// Overrides the drive's default start time.
    pub t_start: Option<f64>,
    /// Overrides the drive's default readout time.
    pub t_end: Option<f64>,
    pub policy: StepPolicy,
}

/// Outcome of one integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evolution {
    pub state: DensityMatrix3,
    pub t_end: f64,
    /// RK4 steps taken.
    pub steps: u64,
    /// Nominal RK4 step before fitting windows into whole steps.
    pub dt: f64,
}

/// Master-equation right-hand side for fixed detunings and decay.
#[derive(Debug, Clone, Copy)]
struct Lambda {
    /// Diagonal energies (0, −Δp, −(Δp−Δd)).
    energy: [f64; 3],
    gamma21: f64,
    gamma23: f64,
}

impl Lambda {
    fn new(system: &AtomicSystem, pump_detuning: f64, dump_detuning: f64) -> Self {
        Self {
            energy: [0.0, -pump_detuning, -(pump_detuning - dump_detuning)],
            gamma21: system.gamma21,
            gamma23: system.gamma23,
        }
    }

    #[inline]
    fn rhs(&self, rho: &DensityMatrix3, omega_p: f64, omega_d: f64) -> DensityMatrix3 {
        let r = &rho.0;
        let e = self.energy;
        let hp = 0.5 * omega_p;
        let hd = 0.5 * omega_d;
        // H is real symmetric with H01 = Ωp/2, H12 = Ωd/2 and zero H02.
        let h = [[e[0], hp, 0.0], [hp, e[1], hd], [0.0, hd, e[2]]];
        let mut out = [[ZERO; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut comm = ZERO;
                for k in 0..3 {
                    comm += r[k][j] * h[i][k] - r[i][k] * h[k][j];
                }
                // −i[H, ρ]
                out[i][j] = Complex64::new(comm.im, -comm.re);
            }
        }
        let g2 = self.gamma21 + self.gamma23;
        if g2 > 0.0 {
            let p2 = r[1][1].re;
            out[0][0].re += self.gamma21 * p2;
            out[2][2].re += self.gamma23 * p2;
            out[1][1] -= r[1][1] * g2;
            let half = 0.5 * g2;
            out[0][1] -= r[0][1] * half;
            out[1][0] -= r[1][0] * half;
            out[1][2] -= r[1][2] * half;
            out[2][1] -= r[2][1] * half;
        }
        DensityMatrix3(out)
    }

    /// Exact evolution over `duration` with both fields off.
    fn free(&self, rho: &mut DensityMatrix3, duration: f64) {
        if duration <= 0.0 {
            return;
        }
        let g2 = self.gamma21 + self.gamma23;
        let decay_amp = (-0.5 * g2 * duration).exp();
        let decay_pop = decay_amp * decay_amp;
        let r = &mut rho.0;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let phase = Complex64::from_polar(1.0, -(self.energy[i] - self.energy[j]) * duration);
                let damp = if i == 1 || j == 1 { decay_amp } else { 1.0 };
                r[i][j] *= phase * damp;
            }
        }
        if g2 > 0.0 {
            let p2 = r[1][1].re;
            let lost = p2 * (1.0 - decay_pop);
            r[1][1].re = p2 * decay_pop;
            r[0][0].re += lost * self.gamma21 / g2;
            r[2][2].re += lost * self.gamma23 / g2;
        }
    }
}

/// Integrate the master equation for one velocity class starting from |1⟩.
pub fn evolve(
    system: &AtomicSystem,
    drive: &impl Drive,
    v: f64,
    detunings: Detunings,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    evolve_with(system, drive, v, detunings, opts, |_, _| {})
}

/// As [`evolve`], calling `observe(t, ρ)` after the initial state, every RK4
/// step, and every closed-form free-evolution segment.
pub fn evolve_with<F>(
    system: &AtomicSystem,
    drive: &impl Drive,
    v: f64,
    detunings: Detunings,
    opts: &EvolveOptions,
    mut observe: F,
) -> Result<Evolution>
where
    F: FnMut(f64, &DensityMatrix3),
{
    let (span_start, span_end) = drive.span();
    let t0 = opts.t_start.unwrap_or(span_start);
    let t1 = opts.t_end.unwrap_or(span_end);
    if !(t1 > t0) {
        return Err(Error::param("t_end", "must be later than t_start"));
    }
    let (dp, dd) = detunings.at_velocity(v, system);
    let lambda = Lambda::new(system, dp, dd);
    let dt = opts.policy.step(drive.shape_time(), dp, dd, drive.peak_rabi());
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Numerical {
            velocity: v,
            time: t0,
            reason: format!("invalid step size {dt:e}"),
        });
    }

    let mut rho = DensityMatrix3::ground();
    observe(t0, &rho);
    let mut t = t0;
    let mut steps: u64 = 0;
    for (a, b) in drive.active_windows(t0, t1) {
        lambda.free(&mut rho, a - t);
        if a > t {
            observe(a, &rho);
        }
        let n = ((b - a) / dt).ceil().max(1.0);
        if n as u64 > MAX_STEPS - steps {
            return Err(Error::Numerical {
                velocity: v,
                time: a,
                reason: format!("step size {dt:e} s underflows: {n:e} steps in window [{a:e}, {b:e}]"),
            });
        }
        let n = n as u64;
        let h = (b - a) / n as f64;
        let mut fields = drive.rabi(a);
        for s in 0..n {
            let ts = a + s as f64 * h;
            let mid = drive.rabi(ts + 0.5 * h);
            let end = drive.rabi(ts + h);
            let k1 = lambda.rhs(&rho, fields.0, fields.1);
            let k2 = lambda.rhs(&rho.axpy(0.5 * h, &k1), mid.0, mid.1);
            let k3 = lambda.rhs(&rho.axpy(0.5 * h, &k2), mid.0, mid.1);
            let k4 = lambda.rhs(&rho.axpy(h, &k3), end.0, end.1);
            let mut next = rho.0;
            for i in 0..3 {
                for j in 0..3 {
                    next[i][j] += (k1.0[i][j] + (k2.0[i][j] + k3.0[i][j]) * 2.0 + k4.0[i][j]) * (h / 6.0);
                }
            }
            rho = DensityMatrix3(next);
            fields = end;
            observe(ts + h, &rho);
        }
        steps += n;
        if !rho.is_finite() || (rho.trace() - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical {
                velocity: v,
                time: b,
                reason: format!("state diverged (trace {:.9})", rho.trace()),
            });
        }
        t = b;
    }
    if t1 > t {
        lambda.free(&mut rho, t1 - t);
        observe(t1, &rho);
    }
    Ok(Evolution { state: rho, t_end: t1, steps, dt })
}

/// Snapshot of the inputs that produced a velocity comb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombParams {
    pub system: AtomicSystem,
    pub detunings: Detunings,
    pub gas: GasParameters,
    pub t_end: f64,
    pub policy: StepPolicy,
}

/// Final ρ33 per velocity class, raw and weighted by the velocity distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityComb {
    pub grid: VelocityGrid,
    pub rho33: Vec<f64>,
    /// ρ33(v)·f(v), atoms·s/m⁴.
    pub weighted: Vec<f64>,
    pub params: CombParams,
}

impl VelocityComb {
    /// ρ33 weighted by f(v)/f(0): the single-atom probability rescaled to the distribution peak.
    pub fn rescaled(&self) -> Vec<f64> {
        let peak = maxwell_boltzmann(0.0, &self.params.gas);
        self.weighted.iter().map(|w| w / peak).collect()
    }
}

/// Run one evolution per velocity class (in parallel) and collect ρ33 at the readout time.
pub fn velocity_comb(
    system: &AtomicSystem,
    drive: &impl Drive,
    detunings: Detunings,
    gas: &GasParameters,
    grid: &VelocityGrid,
    opts: &EvolveOptions,
) -> Result<VelocityComb> {
    system.validate()?;
    gas.validate()?;
    let rho33 = grid
        .values
        .par_iter()
        .map(|&v| evolve(system, drive, v, detunings, opts).map(|e| e.state.rho33()))
        .collect::<Result<Vec<f64>>>()?;
    let weighted = grid
        .values
        .iter()
        .zip(&rho33)
        .map(|(&v, &p)| p * maxwell_boltzmann(v, gas))
        .collect();
    Ok(VelocityComb {
        grid: grid.clone(),
        rho33,
        weighted,
        params: CombParams {
            system: *system,
            detunings,
            gas: *gas,
            t_end: opts.t_end.unwrap_or(drive.span().1),
            policy: opts.policy,
        },
    })
}

/// Default velocity grid for a PAP comb: half-width max(3Γ, 20Δδ) mapped to
/// velocity through c/ω34 and clipped to 4η, with at least 8 points across the
/// predicted tooth width.
pub fn default_velocity_grid(
    system: &AtomicSystem,
    rabi0: f64,
    sigma: f64,
    t_int: f64,
    delta0: f64,
    gas: &GasParameters,
) -> Result<VelocityGrid> {
    let xi = system.xi();
    let to_velocity = C / system.omega34();
    let gamma = 2f64.sqrt() * xi / sigma;
    let spacing = xi * std::f64::consts::TAU / t_int;
    let half = (3.0 * gamma).max(20.0 * spacing) * to_velocity;
    let half = half.min(4.0 * gas.eta());
    let width = if delta0.abs() > 0.0 {
        (std::f64::consts::PI.sqrt() * rabi0 * rabi0 * sigma * xi / (4.0 * delta0.abs() * t_int)).min(spacing)
    } else {
        spacing
    };
    VelocityGrid::symmetric(half, width * to_velocity / 8.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hz;
    use crate::pulses::{PulseTrain, StirapPulses};
    use approx::assert_relative_eq;

    fn no_decay(system: AtomicSystem) -> AtomicSystem {
        AtomicSystem { gamma21: 0.0, gamma23: 0.0, ..system }
    }

    fn fig4_system() -> AtomicSystem {
        AtomicSystem::new(hz(2.5 * 637e12), hz(637e12), 1e7, 1e7)
    }

    #[test]
    fn no_fields_stays_in_ground_state() {
        let sys = no_decay(fig4_system());
        let off = StirapPulses { pump_rabi0: 0.0, dump_rabi0: 0.0, sigma_e: 1e-6, tau: 1e-6 };
        let e = evolve(&sys, &off, 3.0, Detunings::common(hz(100e6)), &EvolveOptions::default()).unwrap();
        assert_eq!(e.state, DensityMatrix3::ground());
    }

    #[test]
    fn free_evolution_matches_rk4() {
        // With Ωp = Ωd = 0 but decay and a populated |2⟩, the closed-form free
        // step must agree with fine RK4.
        let sys = AtomicSystem::new(hz(1000e12), hz(600e12), 3e7, 1e7);
        let lam = Lambda::new(&sys, 2e8, -1e8);
        let mut rho = DensityMatrix3::ground();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        rho.0 = [
            [Complex64::new(0.3, 0.0), Complex64::new(0.1, 0.05), Complex64::new(0.05, -0.1)],
            [Complex64::new(0.1, -0.05), Complex64::new(0.4, 0.0), Complex64::new(0.02, 0.1 * s)],
            [Complex64::new(0.05, 0.1), Complex64::new(0.02, -0.1 * s), Complex64::new(0.3, 0.0)],
        ];
        let mut exact = rho;
        let duration = 7.3e-8;
        lam.free(&mut exact, duration);
        let n = 200_000;
        let h = duration / n as f64;
        let mut r = rho;
        for _ in 0..n {
            let k1 = lam.rhs(&r, 0.0, 0.0);
            let k2 = lam.rhs(&r.axpy(0.5 * h, &k1), 0.0, 0.0);
            let k3 = lam.rhs(&r.axpy(0.5 * h, &k2), 0.0, 0.0);
            let k4 = lam.rhs(&r.axpy(h, &k3), 0.0, 0.0);
            for i in 0..3 {
                for j in 0..3 {
                    r.0[i][j] += (k1.0[i][j] + (k2.0[i][j] + k3.0[i][j]) * 2.0 + k4.0[i][j]) * (h / 6.0);
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.0[i][j] - exact.0[i][j]).norm() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn resonant_rabi_oscillation() {
        // Pump alone on resonance: ρ22 = sin²(A/2) with pulse area A.
        let sys = no_decay(fig4_system());
        let area = 1.3;
        let sigma_e = 1e-8;
        let rabi0 = area / (sigma_e * (2.0 * std::f64::consts::PI).sqrt());
        let pump_only = StirapPulses { pump_rabi0: rabi0, dump_rabi0: 0.0, sigma_e, tau: 0.0 };
        let policy = StepPolicy { refinement: 4.0, ..Default::default() };
        let opts = EvolveOptions { t_start: Some(-8.0 * sigma_e), t_end: Some(8.0 * sigma_e), policy };
        let e = evolve(&sys, &pump_only, 0.0, Detunings::common(0.0), &opts).unwrap();
        assert_relative_eq!(e.state.population(1), (area / 2.0).sin().powi(2), epsilon = 1e-9);
    }

    #[test]
    fn stirap_transfer_is_complete_and_converged() {
        let sys = no_decay(fig4_system());
        let train = PulseTrain::new(hz(151e6), 16, 0.17e-6, 6.2e-9);
        let stirap = train.envelopes();
        let opts = EvolveOptions::default();
        let det = Detunings::common(0.0);
        let coarse = evolve(&sys, &stirap, 0.0, det, &opts).unwrap();
        assert!(coarse.state.rho33() >= 0.99, "ρ33 = {}", coarse.state.rho33());
        let fine = evolve(&sys, &stirap, 0.0, det, &EvolveOptions { policy: opts.policy.halved(), ..opts }).unwrap();
        assert!((coarse.state.rho33() - fine.state.rho33()).abs() < 1e-6);
    }

    #[test]
    fn density_matrix_bounds_hold_every_step() {
        let sys = fig4_system();
        let train = PulseTrain::new(hz(151e6), 16, 0.17e-6, 6.2e-9);
        let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
        let v = crate::model::v_two_photon(1, std::f64::consts::TAU / train.t_int, sys.omega13()).unwrap();
        evolve_with(&sys, &train, v, Detunings::common(hz(360e6)), &EvolveOptions::default(), |_, r| {
            worst.0 = worst.0.max((r.trace() - 1.0).abs());
            worst.1 = worst.1.max(r.hermiticity_error());
            for k in 0..3 {
                let p = r.population(k);
                worst.2 = worst.2.max((-p).max(p - 1.0));
            }
        })
        .unwrap();
        assert!(worst.0 <= 1e-9, "trace error {}", worst.0);
        assert!(worst.1 <= 1e-12, "hermiticity error {}", worst.1);
        assert!(worst.2 <= 1e-9, "population excursion {}", worst.2);
    }

    #[test]
    fn step_policy_rule() {
        let p = StepPolicy::default();
        assert_eq!(p.step(1e-8, 0.0, 0.0, 0.0), 1e-9);
        assert_relative_eq!(p.step(1e-8, -1e9, 5e8, 1e8), 1.0 / 2e10);
        assert_relative_eq!(p.halved().step(1e-8, 0.0, 0.0, 0.0), 5e-10);
    }

    #[test]
    fn default_grid_fig4() {
        let sys = fig4_system();
        let gas = GasParameters::with_eta(350.0, 1.0);
        let g = default_velocity_grid(&sys, hz(151e6), 6.2e-9, 0.17e-6, hz(360e6), &gas).unwrap();
        // 20 tooth spacings of 1.846 m/s
        assert_relative_eq!(g.v_max, 36.9, max_relative = 0.01);
        assert!(g.spacing() <= 0.0322 / 8.0 * 10.0);
    }
}
