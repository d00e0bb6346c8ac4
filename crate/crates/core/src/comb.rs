//! Detuning-domain view of a velocity comb: tooth detection, width and
//! spacing measurement, and a least-squares fit of the Gaussian-envelope
//! comb model
//!
//! ```text
//! ρ33(δ) = A·exp(−(δ−δe)²/2Γ²) · Σ_j exp(−4 ln2 (δ − jΔδ)²/ϖ²)
//! ```

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use serde::{Deserialize, Serialize};

use crate::bloch::VelocityComb;
use crate::constants::C;
use crate::{Error, Result};

const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;

/// Default prominence threshold as a fraction of the profile maximum.
pub const DEFAULT_MIN_PROMINENCE: f64 = 0.1;

/// ρ33 against storage-transition detuning δ = ω_map·v/c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfcProfile {
    pub delta: Vec<f64>,
    pub rho33: Vec<f64>,
    pub omega_map: f64,
}

impl AfcProfile {
    pub fn from_velocity(velocities: &[f64], values: Vec<f64>, omega_map: f64) -> Result<Self> {
        if !(omega_map > 0.0) {
            return Err(Error::param("omega_map", "must be positive"));
        }
        if velocities.len() != values.len() {
            return Err(Error::param("values", "length differs from the velocity grid"));
        }
        let delta = velocities.iter().map(|v| omega_map * v / C).collect();
        Ok(Self { delta, rho33: values, omega_map })
    }

    /// Inverse of the detuning map.
    pub fn velocity(&self, delta: f64) -> f64 {
        delta * C / self.omega_map
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.delta.iter().map(|&d| self.velocity(d)).collect()
    }
}

/// Map a velocity comb to the detuning domain. The values are ρ33 weighted
/// by the velocity distribution and rescaled to its peak, so they read as a
/// single-atom probability.
pub fn vc_to_afc(comb: &VelocityComb, omega_map: f64) -> Result<AfcProfile> {
    AfcProfile::from_velocity(&comb.grid.values, comb.rescaled(), omega_map)
}

/// Gaussian fitted to the tooth maxima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub gamma: f64,
    pub center: f64,
    pub amplitude: f64,
}

impl EnvelopeFit {
    pub fn at(&self, delta: f64) -> f64 {
        let d = (delta - self.center) / self.gamma;
        self.amplitude * (-0.5 * d * d).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub centers: Vec<f64>,
    pub heights: Vec<f64>,
    pub fwhms: Vec<f64>,
    pub envelope_fit: EnvelopeFit,
}

/// Measured comb figures, with both tooth-count conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredMetrics {
    pub gamma: f64,
    pub delta_sep: f64,
    /// Teeth whose height reaches e^{−π} of the envelope maximum.
    pub n_peaks: usize,
    /// Every detected tooth.
    pub n_peaks_raw: usize,
    pub peak_fwhm: f64,
    pub finesse: f64,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Tooth spacing from a straight-line fit of centers against tooth index.
    pub fn spacing(&self) -> Result<f64> {
        if self.centers.len() < 2 {
            return Err(Error::Fit("tooth spacing needs at least two teeth".into()));
        }
        let mut gaps: Vec<f64> = self.centers.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        let guess = gaps[gaps.len() / 2];
        let origin = self.centers[0];
        let index: Vec<f64> = self.centers.iter().map(|c| ((c - origin) / guess).round()).collect();
        let n = index.len() as f64;
        let mean_i = index.iter().sum::<f64>() / n;
        let mean_c = self.centers.iter().sum::<f64>() / n;
        let (sxy, sxx) = index.iter().zip(&self.centers).fold((0.0, 0.0), |(sxy, sxx), (i, c)| {
            (sxy + (i - mean_i) * (c - mean_c), sxx + (i - mean_i) * (i - mean_i))
        });
        Ok(sxy / sxx)
    }

    /// Tooth count with the e^{−π} convention: |δ − δe| ≤ √(2π)Γ.
    pub fn count_within_envelope(&self) -> usize {
        let floor = (-std::f64::consts::PI).exp() * self.envelope_fit.amplitude;
        self.heights.iter().filter(|&&h| h >= floor).count()
    }

    /// Median FWHM over the teeth at least half as tall as the tallest.
    pub fn typical_fwhm(&self) -> f64 {
        let top = self.heights.iter().copied().fold(0.0, f64::max);
        let mut w: Vec<f64> = self
            .fwhms
            .iter()
            .zip(&self.heights)
            .filter(|(_, &h)| h >= 0.5 * top)
            .map(|(&w, _)| w)
            .collect();
        w.sort_by(f64::total_cmp);
        w[w.len() / 2]
    }

    pub fn metrics(&self) -> Result<MeasuredMetrics> {
        let delta_sep = self.spacing()?;
        let peak_fwhm = self.typical_fwhm();
        Ok(MeasuredMetrics {
            gamma: self.envelope_fit.gamma,
            delta_sep,
            n_peaks: self.count_within_envelope(),
            n_peaks_raw: self.len(),
            peak_fwhm,
            finesse: delta_sep / peak_fwhm,
        })
    }
}

/// Topographic prominence of the local maximum at `i`.
fn prominence(y: &[f64], i: usize) -> f64 {
    let h = y[i];
    let mut left_min = h;
    for &v in y[..i].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &y[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Crossings of `half` around the peak at `i`, by linear interpolation.
fn half_width(x: &[f64], y: &[f64], i: usize, half: f64) -> Option<(f64, f64)> {
    let mut a = i;
    while a > 0 && y[a] > half {
        a -= 1;
    }
    let mut b = i;
    while b + 1 < y.len() && y[b] > half {
        b += 1;
    }
    if y[a] > half || y[b] > half {
        return None;
    }
    let left = x[a] + (half - y[a]) / (y[a + 1] - y[a]) * (x[a + 1] - x[a]);
    let right = x[b - 1] + (half - y[b - 1]) / (y[b] - y[b - 1]) * (x[b] - x[b - 1]);
    Some((left, right))
}

/// Teeth of `profile`: local maxima whose prominence exceeds
/// `min_prominence` × the profile maximum. A tooth is centred midway between
/// its half-height crossings, which keeps flat-topped teeth symmetric.
pub fn detect_peaks(profile: &AfcProfile, min_prominence: f64) -> Result<PeakSet> {
    let x = &profile.delta;
    let y = &profile.rho33;
    let top = y.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) || y.len() < 3 {
        return Err(Error::NoPeaks);
    }
    let threshold = min_prominence * top;
    let mut centers = Vec::new();
    let mut heights = Vec::new();
    let mut fwhms = Vec::new();
    let mut i = 1;
    while i + 1 < y.len() {
        if y[i] > y[i - 1] {
            // a flat top counts once
            let mut j = i;
            while j + 1 < y.len() && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < y.len() && y[j + 1] < y[i] {
                let mid = (i + j) / 2;
                let prom = prominence(y, mid);
                if prom >= threshold {
                    // teeth riding on a high background are measured at half prominence
                    let crossing = half_width(x, y, mid, 0.5 * y[mid])
                        .or_else(|| half_width(x, y, mid, y[mid] - 0.5 * prom));
                    if let Some((left, right)) = crossing {
                        centers.push(0.5 * (left + right));
                        heights.push(y[mid]);
                        fwhms.push(right - left);
                    }
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    if centers.is_empty() {
        return Err(Error::NoPeaks);
    }
    let envelope_fit = fit_gaussian(&centers, &heights)?;
    Ok(PeakSet { centers, heights, fwhms, envelope_fit })
}

/// Residuals r_i = model(x_i; p) − y_i with an analytic Jacobian.
struct CurveFit<'a, M> {
    x: &'a [f64],
    y: &'a [f64],
    p: DVector<f64>,
    model: M,
}

impl<M> LeastSquaresProblem<f64, Dyn, Dyn> for CurveFit<'_, M>
where
    M: Fn(f64, &[f64], Option<&mut [f64]>) -> f64,
{
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let p = self.p.as_slice();
        Some(DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(&x, &y)| (self.model)(x, p, None) - y),
        ))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let p = self.p.as_slice();
        let mut jac = DMatrix::zeros(self.x.len(), p.len());
        let mut grad = vec![0.0; p.len()];
        for (row, &x) in self.x.iter().enumerate() {
            (self.model)(x, p, Some(&mut grad));
            for (col, g) in grad.iter().enumerate() {
                jac[(row, col)] = *g;
            }
        }
        Some(jac)
    }
}

fn least_squares<M>(x: &[f64], y: &[f64], start: Vec<f64>, model: M) -> Result<(Vec<f64>, f64)>
where
    M: Fn(f64, &[f64], Option<&mut [f64]>) -> f64,
{
    let problem = CurveFit { x, y, p: DVector::from_vec(start), model };
    let (fitted, report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!("{:?}", report.termination)));
    }
    let rms = (2.0 * report.objective_function / x.len() as f64).sqrt();
    Ok((fitted.p.as_slice().to_vec(), rms))
}

/// Least-squares Gaussian a·exp(−(x−x0)²/2s²) through the points, started
/// from a parabola fitted to ln y.
fn fit_gaussian(x: &[f64], y: &[f64]) -> Result<EnvelopeFit> {
    let top = y.iter().copied().fold(0.0, f64::max);
    let at_top = x[y.iter().position(|&v| v == top).unwrap_or(0)];
    if x.len() < 3 {
        let spread = if x.len() == 2 { (x[1] - x[0]).abs() } else { 0.0 };
        return Ok(EnvelopeFit { gamma: spread.max(f64::MIN_POSITIVE), center: at_top, amplitude: top });
    }
    let mut start = vec![top, at_top, 0.5 * (x[x.len() - 1] - x[0]).abs().max(f64::MIN_POSITIVE)];
    // ln y = c0 + c1 x + c2 x², in units centred on the top point
    let scale = start[2];
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        if yi <= 0.0 {
            continue;
        }
        let u = (xi - at_top) / scale;
        let row = [1.0, u, u * u];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            atb[r] += row[r] * yi.ln();
        }
    }
    if let Some([c0, c1, c2]) = solve3(ata, atb) {
        if c2 < 0.0 {
            let s = (-0.5 / c2).sqrt();
            let u0 = c1 * s * s;
            start = vec![(c0 + 0.5 * u0 * u0 / (s * s)).exp(), at_top + u0 * scale, s * scale];
        }
    }
    let model = |x: f64, p: &[f64], grad: Option<&mut [f64]>| {
        let d = x - p[1];
        let e = (-0.5 * d * d / (p[2] * p[2])).exp();
        if let Some(g) = grad {
            g[0] = e;
            g[1] = p[0] * e * d / (p[2] * p[2]);
            g[2] = p[0] * e * d * d / (p[2] * p[2] * p[2]);
        }
        p[0] * e
    };
    let (p, _) = least_squares(x, y, start, model)?;
    Ok(EnvelopeFit { gamma: p[2].abs(), center: p[1], amplitude: p[0] })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Parameters of the Gaussian-envelope comb model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombFit {
    pub amplitude: f64,
    pub envelope_center: f64,
    pub gamma: f64,
    pub delta_sep: f64,
    pub peak_fwhm: f64,
    /// RMS misfit.
    pub residual: f64,
}

/// Evaluate the comb model at δ.
pub fn comb_model(delta: f64, amplitude: f64, envelope_center: f64, gamma: f64, delta_sep: f64, fwhm: f64) -> f64 {
    comb_model_grad(delta, &[amplitude, envelope_center, gamma, delta_sep, fwhm], None)
}

fn comb_model_grad(x: f64, p: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let (a, xe, gamma, sep, w) = (p[0], p[1], p[2], p[3], p[4]);
    let de = x - xe;
    let env = (-0.5 * de * de / (gamma * gamma)).exp();
    let reach = 8.0 * w.abs();
    let lo = ((x - reach) / sep).ceil() as i64;
    let hi = ((x + reach) / sep).floor() as i64;
    let (mut sum, mut d_sep, mut d_w) = (0.0, 0.0, 0.0);
    for j in lo.min(hi)..=hi.max(lo) {
        let d = x - j as f64 * sep;
        let g = (-FOUR_LN2 * d * d / (w * w)).exp();
        sum += g;
        d_sep += g * 2.0 * FOUR_LN2 * d * j as f64 / (w * w);
        d_w += g * 2.0 * FOUR_LN2 * d * d / (w * w * w);
    }
    if let Some(g) = grad {
        g[0] = env * sum;
        g[1] = a * env * sum * de / (gamma * gamma);
        g[2] = a * env * sum * de * de / (gamma * gamma * gamma);
        g[3] = a * env * d_sep;
        g[4] = a * env * d_w;
    }
    a * env * sum
}

/// Nonlinear least-squares fit of the comb model, started from detected teeth.
pub fn fit_comb_model(profile: &AfcProfile, peaks: &PeakSet) -> Result<CombFit> {
    if peaks.len() < 2 {
        return Err(Error::Fit("tooth spacing is unidentifiable from a single tooth".into()));
    }
    let start = vec![
        peaks.envelope_fit.amplitude,
        peaks.envelope_fit.center,
        peaks.envelope_fit.gamma,
        peaks.spacing()?,
        peaks.typical_fwhm(),
    ];
    let (p, residual) = least_squares(&profile.delta, &profile.rho33, start, comb_model_grad)?;
    if p.iter().any(|v| !v.is_finite()) || p[3].abs() < 1e-12 * peaks.spacing()?.abs() {
        return Err(Error::Fit("fit diverged".into()));
    }
    Ok(CombFit {
        amplitude: p[0],
        envelope_center: p[1],
        gamma: p[2].abs(),
        delta_sep: p[3].abs(),
        peak_fwhm: p[4].abs(),
        residual,
    })
}
