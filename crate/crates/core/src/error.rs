use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate ground states: ω13 = 0, velocity comb undefined")]
    DegenerateGroundStates,

    #[error("mixing angle undefined: both Rabi frequencies vanish at t = {t:e} s")]
    UndefinedMixingAngle { t: f64 },

    #[error("frequency grid too coarse: {bins_per_tooth:.2} bins per tooth spacing, need ≥ {required}")]
    GridTooCoarse { bins_per_tooth: f64, required: usize },

    #[error("time grid too short: covers [{start:e}, {end:e}] s, need [{need_start:e}, {need_end:e}] s")]
    GridTooShort { start: f64, end: f64, need_start: f64, need_end: f64 },

    #[error("numerical failure at v = {velocity} m/s, t = {time:e} s: {reason}")]
    Numerical { velocity: f64, time: f64, reason: String },

    #[error("{what} under-resolved: spacing {spacing:e}, need ≤ {required:e}")]
    UnderResolved { what: &'static str, spacing: f64, required: f64 },

    #[error("not converged: {quantity} changed by {change:e} on refinement, tolerance {tolerance:e}")]
    NotConverged { quantity: String, change: f64, tolerance: f64 },

    #[error("no peaks found in profile")]
    NoPeaks,

    #[error("comb model fit: {0}")]
    Fit(String),

    #[error("configuration error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { path: path.into(), reason: reason.into() }
    }

    /// True for errors caused by the numerical pipeline rather than input validation.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical { .. } | Error::NotConverged { .. } | Error::NoPeaks | Error::Fit(_) | Error::UnderResolved { .. }
        )
    }
}
