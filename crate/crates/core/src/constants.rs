//! CODATA 2018 constants, SI units.

/// Speed of light in vacuum (m/s).
pub const C: f64 = 299_792_458.0;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Atomic mass unit (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;
