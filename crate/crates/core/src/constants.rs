//! Physical constants (CODATA 2018, SI units).
//!
//! | constant | value (9 significant digits) |
//! |----------|------------------------------|
//! | ħ        | 1.05457182e-34 J s           |
//! | k_B      | 1.38064900e-23 J/K           |
//! | ε0       | 8.85418781e-12 F/m           |
//! | c        | 2.99792458e8 m/s             |
//! | u (amu)  | 1.66053907e-27 kg            |

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K (exact).
pub const KB: f64 = 1.380_649e-23;
/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Speed of light, m/s (exact).
pub const C: f64 = 299_792_458.0;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
