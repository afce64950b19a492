//! Physical constants (CODATA 2018 exact/recommended values) and defaults.

use core::f64::consts::PI;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Avogadro constant, 1/mol.
pub const AVOGADRO: f64 = 6.022_140_76e23;
/// Proton gyromagnetic ratio gamma_p / 2pi, Hz/T.
pub const PROTON_GYRO_HZ_PER_T: f64 = 42.577_478_518e6;
/// NV electron gyromagnetic ratio, Hz/T (28 040 MHz/T).
pub const NV_ELECTRON_GYRO_HZ_PER_T: f64 = 28.040e9;

pub const TWO_PI: f64 = 2.0 * PI;
