//! Analytic sensing physics: accumulated phase during a DD block, readout
//! probabilities for x- and y-phase final pulses, the DD noise-spectroscopy
//! lineshape, and conversion between field amplitude and interaction strength.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::constants::NV_ELECTRON_GYRO_HZ_PER_T;
use crate::error::{config, invalid};
use crate::numeric;
use crate::Result;

/// Coupling between the target signal and the sensor spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionParams {
    /// Interaction strength alpha, radians.
    pub alpha: f64,
    /// Sensor gyromagnetic ratio, Hz/T.
    #[serde(default = "default_gyro")]
    pub gyromagnetic_ratio: f64,
    /// Detuning of the DD filter from the signal, Hz.
    #[serde(default)]
    pub detuning: f64,
}

fn default_gyro() -> f64 {
    NV_ELECTRON_GYRO_HZ_PER_T
}

impl InteractionParams {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            gyromagnetic_ratio: NV_ELECTRON_GYRO_HZ_PER_T,
            detuning: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(config("interaction.alpha", "must be non-negative and finite"));
        }
        if !(self.gyromagnetic_ratio > 0.0 && self.gyromagnetic_ratio.is_finite()) {
            return Err(config("interaction.gyromagnetic_ratio", "must be positive"));
        }
        if !self.detuning.is_finite() {
            return Err(config("interaction.detuning", "must be finite"));
        }
        Ok(())
    }
}

/// Bessel function of the first kind, order 0.
pub fn bessel_j0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(invalid("x", "must be finite"));
    }
    Ok(numeric::bessel_j0_unchecked(x))
}

/// Bessel function of the first kind, order 1.
pub fn bessel_j1(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(invalid("x", "must be finite"));
    }
    Ok(numeric::bessel_j1_unchecked(x))
}

/// `sin(x) / x` with the removable singularity filled in.
pub fn sinc_pi(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if libm::fabs(x) < 1e-6 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        libm::sin(x) / x
    }
}

/// d/dx sinc(x).
fn sinc_derivative(x: f64) -> f64 {
    if libm::fabs(x) < 1e-4 {
        -x / 3.0 + x * x * x / 30.0
    } else {
        (libm::cos(x) - libm::sin(x) / x) / x
    }
}

/// `alpha = 2pi (2/pi) B gamma tau_sens = 4 B gamma tau_sens`.
pub fn alpha_from_field(field: f64, sensing_time: f64, gyromagnetic_ratio: f64) -> Result<f64> {
    if !(field >= 0.0 && field.is_finite()) {
        return Err(invalid("field", "must be non-negative and finite"));
    }
    check_positive("sensing_time", sensing_time)?;
    check_positive("gyromagnetic_ratio", gyromagnetic_ratio)?;
    Ok(4.0 * field * gyromagnetic_ratio * sensing_time)
}

/// Inverse of [`alpha_from_field`].
pub fn field_from_alpha(alpha: f64, sensing_time: f64, gyromagnetic_ratio: f64) -> Result<f64> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha", "must be non-negative and finite"));
    }
    check_positive("sensing_time", sensing_time)?;
    check_positive("gyromagnetic_ratio", gyromagnetic_ratio)?;
    Ok(alpha / (4.0 * gyromagnetic_ratio * sensing_time))
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, "must be positive and finite"))
    }
}

/// Phase acquired in one DD block: `alpha cos(phi) sinc(N_p pi delta tau)`.
pub fn accumulated_phase(alpha: f64, phi: f64, pulse_count: u32, detuning: f64, pulse_spacing: f64) -> f64 {
    let arg = pulse_count as f64 * core::f64::consts::PI * detuning * pulse_spacing;
    alpha * libm::cos(phi) * sinc_pi(arg)
}

/// Bright-state probability after an x-phase final pi/2 pulse.
pub fn p0_x_readout(theta: f64) -> f64 {
    (libm::cos(theta) + 1.0) / 2.0
}

/// Bright-state probability after a y-phase (phase-sensitive) final pi/2 pulse.
pub fn p0_y_readout(alpha: f64, phi: f64) -> f64 {
    (libm::sin(alpha * libm::cos(phi)) + 1.0) / 2.0
}

/// Phase-averaged DD spectroscopy signal at each pulse spacing:
/// `(1 - J0(alpha sinc(N_p pi delta tau))) / 2` with `delta = 1/(2 tau) - f_t`.
pub fn dd_lineshape(alpha: f64, pulse_count: u32, spacings: &[f64], target_frequency: f64) -> Result<Vec<f64>> {
    spacings
        .iter()
        .map(|&tau| {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(invalid("spacings", "pulse spacings must be positive"));
            }
            Ok(dd_point(alpha, pulse_count, tau, target_frequency).0)
        })
        .collect()
}

/// Lineshape value and its partial derivatives `(S, dS/dalpha, dS/df_t)`.
pub(crate) fn dd_point(alpha: f64, pulse_count: u32, tau: f64, target_frequency: f64) -> (f64, f64, f64) {
    let np = pulse_count as f64;
    let delta = 0.5 / tau - target_frequency;
    let y = np * core::f64::consts::PI * delta * tau;
    let s = sinc_pi(y);
    let (j0, j1) = numeric::bessel_j0_j1(alpha * s);
    let value = 0.5 * (1.0 - j0);
    // dJ0/dx = -J1
    let d_alpha = 0.5 * j1 * s;
    let d_ft = 0.5 * j1 * alpha * sinc_derivative(y) * (-np * core::f64::consts::PI * tau);
    (value, d_alpha, d_ft)
}
