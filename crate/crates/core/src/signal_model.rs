//! Target RF signal, random-phase sampling, aliasing and the noiseless
//! photon-rate trace underlying every simulated readout.

use core::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::error::{config, invalid};
use crate::Result;

/// How the initial signal phase of each trace is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Uniform on `[0, 2pi)`, independently for each trace.
    RandomUniform,
    /// The same phase (radians) for every trace.
    Fixed(f64),
}

/// The RF target field: frequency in Hz, amplitude in tesla.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSignal {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase_mode: PhaseMode,
}

impl TargetSignal {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(config("signal.frequency", "must be positive and finite"));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(config("signal.amplitude", "must be non-negative and finite"));
        }
        if let PhaseMode::Fixed(p) = self.phase_mode {
            if !p.is_finite() {
                return Err(config("signal.phase_mode", "fixed phase must be finite"));
            }
        }
        Ok(())
    }
}

/// Sampling layout of one trace and the DD sensing block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceGeometry {
    /// Sequential readouts per trace (`m`).
    pub points_per_trace: usize,
    /// Time between consecutive readouts, seconds.
    pub sample_interval: f64,
    /// Spacing between DD pi pulses, seconds.
    pub pulse_spacing: f64,
    /// Number of pi pulses in the sensing block (multiple of 8 for XY8-n).
    pub pulse_count: u32,
}

impl TraceGeometry {
    /// Total phase-accumulation time of one XY8-n block: `N_p * tau`.
    pub fn sensing_time(&self) -> f64 {
        self.pulse_count as f64 * self.pulse_spacing
    }

    pub fn sampling_rate(&self) -> f64 {
        1.0 / self.sample_interval
    }

    /// Frequency spacing of the DFT bins of one trace.
    pub fn bin_width(&self) -> f64 {
        1.0 / (self.points_per_trace as f64 * self.sample_interval)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_trace < 2 {
            return Err(config("geometry.points_per_trace", "need at least 2 points"));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(config("geometry.sample_interval", "must be positive and finite"));
        }
        if !(self.pulse_spacing > 0.0 && self.pulse_spacing.is_finite()) {
            return Err(config("geometry.pulse_spacing", "must be positive and finite"));
        }
        if self.pulse_count == 0 || self.pulse_count % 8 != 0 {
            return Err(config("geometry.pulse_count", "must be a positive multiple of 8 (XY8-n)"));
        }
        Ok(())
    }
}

/// Photon-count noise model of a single readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Poisson,
    /// Real-valued counts `rate + sqrt(rate) * z`, for checking shot-noise formulas.
    Gaussian,
}

/// Optical readout: mean detected photons per readout and spin contrast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonReadoutModel {
    pub mean_photons: f64,
    pub contrast: f64,
    pub noise_mode: NoiseMode,
}

impl PhotonReadoutModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_photons > 0.0 && self.mean_photons.is_finite()) {
            return Err(config("readout.mean_photons", "must be positive and finite"));
        }
        // Zero contrast is allowed: it gives the pure-noise pools used for noise-floor studies.
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(config("readout.contrast", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// `n (1 + (c/2) cos x)`.
    #[inline]
    pub fn rate_at(&self, phase_argument: f64) -> f64 {
        self.mean_photons * (1.0 + 0.5 * self.contrast * libm::cos(phase_argument))
    }
}

/// A frequency folded into the first Nyquist zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliasedFrequency {
    /// Detected frequency in `[0, f_s / 2]`.
    pub frequency: f64,
    /// `floor(f / f_s)`.
    pub fold_index: u64,
    /// True when `f mod f_s` lies above Nyquist and was reflected.
    pub mirrored: bool,
    pub sampling_rate: f64,
}

impl AliasedFrequency {
    /// Recovers the applied frequency from the detected one.
    pub fn unfold(&self) -> f64 {
        let base = self.fold_index as f64 * self.sampling_rate;
        if self.mirrored {
            base + self.sampling_rate - self.frequency
        } else {
            base + self.frequency
        }
    }
}

/// Folds `f` into `[0, f_s/2]` for sampling interval `sample_interval`.
pub fn alias_frequency(frequency: f64, sample_interval: f64) -> Result<AliasedFrequency> {
    if !(sample_interval > 0.0 && sample_interval.is_finite()) {
        return Err(invalid("sample_interval", "must be positive and finite"));
    }
    if !(frequency >= 0.0 && frequency.is_finite()) {
        return Err(invalid("frequency", "must be non-negative and finite"));
    }
    let fs = 1.0 / sample_interval;
    let fold = libm::floor(frequency / fs);
    let mut remainder = frequency - fold * fs;
    // Guard the floating-point edge where the remainder lands at fs.
    if remainder >= fs {
        remainder -= fs;
    }
    let remainder = remainder.max(0.0);
    let mirrored = remainder > 0.5 * fs;
    Ok(AliasedFrequency {
        frequency: if mirrored { fs - remainder } else { remainder },
        fold_index: fold as u64,
        mirrored,
        sampling_rate: fs,
    })
}

/// Noiseless photon rate of readout `j` in a trace with initial phase `phase`.
pub fn expected_rate(
    model: &PhotonReadoutModel,
    signal: &TargetSignal,
    geometry: &TraceGeometry,
    phase: f64,
    j: usize,
) -> Result<f64> {
    if j >= geometry.points_per_trace {
        return Err(invalid("j", "readout index out of range"));
    }
    let detected = alias_frequency(signal.frequency, geometry.sample_interval)?.frequency;
    Ok(model.rate_at(TWO_PI * detected * j as f64 * geometry.sample_interval + phase))
}

/// Draws the initial phase of one trace.
pub fn sample_phase<R: Rng + ?Sized>(signal: &TargetSignal, rng: &mut R) -> f64 {
    match signal.phase_mode {
        PhaseMode::RandomUniform => rng.random::<f64>() * 2.0 * PI,
        PhaseMode::Fixed(theta) => theta,
    }
}
