//! Theory predictions and fits: SNR scaling laws, power-law regression,
//! DD lineshape fitting for alpha, and the protocol-comparison calculator.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::{AVOGADRO, HBAR, K_B};
use crate::error::invalid;
use crate::numeric::{self, levenberg_marquardt, LmOptions};
use crate::physics::{self, dd_point};
use crate::{Error, Result};

/// Analytic SNR for `N` averaged traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPrediction {
    /// `slope * N - 1` (coherent) or `slope * sqrt(N) - 1` (incoherent).
    pub exact: f64,
    /// Same without the `-1`.
    pub leading: f64,
    /// `n m c^2 k^2 / 16` (coherent) or `n m c^2 / 16` (incoherent).
    pub slope: f64,
}

/// Shot-noise-limited PSD SNR of coherent (rectified) or incoherent averaging.
/// `k` is ignored for incoherent averaging.
pub fn predict_snr(coherent: bool, mean_photons: f64, points: usize, contrast: f64, k: f64, n: f64) -> SnrPrediction {
    let base = mean_photons * points as f64 * contrast * contrast / 16.0;
    let (slope, scale) = if coherent { (base * k * k, n) } else { (base, libm::sqrt(n)) };
    let leading = slope * scale;
    SnrPrediction {
        exact: leading - 1.0,
        leading,
        slope,
    }
}

/// `value ~ prefactor * N^exponent`, fitted in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// Covariance of `(exponent, prefactor)`; exponent entries are zero when pinned.
    pub covariance: [[f64; 2]; 2],
    pub n_points: usize,
    pub pinned: bool,
}

fn log_points(points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if points.len() < 3 {
        return Err(invalid("points", "need at least 3 points"));
    }
    points
        .iter()
        .map(|&(n, v)| {
            if n > 0.0 && v > 0.0 && n.is_finite() && v.is_finite() {
                Ok((libm::log(n), libm::log(v)))
            } else {
                Err(invalid("points", "all N and values must be positive and finite"))
            }
        })
        .collect()
}

/// Ordinary least squares of `log value` on `log N`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let lp = log_points(points)?;
    let n = lp.len() as f64;
    let mx = lp.iter().map(|p| p.0).sum::<f64>() / n;
    let my = lp.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = lp.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx <= 0.0 {
        return Err(invalid("points", "need at least two distinct N"));
    }
    let sxy: f64 = lp.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = lp.iter().map(|p| { let e = p.1 - intercept - slope * p.0; e * e }).sum();
    let s2 = resid / (n - 2.0);
    let var_slope = s2 / sxx;
    let var_int = s2 * (1.0 / n + mx * mx / sxx);
    let cov_si = -s2 * mx / sxx;
    let prefactor = libm::exp(intercept);
    // Delta method: d prefactor = prefactor * d intercept.
    Ok(ScalingFit {
        exponent: slope,
        prefactor,
        covariance: [
            [var_slope, prefactor * cov_si],
            [prefactor * cov_si, prefactor * prefactor * var_int],
        ],
        n_points: lp.len(),
        pinned: false,
    })
}

/// Prefactor-only fit with the exponent held at `exponent`.
pub fn fit_power_law_pinned(points: &[(f64, f64)], exponent: f64) -> Result<ScalingFit> {
    let lp = log_points(points)?;
    let n = lp.len() as f64;
    let offsets: Vec<f64> = lp.iter().map(|p| p.1 - exponent * p.0).collect();
    let mean = offsets.iter().sum::<f64>() / n;
    let s2 = offsets.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>() / (n - 1.0);
    let prefactor = libm::exp(mean);
    Ok(ScalingFit {
        exponent,
        prefactor,
        covariance: [[0.0, 0.0], [0.0, prefactor * prefactor * s2 / n]],
        n_points: lp.len(),
        pinned: true,
    })
}

/// Result of a DD lineshape fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineshapeFit {
    pub alpha: f64,
    pub target_frequency: f64,
    /// Covariance of `(alpha, target_frequency)`.
    pub covariance: [[f64; 2]; 2],
    pub residual_sum_squares: f64,
    pub iterations: usize,
}

/// Fits `(1 - J0(alpha sinc(N_p pi delta tau)))/2` to a `(tau, signal)` sweep.
///
/// Starts from `alpha_guess` and from `alpha in {0.2, 0.5, 0.8} pi` and keeps
/// the lowest-cost converged solution.
pub fn fit_dd_lineshape(
    sweep: &[(f64, f64)],
    pulse_count: u32,
    frequency_guess: f64,
    alpha_guess: f64,
) -> Result<LineshapeFit> {
    if sweep.len() < 5 {
        return Err(invalid("sweep", "need at least 5 points"));
    }
    if sweep.iter().any(|&(tau, s)| !(tau > 0.0 && tau.is_finite() && s.is_finite())) {
        return Err(invalid("sweep", "spacings must be positive and signals finite"));
    }
    if frequency_guess.is_nan() || frequency_guess <= 0.0 {
        return Err(invalid("frequency_guess", "must be positive"));
    }
    // Work with frequency in units of the guess so both parameters are O(1).
    let scale = frequency_guess;
    let model = |p: &[f64; 2], r: &mut [f64], j: &mut [[f64; 2]]| {
        if !(p[0].is_finite() && p[1].is_finite()) || p[1] <= 0.0 {
            return false;
        }
        for (i, &(tau, s)) in sweep.iter().enumerate() {
            let (v, da, df) = dd_point(p[0], pulse_count, tau, p[1] * scale);
            r[i] = v - s;
            j[i] = [da, df * scale];
        }
        true
    };
    let mut best: Option<numeric::LmOutcome<2>> = None;
    let mut last_err = None;
    for start in [alpha_guess, 0.2 * PI, 0.5 * PI, 0.8 * PI] {
        match levenberg_marquardt(model, [start, 1.0], sweep.len(), LmOptions::default()) {
            Ok(out) => {
                if best.as_ref().map_or(true, |b| out.cost < b.cost) {
                    best = Some(out);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some(out) = best else {
        return Err(last_err.unwrap_or(Error::FitFailure {
            iterations: 0,
            cost: f64::NAN,
            reason: "no start converged".into(),
        }));
    };
    let dof = (sweep.len() - 2) as f64;
    let s2 = out.cost / dof;
    let inv = numeric::lm::invert(out.normal_matrix).ok_or_else(|| Error::FitFailure {
        iterations: out.iterations,
        cost: out.cost,
        reason: format!("singular normal matrix at {:?}", out.params),
    })?;
    let cov = [
        [s2 * inv[0][0], s2 * inv[0][1] * scale],
        [s2 * inv[1][0] * scale, s2 * inv[1][1] * scale * scale],
    ];
    // J0 is even: alpha and -alpha give the same lineshape.
    Ok(LineshapeFit {
        alpha: libm::fabs(out.params[0]),
        target_frequency: out.params[1] * scale,
        covariance: cov,
        residual_sum_squares: out.cost,
        iterations: out.iterations,
    })
}

/// Noisy DD sweep for closed-loop fit tests: `tau` uniformly spaced on
/// `[tau_min, tau_max]`, additive Gaussian noise of `noise_sigma`, one
/// deterministic stream per `(seed, run)`.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_dd_sweep(
    alpha: f64,
    target_frequency: f64,
    pulse_count: u32,
    tau_min: f64,
    tau_max: f64,
    points: usize,
    noise_sigma: f64,
    seed: u64,
    run: u64,
) -> Result<Vec<(f64, f64)>> {
    if points < 2 || !(tau_min > 0.0 && tau_max > tau_min) {
        return Err(invalid("tau range", "need points >= 2 and 0 < tau_min < tau_max"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(invalid("noise_sigma", "must be non-negative"));
    }
    let taus: Vec<f64> = (0..points)
        .map(|i| tau_min + (tau_max - tau_min) * i as f64 / (points - 1) as f64)
        .collect();
    let clean = physics::dd_lineshape(alpha, pulse_count, &taus, target_frequency)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    Ok(taus
        .into_iter()
        .zip(clean)
        .map(|(t, s)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (t, s + noise_sigma * z)
        })
        .collect())
}

/// Inverts the on-resonance contrast `S = (1 - J0(alpha))/2` for
/// `alpha` in `[0, j_{0,1}]`, where J0 is monotone.
pub fn alpha_from_contrast(contrast: f64) -> Result<f64> {
    const FIRST_ZERO: f64 = 2.404_825_557_695_773;
    if !(0.0..=0.5).contains(&contrast) {
        return Err(invalid("contrast", "must lie in [0, 1/2]"));
    }
    let (mut lo, mut hi) = (0.0, FIRST_ZERO);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * (1.0 - numeric::bessel_j0_unchecked(mid)) < contrast {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolLabel {
    SingleNoRect,
    SingleRect,
    EnsembleNoRect,
    EnsembleRect,
    Correlation,
    #[serde(rename = "CASR")]
    Casr,
}

impl ProtocolLabel {
    pub const ALL: [ProtocolLabel; 6] = [
        ProtocolLabel::SingleNoRect,
        ProtocolLabel::SingleRect,
        ProtocolLabel::EnsembleNoRect,
        ProtocolLabel::EnsembleRect,
        ProtocolLabel::Correlation,
        ProtocolLabel::Casr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolLabel::SingleNoRect => "SingleNoRect",
            ProtocolLabel::SingleRect => "SingleRect",
            ProtocolLabel::EnsembleNoRect => "EnsembleNoRect",
            ProtocolLabel::EnsembleRect => "EnsembleRect",
            ProtocolLabel::Correlation => "Correlation",
            ProtocolLabel::Casr => "CASR",
        }
    }
}

/// Constants of the relative-SNR comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonParams {
    /// Single-to-ensemble contrast ratio (30 % / 5 %).
    pub contrast_ratio: f64,
    /// SNR gain of single-NV rectification over plain Qdyne after 5 min.
    pub rectification_gain: f64,
    /// Reduction factor of the rectified protocols.
    pub reduction_factor: f64,
    /// Points per trace, sets the correlation-spectroscopy time penalty `(m+1)/2`.
    pub points_per_trace: usize,
    /// Use the rounded penalty `m/2` instead of `(m+1)/2`.
    pub rounded_penalty: bool,
    /// Statistical-to-thermal polarization ratio.
    pub thermal_ratio: f64,
}

impl Default for ComparisonParams {
    fn default() -> Self {
        Self {
            contrast_ratio: 6.0,
            rectification_gain: 4.0,
            reduction_factor: 0.4,
            points_per_trace: 4000,
            rounded_penalty: false,
            thermal_ratio: 300.0,
        }
    }
}

impl ComparisonParams {
    pub fn correlation_penalty(&self) -> f64 {
        if self.rounded_penalty {
            self.points_per_trace as f64 / 2.0
        } else {
            (self.points_per_trace as f64 + 1.0) / 2.0
        }
    }

    /// Relative SNR of `label` at `n_nv` sensors.
    pub fn relative_snr(&self, label: ProtocolLabel, n_nv: f64) -> f64 {
        let c2 = self.contrast_ratio * self.contrast_ratio;
        let k2 = self.reduction_factor * self.reduction_factor;
        let g = self.rectification_gain;
        match label {
            ProtocolLabel::SingleNoRect => 1.0,
            ProtocolLabel::SingleRect => g,
            ProtocolLabel::EnsembleNoRect => 1.0 / c2,
            ProtocolLabel::EnsembleRect => g / c2 * n_nv,
            ProtocolLabel::Correlation => g / (c2 * k2 * self.correlation_penalty()) * n_nv,
            ProtocolLabel::Casr => g / (c2 * k2 * self.thermal_ratio * self.thermal_ratio) * n_nv,
        }
    }
}

/// Relative SNR (reference: single NV, no rectification) versus NV count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCurve {
    pub protocol_label: ProtocolLabel,
    pub n_nv: Vec<f64>,
    pub relative_snr: Vec<f64>,
}

pub fn comparison_curves(n_nv_grid: &[f64], params: &ComparisonParams) -> Result<Vec<ComparisonCurve>> {
    if n_nv_grid.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(invalid("n_nv_grid", "NV counts must be positive"));
    }
    Ok(ProtocolLabel::ALL
        .iter()
        .map(|&label| ComparisonCurve {
            protocol_label: label,
            n_nv: n_nv_grid.to_vec(),
            relative_snr: n_nv_grid.iter().map(|&n| params.relative_snr(label, n)).collect(),
        })
        .collect())
}

/// Relative nuclear polarization of a nanoscale detection volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationRatio {
    /// `1 / sqrt(rho V)` with `V` a hemisphere of radius `depth`.
    pub statistical: f64,
    /// `tanh(hbar omega / (2 k_B T))`.
    pub thermal: f64,
}

/// `spin_density` in spins/m^3, `depth` in m, `omega` in rad/s, `temperature` in K.
pub fn polarization_ratio(spin_density: f64, depth: f64, omega: f64, temperature: f64) -> Result<PolarizationRatio> {
    for (name, v) in [
        ("spin_density", spin_density),
        ("depth", depth),
        ("omega", omega),
        ("temperature", temperature),
    ] {
        if v.is_nan() || v <= 0.0 {
            return Err(invalid(name, "must be positive"));
        }
    }
    let volume = 2.0 / 3.0 * PI * depth * depth * depth;
    Ok(PolarizationRatio {
        statistical: 1.0 / libm::sqrt(spin_density * volume),
        thermal: libm::tanh(HBAR * omega / (2.0 * K_B * temperature)),
    })
}

/// Converts a molar concentration (mol/L) of spins to spins per m^3.
pub fn molar_to_spin_density(mol_per_litre: f64) -> f64 {
    mol_per_litre * AVOGADRO * 1e3
}

/// Phase-averaged on-resonance contrast for `alpha`.
pub fn resonance_contrast(alpha: f64) -> f64 {
    0.5 * (1.0 - physics::bessel_j0(alpha).unwrap_or(f64::NAN))
}
