//! Rectification fidelity and its consequences.
//!
//! The memory qubit records the sign of `cos(phi)` only probabilistically:
//! `p0 = (sin(alpha cos phi) + 1)/2`. Averaging `p0` over the half-period
//! where the ideal decision is "0" gives the shot-noise-limited fidelity
//! `F_SN`. A blind (wrong charge state) sensor leaves the memory in `|0>`,
//! which mixes in `F_cs / 2`. Binary rectification of a continuous phase
//! recovers at most `2/pi` of the amplitude, so the amplitude reduction
//! factor is `k = (2/pi)(2F - 1)`.
//!
//! [`phase_resolved_factor`] gives the exact rectified amplitude of the
//! phase-resolved Monte Carlo model, `(1 - F_cs) J1(alpha)`. It differs from
//! `k` because rectification errors concentrate near `cos(phi) = 0`, where
//! they cost little amplitude.

use core::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::numeric::{self, gauss_kronrod, golden_section_max, simpson};

const QUAD_ABS_TOL: f64 = 1e-13;

/// All fidelity-derived quantities for one `(alpha, F_cs, sigma_alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub alpha: f64,
    pub charge_infidelity: f64,
    pub alpha_sigma: f64,
    /// Shot-noise-limited fidelity (ensemble-averaged when `alpha_sigma > 0`).
    pub f_sn: f64,
    /// Fidelity including charge-state infidelity.
    pub f_total: f64,
    /// `2F - 1`: amplitude factor of a purely binary (+/- full amplitude) signal.
    pub binary_factor: f64,
    /// `(2/pi)(2F - 1)`: amplitude factor for a continuous random phase.
    pub reduction_factor: f64,
    /// `1 - (2F - 1)^2`: PSD loss relative to deterministic rectification.
    pub psd_signal_loss: f64,
    /// `1 - k^2`: PSD loss relative to a fully coherent signal.
    pub psd_signal_loss_total: f64,
    /// Exact amplitude factor of the phase-resolved model, `(1 - F_cs) <J1(alpha)>`.
    pub phase_resolved_factor: f64,
}

impl FidelityReport {
    pub fn new(alpha: f64, charge_infidelity: f64, alpha_sigma: f64) -> Self {
        let f_sn = fidelity_alpha_ensemble(alpha, alpha_sigma, 0.0);
        let f_total = fidelity_alpha_ensemble(alpha, alpha_sigma, charge_infidelity);
        let binary = binary_factor(f_total);
        let k = reduction_factor(f_total);
        Self {
            alpha,
            charge_infidelity,
            alpha_sigma,
            f_sn,
            f_total,
            binary_factor: binary,
            reduction_factor: k,
            psd_signal_loss: 1.0 - binary * binary,
            psd_signal_loss_total: 1.0 - k * k,
            phase_resolved_factor: (1.0 - charge_infidelity)
                * truncated_normal_mean(alpha, alpha_sigma, numeric::bessel_j1_unchecked),
        }
    }
}

fn p0(alpha: f64, phi: f64) -> f64 {
    (libm::sin(alpha * libm::cos(phi)) + 1.0) / 2.0
}

/// `F_SN = (1/pi) int_{-pi/2}^{pi/2} (sin(alpha cos phi) + 1)/2 dphi`.
pub fn fidelity_shot_noise(alpha: f64) -> f64 {
    // The integrand is even in phi.
    let r = gauss_kronrod(|phi| p0(alpha, phi), 0.0, FRAC_PI_2, QUAD_ABS_TOL, 1e-15);
    2.0 * r.value / PI
}

/// Same integral by composite Simpson with 10^4 panels.
pub fn fidelity_shot_noise_simpson(alpha: f64) -> f64 {
    2.0 * simpson(|phi| p0(alpha, phi), 0.0, FRAC_PI_2, 10_000) / PI
}

/// Interaction strength maximizing [`fidelity_shot_noise`] on `(0, 2pi]`.
pub fn optimal_alpha() -> f64 {
    let grid = 400;
    let step = 2.0 * PI / grid as f64;
    let best = (1..=grid)
        .map(|i| i as f64 * step)
        .max_by(|a, b| fidelity_shot_noise(*a).total_cmp(&fidelity_shot_noise(*b)))
        .unwrap_or(FRAC_PI_2);
    let lo = (best - step).max(1e-9);
    let hi = (best + step).min(2.0 * PI);
    golden_section_max(fidelity_shot_noise, lo, hi, 1e-8).0
}

/// `F = F_cs/2 + (1 - F_cs) F_SN(alpha)`.
pub fn fidelity_with_charge(alpha: f64, charge_infidelity: f64) -> f64 {
    charge_infidelity / 2.0 + (1.0 - charge_infidelity) * fidelity_shot_noise(alpha)
}

/// [`fidelity_with_charge`] averaged over `alpha ~ Normal(mean, sigma)`
/// truncated to `alpha >= 0`.
pub fn fidelity_alpha_ensemble(mean_alpha: f64, alpha_sigma: f64, charge_infidelity: f64) -> f64 {
    if alpha_sigma <= 0.0 {
        return fidelity_with_charge(mean_alpha, charge_infidelity);
    }
    truncated_normal_mean(mean_alpha, alpha_sigma, |a| fidelity_with_charge(a, charge_infidelity))
}

/// `E[g(alpha)]` under a Normal(mean, sigma) truncated at zero.
pub(crate) fn truncated_normal_mean(mean: f64, sigma: f64, g: impl Fn(f64) -> f64) -> f64 {
    if sigma <= 0.0 {
        return g(mean);
    }
    let lo = (mean - 10.0 * sigma).max(0.0);
    let hi = (mean + 10.0 * sigma).max(lo + sigma);
    let pdf = |a: f64| {
        let z = (a - mean) / sigma;
        libm::exp(-0.5 * z * z)
    };
    let norm = gauss_kronrod(pdf, lo, hi, 1e-14, 1e-13).value;
    let weighted = gauss_kronrod(|a| pdf(a) * g(a), lo, hi, 1e-12, 1e-12).value;
    weighted / norm
}

/// `2F - 1`.
pub fn binary_factor(fidelity: f64) -> f64 {
    2.0 * fidelity - 1.0
}

/// `k = (2/pi)(2F - 1)`; negative below `F = 1/2` (anti-rectification).
pub fn reduction_factor(fidelity: f64) -> f64 {
    2.0 / PI * binary_factor(fidelity)
}

/// Exact rectified-amplitude factor of the phase-resolved memory model:
/// `E[(2 p0bar - 1) cos phi] = (1 - F_cs) J1(alpha)` for uniform `phi`.
pub fn phase_resolved_factor(alpha: f64, charge_infidelity: f64) -> f64 {
    (1.0 - charge_infidelity) * numeric::bessel_j1_unchecked(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_alpha_is_chance() {
        assert!((fidelity_shot_noise(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reference_fidelities() {
        assert!((fidelity_shot_noise(0.63 * PI) - 0.90).abs() < 0.005);
        assert!((fidelity_shot_noise(0.57 * PI) - 0.89).abs() < 0.005);
    }

    #[test]
    fn adaptive_and_simpson_agree() {
        for i in 0..=40 {
            let a = i as f64 * 0.05 * PI;
            assert!((fidelity_shot_noise(a) - fidelity_shot_noise_simpson(a)).abs() < 1e-8);
        }
    }

    #[test]
    fn optimum_against_brute_force_grid() {
        let opt = optimal_alpha();
        assert!((0.62..=0.64).contains(&(opt / PI)), "{}", opt / PI);
        let f = fidelity_shot_noise(opt);
        assert!(f >= fidelity_shot_noise(opt + 0.01));
        assert!(f >= fidelity_shot_noise(opt - 0.01));
        let n = 10_000;
        let grid_best = (1..=n)
            .map(|i| i as f64 * 2.0 * PI / n as f64)
            .max_by(|a, b| fidelity_shot_noise(*a).total_cmp(&fidelity_shot_noise(*b)))
            .unwrap();
        assert!((grid_best - opt).abs() < 1e-3);
    }

    #[test]
    fn monotone_up_to_optimum_then_down() {
        let opt = optimal_alpha();
        let mut prev = fidelity_shot_noise(0.0);
        for i in 1..=200 {
            let f = fidelity_shot_noise(opt * i as f64 / 200.0);
            assert!(f >= prev);
            prev = f;
        }
        for i in 1..=20 {
            let f = fidelity_shot_noise(opt + 0.01 * i as f64);
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn charge_state_degradation() {
        let a = 0.63 * PI;
        assert_eq!(fidelity_with_charge(a, 0.0), fidelity_shot_noise(a));
        assert!((fidelity_with_charge(a, 0.30) - 0.78).abs() < 0.005);
        assert!((fidelity_with_charge(a, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reduction_factor_values() {
        assert!((reduction_factor(1.0) - 2.0 / PI).abs() < 1e-15);
        assert_eq!(reduction_factor(0.5), 0.0);
        assert!((reduction_factor(0.78) - 0.36).abs() < 0.01);
        assert!(reduction_factor(0.3) < 0.0);
        let k = reduction_factor(0.78);
        assert!((1.0 - k * k - 0.87).abs() < 0.01);
        let b = binary_factor(0.78);
        assert!((b - 0.57).abs() < 0.01);
        assert!((1.0 - b * b - 0.68).abs() < 0.02);
    }

    #[test]
    fn ensemble_reduces_to_point_and_is_lower() {
        let a = 0.63 * PI;
        assert_eq!(fidelity_alpha_ensemble(a, 0.0, 0.1), fidelity_with_charge(a, 0.1));
        assert!(fidelity_alpha_ensemble(a, 0.2 * PI, 0.0) < fidelity_alpha_ensemble(a, 0.0, 0.0));
    }

    #[test]
    fn ensemble_matches_sampling_oracle() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let (mean, sigma, fcs) = (0.63 * PI, 0.2 * PI, 0.1);
        let normal = Normal::new(mean, sigma).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // Tabulate F on a fine grid so 10^6 samples stay cheap; linear
        // interpolation error (~1e-8) is far below the sampling error.
        let grid: alloc::vec::Vec<f64> = (0..=4000).map(|i| fidelity_with_charge(i as f64 * 0.002, fcs)).collect();
        let f_at = |a: f64| {
            let x = a / 0.002;
            let i = (x as usize).min(3999);
            let t = x - i as f64;
            grid[i] * (1.0 - t) + grid[i + 1] * t
        };
        let n = 1_000_000;
        let (mut s, mut s2, mut kept) = (0.0, 0.0, 0usize);
        while kept < n {
            let a: f64 = normal.sample(&mut rng);
            if a < 0.0 {
                continue;
            }
            let f = f_at(a);
            s += f;
            s2 += f * f;
            kept += 1;
        }
        let m = s / n as f64;
        let se = libm::sqrt((s2 / n as f64 - m * m) / n as f64);
        let q = fidelity_alpha_ensemble(mean, sigma, fcs);
        assert!((m - q).abs() < 4.0 * se, "{m} vs {q} (se {se})");
    }

    #[test]
    fn report_is_consistent() {
        let r = FidelityReport::new(0.63 * PI, 0.3, 0.0);
        assert_eq!(r.reduction_factor, reduction_factor(r.f_total));
        assert!((r.phase_resolved_factor - phase_resolved_factor(0.63 * PI, 0.3)).abs() < 1e-15);
        assert!(r.f_sn >= 0.5 && r.f_sn <= 1.0);
    }

    #[test]
    fn phase_resolved_factor_is_j1_average() {
        // E[sin(alpha cos phi) cos phi] over uniform phi, by quadrature.
        for &a in &[0.3 * PI, 0.57 * PI, 0.63 * PI] {
            let q = gauss_kronrod(|p| libm::sin(a * libm::cos(p)) * libm::cos(p), 0.0, 2.0 * PI, 1e-14, 1e-14);
            assert!((q.value / (2.0 * PI) - phase_resolved_factor(a, 0.0)).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn fidelity_bounds_and_charge_monotonicity(
            alpha in 0.0f64..(2.0 * PI),
            fcs in 0.0f64..1.0,
            dfcs in 0.0f64..0.5,
        ) {
            let f = fidelity_shot_noise(alpha);
            proptest::prop_assert!((0.0..=1.0).contains(&f));
            proptest::prop_assert!(f <= fidelity_shot_noise(optimal_alpha()) + 1e-9);
            if alpha <= PI {
                proptest::prop_assert!(f >= 0.5 - 1e-12);
            }
            // Charge infidelity only pulls the fidelity towards chance.
            let near = fidelity_with_charge(alpha, fcs);
            let far = fidelity_with_charge(alpha, (fcs + dfcs).min(1.0));
            proptest::prop_assert!((far - 0.5).abs() <= (near - 0.5).abs() + 1e-15);
            proptest::prop_assert!((fidelity_with_charge(alpha, 1.0) - 0.5).abs() < 1e-15);
        }
    }
}
