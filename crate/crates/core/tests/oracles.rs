//! Cross-checks of the core crate against independent references: rustfft
//! for the DFT, and closed-form rectified amplitudes for the Monte Carlo.

use std::f64::consts::PI;

use num_complex::Complex64;
use rectdyne_core::numeric::bessel_j1_unchecked as j1;
use rectdyne_core::protocols::{run_protocol, PhotonModel, Protocol, ProtocolConfig};
use rectdyne_core::spectral::{dft, oscillation_amplitude, CoherentAccumulator, FftPlan};
use rustfft::FftPlanner;

#[test]
fn dft_matches_rustfft() {
    let mut planner = FftPlanner::<f64>::new();
    for &n in &[1usize, 2, 3, 8, 97, 999, 1024, 4000, 6000, 101 * 103] {
        let x: Vec<f64> = (0..n).map(|j| ((j * 7919) % 257) as f64 / 257.0 - 0.5 + (j as f64 * 0.01).sin()).collect();
        let ours = dft(&FftPlan::new(n), &x);
        let mut theirs: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        planner.plan_fft_forward(n).process(&mut theirs);
        let scale = theirs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        let err = ours.iter().zip(&theirs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err / scale < 1e-12, "n={n}: {err:e}");
    }
}

fn rectified_amplitude(mut cfg: ProtocolConfig) -> (f64, f64) {
    let m = cfg.geometry.points_per_trace;
    let mut acc = CoherentAccumulator::new(m, cfg.readout.mean_photons, cfg.geometry.sample_interval, false);
    cfg.init_success_prob = 1.0;
    let bin = cfg.signal_bin().0;
    let n = cfg.n_traces as f64;
    let noise = (cfg.readout.mean_photons / n).sqrt() * (2.0 / m as f64).sqrt();
    for t in run_protocol(cfg).unwrap() {
        acc.add(&t);
    }
    (oscillation_amplitude(&acc.averaged_trace().unwrap(), bin), noise)
}

#[test]
fn ex_situ_amplitude_follows_phase_resolved_factor() {
    let mut cfg = ProtocolConfig::reference(Protocol::ExSitu);
    cfg.n_traces = 6000;
    let (nb, c, a, f) = (cfg.readout.mean_photons, cfg.readout.contrast, cfg.interaction.alpha, cfg.charge_infidelity);
    let (amp, noise) = rectified_amplitude(cfg);
    let expected = 0.5 * nb * c * (1.0 - f) * j1(a);
    assert!((amp - expected).abs() < 4.0 * noise, "{amp} vs {expected} (noise {noise})");
}

#[test]
fn projective_readout_adds_a_bessel_factor() {
    // Per readout the bright-state probability is (1 + sin(alpha cos phase))/2,
    // whose fundamental carries 2 J1(alpha); rectification contributes J1(alpha).
    let mut cfg = ProtocolConfig::reference(Protocol::InSitu);
    cfg.n_traces = 6000;
    cfg.charge_infidelity = 0.0;
    cfg.interaction.alpha = 0.4 * PI;
    cfg.photon_model = PhotonModel::Projective;
    let (nb, c, a) = (cfg.readout.mean_photons, cfg.readout.contrast, cfg.interaction.alpha);
    let (amp, noise) = rectified_amplitude(cfg);
    let expected = 0.5 * nb * c * 2.0 * j1(a) * j1(a);
    assert!((amp - expected).abs() < 4.0 * noise, "{amp} vs {expected} (noise {noise})");
}
