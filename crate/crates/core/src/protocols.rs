//! Monte Carlo trace generation for plain Qdyne and the two rectified
//! protocols (ex situ: classical memory readout, in situ: controlled
//! inversion of every readout by the memory qubit).
//!
//! Each trace is a pure function of `(config, index)`. Header draws
//! (initialization, charge state, phase, memory, alpha) come from ChaCha
//! stream `2 * index`, photon counts from stream `2 * index + 1`, so traces
//! can be produced in any order or in parallel with bit-identical results,
//! and skipping the counts of a discarded trace shifts nothing.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::error::config;
use crate::fidelity;
use crate::physics::{p0_y_readout, InteractionParams};
use crate::signal_model::{
    alias_frequency, sample_phase, NoiseMode, PhaseMode, PhotonReadoutModel, TargetSignal, TraceGeometry,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Qdyne,
    ExSitu,
    InSitu,
}

impl Protocol {
    pub fn is_rectified(self) -> bool {
        !matches!(self, Protocol::Qdyne)
    }
}

/// How photon counts of the sequential block are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonModel {
    /// Counts drawn directly from `n (1 + (c/2) cos(2pi f0 t + phi))`.
    #[default]
    Rate,
    /// Electron state projected from `p0_y(alpha, phi_ij)` at every readout,
    /// then counts drawn from the bright/dark means `n (1 +/- c/2)`.
    Projective,
}

/// How the memory outcome depends on the initial phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RectificationModel {
    /// Memory reads `0` with probability `p0_y(alpha_i, phi_i)` (always `0`
    /// when the sensor is in the wrong charge state).
    #[default]
    PhaseResolved,
    /// Ideal decision `cos(phi_i) >= 0` flipped with probability `1 - F`,
    /// independent of the phase. Reproduces `k = (2/pi)(2F - 1)` exactly.
    IdealizedBinary,
}

/// Sequence bookkeeping used only for measurement-time accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceTiming {
    /// Duration of one full sequence (one trace), seconds.
    pub t_seq: f64,
    #[serde(default)]
    pub n_ssr1: Option<u32>,
    #[serde(default)]
    pub n_ssr2: Option<u32>,
}

/// All parameters of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    pub interaction: InteractionParams,
    pub readout: PhotonReadoutModel,
    pub signal: TargetSignal,
    pub geometry: TraceGeometry,
    /// Traces generated, including ones later discarded.
    pub n_traces: usize,
    pub charge_infidelity: f64,
    pub init_success_prob: f64,
    #[serde(default)]
    pub alpha_sigma: f64,
    pub master_seed: u64,
    #[serde(default)]
    pub photon_model: PhotonModel,
    #[serde(default)]
    pub rectification_model: RectificationModel,
    #[serde(default)]
    pub timing: Option<SequenceTiming>,
}

/// Readouts per trace in the reference experiment.
pub const REFERENCE_POINTS_PER_TRACE: usize = 4000;
/// Duration of the sequential block, seconds (110 ms for 4000 readouts).
pub const REFERENCE_SEQUENTIAL_BLOCK: f64 = 0.110;
/// DFT bin the aliased signal is placed on in reference configurations.
pub const REFERENCE_SIGNAL_BIN: usize = 1667;

impl ProtocolConfig {
    /// Parameters of the reference single-NV experiment: `c = 0.30`,
    /// `n = 0.057`, `m = 4000`, `alpha = 0.57 pi`, `F_cs = 0.30`, 25 000 traces
    /// with 60 % initialization success for the rectified protocols. The RF
    /// frequency is placed near 166.7 kHz so its alias lands exactly on
    /// [`REFERENCE_SIGNAL_BIN`].
    pub fn reference(protocol: Protocol) -> Self {
        let m = REFERENCE_POINTS_PER_TRACE;
        let dt = REFERENCE_SEQUENTIAL_BLOCK / m as f64;
        let fs = 1.0 / dt;
        let df = fs / m as f64;
        let frequency = 5.0 * fs - REFERENCE_SIGNAL_BIN as f64 * df;
        let (t_seq, n_ssr1, n_ssr2, init) = match protocol {
            Protocol::Qdyne => (0.110, None, None, 1.0),
            Protocol::ExSitu => (0.137, Some(3000), Some(3000), 0.6),
            Protocol::InSitu => (0.118, Some(3000), None, 0.6),
        };
        Self {
            protocol,
            interaction: InteractionParams::new(0.57 * PI),
            readout: PhotonReadoutModel {
                mean_photons: 0.057,
                contrast: 0.30,
                noise_mode: NoiseMode::Poisson,
            },
            signal: TargetSignal {
                frequency,
                amplitude: 664e-9,
                phase_mode: PhaseMode::RandomUniform,
            },
            geometry: TraceGeometry {
                points_per_trace: m,
                sample_interval: dt,
                pulse_spacing: 3e-6,
                pulse_count: 8,
            },
            n_traces: 25_000,
            charge_infidelity: 0.30,
            init_success_prob: init,
            alpha_sigma: 0.0,
            master_seed: 0x5EED,
            photon_model: PhotonModel::Rate,
            rectification_model: RectificationModel::PhaseResolved,
            timing: Some(SequenceTiming { t_seq, n_ssr1, n_ssr2 }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.interaction.validate()?;
        self.readout.validate()?;
        self.signal.validate()?;
        self.geometry.validate()?;
        if self.n_traces == 0 {
            return Err(config("n_traces", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.charge_infidelity) {
            return Err(config("charge_infidelity", "must lie in [0, 1)"));
        }
        if !(self.init_success_prob > 0.0 && self.init_success_prob <= 1.0) {
            return Err(config("init_success_prob", "must lie in (0, 1]"));
        }
        if !(self.alpha_sigma >= 0.0 && self.alpha_sigma.is_finite()) {
            return Err(config("alpha_sigma", "must be non-negative and finite"));
        }
        if let Some(t) = &self.timing {
            if !(t.t_seq > 0.0 && t.t_seq.is_finite()) {
                return Err(config("timing.t_seq", "must be positive"));
            }
        }
        Ok(())
    }

    /// Aliased signal frequency seen in the sampled trace.
    pub fn detected_frequency(&self) -> f64 {
        alias_frequency(self.signal.frequency, self.geometry.sample_interval)
            .map(|a| a.frequency)
            .unwrap_or(0.0)
    }

    /// Nearest DFT bin of the detected frequency and its offset from it, in bins.
    pub fn signal_bin(&self) -> (usize, f64) {
        let exact = self.detected_frequency() / self.geometry.bin_width();
        let bin = libm::round(exact);
        (bin as usize, exact - bin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryOutcome {
    Zero,
    One,
}

/// Sign applied to a trace by rectification. Misuse error for Qdyne.
pub fn rectification_decision(memory: MemoryOutcome, protocol: Protocol) -> Result<i8> {
    if !protocol.is_rectified() {
        return Err(Error::Misuse("Qdyne traces are not rectified"));
    }
    Ok(match memory {
        MemoryOutcome::Zero => 1,
        MemoryOutcome::One => -1,
    })
}

/// Per-trace random draws that precede the sequential block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub index: u64,
    /// Interaction strength realized for this trace.
    pub alpha: f64,
    pub initial_phase: f64,
    /// Memory state after the rectification block; `Zero` for Qdyne, which has none.
    pub memory_outcome: MemoryOutcome,
    pub charge_ok: bool,
    pub kept: bool,
    pub rectify_sign: i8,
}

impl TraceHeader {
    /// Weight in a coherent time-domain average under `protocol`: the stored
    /// sign for ex situ, 1 otherwise (in situ traces are inverted at readout).
    pub fn coherent_weight(&self, protocol: Protocol) -> f64 {
        match protocol {
            Protocol::ExSitu => self.rectify_sign as f64,
            Protocol::Qdyne | Protocol::InSitu => 1.0,
        }
    }
}

/// One simulated experimental run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonTrace {
    pub index: u64,
    pub protocol: Protocol,
    /// Detected photons per readout (real-valued in Gaussian mode).
    pub counts: Vec<f64>,
    pub initial_phase: f64,
    pub alpha: f64,
    pub memory_outcome: MemoryOutcome,
    pub charge_ok: bool,
    /// `false` for failed memory initialization; excluded from every average.
    pub kept: bool,
    pub rectify_sign: i8,
}

impl PhotonTrace {
    /// Weight in a coherent time-domain average. Ex situ signs are applied
    /// here; in situ traces were already inverted at readout.
    pub fn coherent_weight(&self) -> f64 {
        self.header().coherent_weight(self.protocol)
    }

    /// A kept ex situ trace with the given counts and sign, for pipeline tests.
    pub fn synthetic(counts: Vec<f64>, sign: f64) -> Self {
        Self {
            index: 0,
            protocol: Protocol::ExSitu,
            counts,
            initial_phase: 0.0,
            alpha: 0.0,
            memory_outcome: if sign >= 0.0 { MemoryOutcome::Zero } else { MemoryOutcome::One },
            charge_ok: true,
            kept: true,
            rectify_sign: if sign >= 0.0 { 1 } else { -1 },
        }
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            index: self.index,
            alpha: self.alpha,
            initial_phase: self.initial_phase,
            memory_outcome: self.memory_outcome,
            charge_ok: self.charge_ok,
            kept: self.kept,
            rectify_sign: self.rectify_sign,
        }
    }
}

/// Bookkeeping for a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub traces_generated: usize,
    pub traces_kept: usize,
    /// `t_seq * traces_generated` when sequence timing is configured.
    pub wall_model_time: Option<f64>,
    pub config_echo: ProtocolConfig,
}

/// Deterministic generator: `trace(i)` depends only on the config and `i`.
#[derive(Debug, Clone)]
pub struct TraceGenerator {
    config: ProtocolConfig,
    detected_frequency: f64,
    alpha_dist: Option<Normal<f64>>,
    /// Rectification fidelity when alpha is fixed (idealized model only).
    fixed_fidelity: f64,
}

impl TraceGenerator {
    pub fn new(config: ProtocolConfig) -> Result<Self> {
        config.validate()?;
        let alpha_dist = if config.alpha_sigma > 0.0 {
            Some(
                Normal::new(config.interaction.alpha, config.alpha_sigma)
                    .map_err(|_| crate::error::config("alpha_sigma", "invalid normal distribution"))?,
            )
        } else {
            None
        };
        let fixed_fidelity = match config.rectification_model {
            RectificationModel::IdealizedBinary => {
                fidelity::fidelity_with_charge(config.interaction.alpha, config.charge_infidelity)
            }
            RectificationModel::PhaseResolved => f64::NAN,
        };
        Ok(Self {
            detected_frequency: config.detected_frequency(),
            config,
            alpha_dist,
            fixed_fidelity,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn detected_frequency(&self) -> f64 {
        self.detected_frequency
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.master_seed);
        rng.set_stream(id);
        rng
    }

    /// Draws everything that precedes the sequential block of trace `index`.
    pub fn header(&self, index: u64) -> TraceHeader {
        let cfg = &self.config;
        let mut rng = self.stream(2 * index);
        let u_keep: f64 = rng.random();
        let u_charge: f64 = rng.random();
        let initial_phase = sample_phase(&cfg.signal, &mut rng);
        let u_memory: f64 = rng.random();
        let alpha = match &self.alpha_dist {
            None => cfg.interaction.alpha,
            Some(dist) => loop {
                let a = dist.sample(&mut rng);
                if a >= 0.0 {
                    break a;
                }
            },
        };

        let kept = u_keep < cfg.init_success_prob;
        let charge_ok = u_charge >= cfg.charge_infidelity;
        let memory_outcome = if !cfg.protocol.is_rectified() {
            MemoryOutcome::Zero
        } else {
            let zero = match cfg.rectification_model {
                RectificationModel::PhaseResolved => !charge_ok || u_memory < p0_y_readout(alpha, initial_phase),
                RectificationModel::IdealizedBinary => {
                    let f = if self.alpha_dist.is_some() {
                        fidelity::fidelity_with_charge(alpha, cfg.charge_infidelity)
                    } else {
                        self.fixed_fidelity
                    };
                    let ideal_zero = libm::cos(initial_phase) >= 0.0;
                    if u_memory < f {
                        ideal_zero
                    } else {
                        !ideal_zero
                    }
                }
            };
            if zero {
                MemoryOutcome::Zero
            } else {
                MemoryOutcome::One
            }
        };
        let rectify_sign = rectification_decision(memory_outcome, cfg.protocol).unwrap_or(1);
        TraceHeader {
            index,
            alpha,
            initial_phase,
            memory_outcome,
            charge_ok,
            kept,
            rectify_sign,
        }
    }

    /// Fills `counts` with the sequential-block photon counts for `header`.
    pub fn counts_into(&self, header: &TraceHeader, counts: &mut Vec<f64>) {
        let cfg = &self.config;
        let m = cfg.geometry.points_per_trace;
        let n = cfg.readout.mean_photons;
        let half_c = 0.5 * cfg.readout.contrast;
        let omega = TWO_PI * self.detected_frequency * cfg.geometry.sample_interval;
        let inversion = if cfg.protocol == Protocol::InSitu {
            header.rectify_sign as f64
        } else {
            1.0
        };
        let mut rng = self.stream(2 * header.index + 1);
        counts.clear();
        counts.reserve(m);
        for j in 0..m {
            let phase = omega * j as f64 + header.initial_phase;
            let mean = match cfg.photon_model {
                PhotonModel::Rate => n * (1.0 + inversion * half_c * libm::cos(phase)),
                PhotonModel::Projective => {
                    let alpha = if header.charge_ok { header.alpha } else { 0.0 };
                    let bright = rng.random::<f64>() < p0_y_readout(alpha, phase);
                    let level = if bright { 1.0 } else { -1.0 };
                    n * (1.0 + inversion * level * half_c)
                }
            };
            counts.push(draw_count(cfg.readout.noise_mode, mean, &mut rng));
        }
    }

    pub fn trace(&self, index: u64) -> PhotonTrace {
        let header = self.header(index);
        let mut counts = Vec::new();
        self.counts_into(&header, &mut counts);
        PhotonTrace {
            index,
            protocol: self.config.protocol,
            counts,
            initial_phase: header.initial_phase,
            alpha: header.alpha,
            memory_outcome: header.memory_outcome,
            charge_ok: header.charge_ok,
            kept: header.kept,
            rectify_sign: header.rectify_sign,
        }
    }

    pub fn summary(&self, traces_generated: usize, traces_kept: usize) -> RunSummary {
        RunSummary {
            traces_generated,
            traces_kept,
            wall_model_time: self.config.timing.map(|t| t.t_seq * traces_generated as f64),
            config_echo: self.config.clone(),
        }
    }
}

fn draw_count(mode: NoiseMode, mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    match mode {
        NoiseMode::Poisson => {
            if mean <= 0.0 {
                0.0
            } else {
                // The rate is bounded by n (1 + c/2) > 0, so construction cannot fail.
                Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
            }
        }
        NoiseMode::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            mean + libm::sqrt(mean.max(0.0)) * z
        }
    }
}

/// Lazily generated trace sequence `0..n_traces` of one run.
#[derive(Debug, Clone)]
pub struct TraceStream {
    generator: TraceGenerator,
    next: u64,
    kept: usize,
}

impl TraceStream {
    pub fn generator(&self) -> &TraceGenerator {
        &self.generator
    }

    /// Summary of the traces emitted so far.
    pub fn summary(&self) -> RunSummary {
        self.generator.summary(self.next as usize, self.kept)
    }
}

impl Iterator for TraceStream {
    type Item = PhotonTrace;

    fn next(&mut self) -> Option<PhotonTrace> {
        if self.next as usize >= self.generator.config.n_traces {
            return None;
        }
        let t = self.generator.trace(self.next);
        self.next += 1;
        if t.kept {
            self.kept += 1;
        }
        Some(t)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.generator.config.n_traces - self.next as usize;
        (rest, Some(rest))
    }
}

/// Validates `config` and returns the stream of its `n_traces` traces.
pub fn run_protocol(config: ProtocolConfig) -> Result<TraceStream> {
    Ok(TraceStream {
        generator: TraceGenerator::new(config)?,
        next: 0,
        kept: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(protocol: Protocol) -> ProtocolConfig {
        let mut c = ProtocolConfig::reference(protocol);
        c.geometry.points_per_trace = 200;
        c.n_traces = 50;
        c
    }

    #[test]
    fn rectification_signs() {
        assert_eq!(rectification_decision(MemoryOutcome::Zero, Protocol::ExSitu), Ok(1));
        assert_eq!(rectification_decision(MemoryOutcome::One, Protocol::InSitu), Ok(-1));
        assert!(matches!(
            rectification_decision(MemoryOutcome::Zero, Protocol::Qdyne),
            Err(Error::Misuse(_))
        ));
    }

    #[test]
    fn invalid_config_is_rejected_before_generation() {
        let mut c = small(Protocol::InSitu);
        c.charge_infidelity = 1.0;
        assert!(matches!(run_protocol(c), Err(Error::Config { field: "charge_infidelity", .. })));
        let mut c = small(Protocol::InSitu);
        c.init_success_prob = 0.0;
        assert!(run_protocol(c).is_err());
        let mut c = small(Protocol::InSitu);
        c.n_traces = 0;
        assert!(run_protocol(c).is_err());
        let mut c = small(Protocol::InSitu);
        c.readout.contrast = 1.5;
        assert!(matches!(run_protocol(c), Err(Error::Config { field: "readout.contrast", .. })));
    }

    #[test]
    fn reference_config_lands_on_bin() {
        let c = ProtocolConfig::reference(Protocol::InSitu);
        let (bin, offset) = c.signal_bin();
        assert_eq!(bin, REFERENCE_SIGNAL_BIN);
        assert!(offset.abs() < 1e-6);
        assert!((c.signal.frequency - 166.66e3).abs() < 100.0);
    }

    #[test]
    fn stream_is_deterministic_and_index_addressable() {
        let a: Vec<_> = run_protocol(small(Protocol::ExSitu)).unwrap().collect();
        let b: Vec<_> = run_protocol(small(Protocol::ExSitu)).unwrap().collect();
        assert_eq!(a, b);
        let g = TraceGenerator::new(small(Protocol::ExSitu)).unwrap();
        assert_eq!(g.trace(17), a[17]);
        assert_eq!(a[3].counts.len(), 200);
    }

    #[test]
    fn keep_toggle_does_not_shift_other_draws() {
        let mut c = small(Protocol::InSitu);
        let g1 = TraceGenerator::new(c.clone()).unwrap();
        c.init_success_prob = 1.0;
        let g2 = TraceGenerator::new(c).unwrap();
        for i in 0..20 {
            let (a, b) = (g1.trace(i), g2.trace(i));
            assert_eq!(a.counts, b.counts);
            assert_eq!(a.initial_phase, b.initial_phase);
            assert!(b.kept);
        }
    }

    #[test]
    fn qdyne_signs_are_positive() {
        assert!(run_protocol(small(Protocol::Qdyne)).unwrap().all(|t| t.rectify_sign == 1));
    }

    #[test]
    fn keep_fraction_matches_initialization_probability() {
        let mut c = ProtocolConfig::reference(Protocol::ExSitu);
        let g = TraceGenerator::new(c.clone()).unwrap();
        let kept = (0..c.n_traces as u64).filter(|&i| g.header(i).kept).count();
        let frac = kept as f64 / c.n_traces as f64;
        assert!((frac - 0.60).abs() < 0.01, "{frac}");
        c.n_traces = 10;
        let mut s = run_protocol(c).unwrap();
        s.by_ref().count();
        let sum = s.summary();
        assert_eq!(sum.traces_generated, 10);
        assert!(sum.traces_kept <= 10);
        assert!((sum.wall_model_time.unwrap() - 1.37).abs() < 1e-12);
    }

    #[test]
    fn fixed_phase_memory_probability_at_quarter_turn() {
        // alpha = pi/2, phi = 0, F_cs = 0: p0 = (sin(pi/2) + 1)/2 = 1.
        let mut c = small(Protocol::ExSitu);
        c.interaction.alpha = PI / 2.0;
        c.charge_infidelity = 0.0;
        c.signal.phase_mode = PhaseMode::Fixed(0.0);
        let g = TraceGenerator::new(c).unwrap();
        assert!((0..2000).all(|i| g.header(i).memory_outcome == MemoryOutcome::Zero));
    }

    #[test]
    fn memory_marginal_matches_charge_formula() {
        let mut c = small(Protocol::ExSitu);
        c.init_success_prob = 1.0;
        for &fcs in &[0.0, 0.3] {
            c.charge_infidelity = fcs;
            let g = TraceGenerator::new(c.clone()).unwrap();
            let n = 100_000u64;
            let zeros = (0..n).filter(|&i| g.header(i).memory_outcome == MemoryOutcome::Zero).count();
            let p = zeros as f64 / n as f64;
            let expect = fcs + (1.0 - fcs) / 2.0;
            let sigma = libm::sqrt(expect * (1.0 - expect) / n as f64);
            assert!((p - expect).abs() < 4.0 * sigma, "fcs={fcs}: {p} vs {expect}");
        }
    }

    #[test]
    fn ensemble_alpha_is_non_negative_and_spread() {
        let mut c = small(Protocol::ExSitu);
        c.interaction.alpha = 0.2;
        c.alpha_sigma = 0.3;
        let g = TraceGenerator::new(c).unwrap();
        let alphas: Vec<f64> = (0..5000).map(|i| g.header(i).alpha).collect();
        assert!(alphas.iter().all(|&a| a >= 0.0));
        assert!(alphas.iter().any(|&a| a > 0.6));
    }

    #[test]
    fn qdyne_average_tends_to_flat_line() {
        // Unrectified averaging: max deviation of the mean trace from n shrinks ~ N^-1/2.
        let mut c = small(Protocol::Qdyne);
        c.readout.noise_mode = NoiseMode::Gaussian;
        let g = TraceGenerator::new(c.clone()).unwrap();
        let m = c.geometry.points_per_trace;
        let dev = |n: u64| {
            let mut sum = alloc::vec![0.0; m];
            for i in 0..n {
                for (s, x) in sum.iter_mut().zip(g.trace(i).counts) {
                    *s += x;
                }
            }
            sum.iter().map(|s| libm::fabs(s / n as f64 - 0.057)).fold(0.0, f64::max)
        };
        let (d1, d2) = (dev(100), dev(6400));
        let ratio = d1 / d2;
        assert!(ratio > 4.0 && ratio < 16.0, "ratio {ratio}");
    }

    #[test]
    fn projective_and_rate_modes_share_trace_mean() {
        let mut c = small(Protocol::Qdyne);
        c.n_traces = 400;
        let mean_of = |c: &ProtocolConfig| {
            let g = TraceGenerator::new(c.clone()).unwrap();
            let (mut s, mut n) = (0.0, 0usize);
            for i in 0..c.n_traces as u64 {
                let t = g.trace(i);
                s += t.counts.iter().sum::<f64>();
                n += t.counts.len();
            }
            s / n as f64
        };
        let rate = mean_of(&c);
        c.photon_model = PhotonModel::Projective;
        let proj = mean_of(&c);
        let se = libm::sqrt(0.057 / (400.0 * 200.0));
        assert!((rate - 0.057).abs() < 4.0 * se);
        assert!((proj - 0.057).abs() < 4.0 * se);
    }
}
