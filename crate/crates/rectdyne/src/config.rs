//! JSON configuration documents. Unknown keys are rejected everywhere.

use std::path::Path;

use rectdyne_core::analysis::ComparisonParams;
use rectdyne_core::protocols::ProtocolConfig;
use rectdyne_core::spectral::DEFAULT_EXCLUSION_HALFWIDTH;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// SNR estimation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSettings {
    /// Bins on each side of the peak left out of the baseline.
    pub exclusion_halfwidth: usize,
    /// Remove the trace mean before the DFT (affects only the DC bin).
    pub subtract_mean: bool,
    /// Peak bin; `null` uses the bin nearest the aliased signal frequency.
    pub expected_bin: Option<usize>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            exclusion_halfwidth: DEFAULT_EXCLUSION_HALFWIDTH,
            subtract_mean: false,
            expected_bin: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOutput {
    #[default]
    None,
    Binary,
    Csv,
}

/// Largest run for which traces may be written as CSV.
pub const MAX_CSV_TRACES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSettings {
    /// Ascending kept-trace counts at which the SNR is evaluated.
    pub n_grid: Vec<usize>,
    /// Generation stops with an error if this many traces fail to yield
    /// `max(n_grid)` kept ones.
    pub max_generated: Option<usize>,
}

impl Default for ScalingSettings {
    fn default() -> Self {
        Self {
            n_grid: vec![100, 300, 1000, 3000, 10_000],
            max_generated: None,
        }
    }
}

impl ScalingSettings {
    pub fn validate(&self) -> CliResult<()> {
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return Err(CliError::config("scaling.n_grid: must be non-empty and positive"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::config("scaling.n_grid: must be strictly ascending"));
        }
        Ok(())
    }
}

/// Document read by `simulate` and `scaling`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default)]
    pub traces: TraceOutput,
    #[serde(default)]
    pub scaling: ScalingSettings,
}

impl SimulationConfig {
    pub fn new(protocol: ProtocolConfig) -> Self {
        Self {
            protocol,
            analysis: AnalysisSettings::default(),
            traces: TraceOutput::None,
            scaling: ScalingSettings::default(),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.protocol.validate()?;
        self.scaling.validate()?;
        if self.traces == TraceOutput::Csv && self.protocol.n_traces > MAX_CSV_TRACES {
            return Err(CliError::config(format!(
                "traces: csv output is limited to {MAX_CSV_TRACES} traces, use binary"
            )));
        }
        Ok(())
    }
}

/// Document read by `fidelity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FidelityConfig {
    pub alpha: f64,
    pub charge_infidelity: f64,
    pub alpha_sigma: f64,
    pub sweep: FidelitySweep,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.63 * std::f64::consts::PI,
            charge_infidelity: 0.30,
            alpha_sigma: 0.0,
            sweep: FidelitySweep::default(),
        }
    }
}

/// Grid of the sweep table: every alpha against every `(F_cs, sigma)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FidelitySweep {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_points: usize,
    pub charge_infidelities: Vec<f64>,
    pub alpha_sigmas: Vec<f64>,
}

impl Default for FidelitySweep {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            alpha_min: 0.0,
            alpha_max: 2.0 * pi,
            alpha_points: 201,
            charge_infidelities: vec![0.0, 0.15, 0.30],
            alpha_sigmas: vec![0.0, 0.1 * pi, 0.2 * pi],
        }
    }
}

impl FidelityConfig {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |f: &str, why: &str| Err(CliError::config(format!("{f}: {why}")));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha", "must be non-negative");
        }
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !prob(self.charge_infidelity) || !self.sweep.charge_infidelities.iter().all(|&v| prob(v)) {
            return bad("charge_infidelity", "must lie in [0, 1]");
        }
        let sig = |v: f64| v >= 0.0 && v.is_finite();
        if !sig(self.alpha_sigma) || !self.sweep.alpha_sigmas.iter().all(|&v| sig(v)) {
            return bad("alpha_sigma", "must be non-negative");
        }
        let s = &self.sweep;
        if s.alpha_points < 2 || !(s.alpha_min >= 0.0 && s.alpha_max > s.alpha_min && s.alpha_max.is_finite()) {
            return bad("sweep", "need alpha_points >= 2 and 0 <= alpha_min < alpha_max");
        }
        Ok(())
    }
}

/// Document read by `ddfit` in synthetic mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdSynthConfig {
    pub alpha: f64,
    pub target_frequency: f64,
    pub pulse_count: u32,
    /// Sweep limits in units of the resonant spacing `1 / (2 f_t)`.
    pub tau_min_rel: f64,
    pub tau_max_rel: f64,
    pub points: usize,
    pub noise_sigma: f64,
    pub runs: usize,
    pub seed: u64,
    pub alpha_guess: f64,
    pub frequency_guess: f64,
    /// Relative alpha error counted as a successful recovery.
    pub success_tolerance: f64,
}

impl Default for DdSynthConfig {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            alpha: 0.57 * pi,
            target_frequency: 166_666.0,
            pulse_count: 8,
            tau_min_rel: 0.8,
            tau_max_rel: 1.25,
            points: 101,
            noise_sigma: 0.01,
            runs: 100,
            seed: 0x5EED,
            alpha_guess: 0.5 * pi,
            frequency_guess: 160_000.0,
            success_tolerance: 0.03,
        }
    }
}

impl DdSynthConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.runs == 0 {
            return Err(CliError::config("runs: must be at least 1"));
        }
        if self.points < 5 {
            return Err(CliError::config("points: need at least 5"));
        }
        if !(self.target_frequency > 0.0 && self.frequency_guess > 0.0) {
            return Err(CliError::config("target_frequency/frequency_guess: must be positive"));
        }
        if self.pulse_count == 0 {
            return Err(CliError::config("pulse_count: must be positive"));
        }
        Ok(())
    }
}

/// Document read by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub params: ComparisonParams,
    pub n_nv_grid: Vec<f64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            params: ComparisonParams::default(),
            // Ten points per decade from 1 to 10^6.
            n_nv_grid: (0..=60).map(|i| 10f64.powf(i as f64 / 10.0)).collect(),
        }
    }
}

/// Parses a JSON document, reporting the offending field on failure.
pub fn parse<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))
}

pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Canonical JSON (keys sorted, shortest round-trip floats).
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json's Value map is ordered by key, which canonicalizes nesting.
    let v = serde_json::to_value(value).expect("config types serialize infallibly");
    serde_json::to_string(&v).expect("values serialize infallibly")
}

/// SHA-256 of `command` and the canonical config, hex encoded.
pub fn config_hash<T: Serialize>(command: &str, value: &T) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0u8]);
    h.update(canonical_json(value).as_bytes());
    hex::encode(h.finalize())
}
