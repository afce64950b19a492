//! Coherent and incoherent averaging, one-sided |DFT|^2 power spectra and
//! NMR-convention SNR estimation.
//!
//! Spectra use the unnormalized DFT, so a cosine of amplitude `A` sitting
//! exactly on bin `k` (0 < k < m/2) has power `(m A / 2)^2` in that bin, and
//! white noise of variance `s^2` has mean bin power `m s^2`.

mod fft;

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use fft::{FftPlan, MAX_DIRECT_RADIX};

use crate::error::invalid;
use crate::protocols::PhotonTrace;
use crate::{Error, Result};

/// Default half-width (bins) of the window around the peak excluded from the baseline.
pub const DEFAULT_EXCLUSION_HALFWIDTH: usize = 3;

/// Reported SNR when the baseline has zero spread but the peak stands above it.
pub const SNR_CAP: f64 = 1.0e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    SingleTrace,
    CoherentTimeAverage,
    IncoherentPowerAverage,
}

/// One-sided power spectrum, bins `0..=m/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdSpectrum {
    pub bin_frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub n_averaged: usize,
    pub mode: AveragingMode,
    /// Length of the underlying time trace.
    pub trace_len: usize,
}

impl PsdSpectrum {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }
}

fn bin_frequencies(m: usize, sample_interval: f64) -> Vec<f64> {
    let df = 1.0 / (m as f64 * sample_interval);
    (0..=m / 2).map(|k| k as f64 * df).collect()
}

/// Full two-sided complex DFT of a real trace.
pub fn dft(plan: &FftPlan, trace: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = trace.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan.process(&mut buf);
    buf
}

/// One-sided `|DFT|^2` of `trace`, optionally after removing its mean.
pub fn one_sided_power(plan: &FftPlan, trace: &[f64], subtract_mean: bool) -> Vec<f64> {
    let m = trace.len();
    let mean = if subtract_mean {
        trace.iter().sum::<f64>() / m as f64
    } else {
        0.0
    };
    let mut buf: Vec<Complex64> = trace.iter().map(|&x| Complex64::new(x - mean, 0.0)).collect();
    plan.process(&mut buf);
    buf.truncate(m / 2 + 1);
    buf.into_iter().map(|c| c.norm_sqr()).collect()
}

/// Raw one-sided `|DFT|^2` of a single trace (no mean removal).
pub fn dft_power(trace: &[f64], sample_interval: f64) -> Result<PsdSpectrum> {
    let m = trace.len();
    if m < 2 {
        return Err(invalid("trace", "need at least 2 samples"));
    }
    if sample_interval.is_nan() || sample_interval <= 0.0 {
        return Err(invalid("sample_interval", "must be positive"));
    }
    Ok(PsdSpectrum {
        bin_frequencies: bin_frequencies(m, sample_interval),
        power: one_sided_power(&FftPlan::new(m), trace, false),
        n_averaged: 1,
        mode: AveragingMode::SingleTrace,
        trace_len: m,
    })
}

/// Amplitude of the oscillation at DFT bin `bin`: `2 |X_k| / m`.
pub fn oscillation_amplitude(trace: &[f64], bin: usize) -> f64 {
    let m = trace.len() as f64;
    let w = -2.0 * core::f64::consts::PI * bin as f64 / m;
    let (mut re, mut im) = (0.0, 0.0);
    for (j, &x) in trace.iter().enumerate() {
        let a = w * j as f64;
        re += x * libm::cos(a);
        im += x * libm::sin(a);
    }
    2.0 * libm::sqrt(re * re + im * im) / m
}

/// Running time-domain sum of `weight * (counts - baseline)`.
#[derive(Debug, Clone)]
pub struct CoherentAccumulator {
    sum: Vec<f64>,
    count: usize,
    baseline: f64,
    sample_interval: f64,
    subtract_mean: bool,
}

impl CoherentAccumulator {
    /// `baseline` is the mean photon number subtracted from every readout.
    pub fn new(trace_len: usize, baseline: f64, sample_interval: f64, subtract_mean: bool) -> Self {
        Self {
            sum: vec![0.0; trace_len],
            count: 0,
            baseline,
            sample_interval,
            subtract_mean,
        }
    }

    pub fn add_weighted(&mut self, counts: &[f64], weight: f64) {
        assert_eq!(counts.len(), self.sum.len(), "trace length mismatch");
        for (s, &c) in self.sum.iter_mut().zip(counts) {
            *s += weight * (c - self.baseline);
        }
        self.count += 1;
    }

    /// Adds a kept trace with its rectification weight; discarded traces are ignored.
    pub fn add(&mut self, trace: &PhotonTrace) {
        if trace.kept {
            self.add_weighted(&trace.counts, trace.coherent_weight());
        }
    }

    /// Combines two accumulators; equals accumulating the concatenated inputs.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.sum.len(), other.sum.len(), "trace length mismatch");
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// The averaged, baseline-subtracted trace.
    pub fn averaged_trace(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::EmptyInput);
        }
        let n = self.count as f64;
        Ok(self.sum.iter().map(|s| s / n).collect())
    }

    pub fn spectrum_with(&self, plan: &FftPlan) -> Result<PsdSpectrum> {
        let avg = self.averaged_trace()?;
        Ok(PsdSpectrum {
            bin_frequencies: bin_frequencies(avg.len(), self.sample_interval),
            power: one_sided_power(plan, &avg, self.subtract_mean),
            n_averaged: self.count,
            mode: AveragingMode::CoherentTimeAverage,
            trace_len: avg.len(),
        })
    }

    pub fn spectrum(&self) -> Result<PsdSpectrum> {
        self.spectrum_with(&FftPlan::new(self.sum.len()))
    }
}

/// Running sum of per-trace one-sided power spectra.
#[derive(Debug, Clone)]
pub struct IncoherentAccumulator {
    power_sum: Vec<f64>,
    count: usize,
    trace_len: usize,
    sample_interval: f64,
    subtract_mean: bool,
    plan: FftPlan,
}

impl IncoherentAccumulator {
    pub fn new(trace_len: usize, sample_interval: f64, subtract_mean: bool) -> Self {
        Self {
            power_sum: vec![0.0; trace_len / 2 + 1],
            count: 0,
            trace_len,
            sample_interval,
            subtract_mean,
            plan: FftPlan::new(trace_len),
        }
    }

    pub fn subtract_mean(&self) -> bool {
        self.subtract_mean
    }

    /// Adds a precomputed one-sided power spectrum (see [`one_sided_power`]).
    pub fn add_power(&mut self, power: &[f64]) {
        assert_eq!(power.len(), self.power_sum.len(), "spectrum length mismatch");
        for (s, p) in self.power_sum.iter_mut().zip(power) {
            *s += p;
        }
        self.count += 1;
    }

    pub fn add_counts(&mut self, counts: &[f64]) {
        assert_eq!(counts.len(), self.trace_len, "trace length mismatch");
        let p = one_sided_power(&self.plan, counts, self.subtract_mean);
        self.add_power(&p);
    }

    pub fn add(&mut self, trace: &PhotonTrace) {
        if trace.kept {
            self.add_counts(&trace.counts);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.power_sum.len(), other.power_sum.len(), "spectrum length mismatch");
        for (a, b) in self.power_sum.iter_mut().zip(&other.power_sum) {
            *a += b;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn spectrum(&self) -> Result<PsdSpectrum> {
        if self.count == 0 {
            return Err(Error::EmptyInput);
        }
        let n = self.count as f64;
        Ok(PsdSpectrum {
            bin_frequencies: bin_frequencies(self.trace_len, self.sample_interval),
            power: self.power_sum.iter().map(|p| p / n).collect(),
            n_averaged: self.count,
            mode: AveragingMode::IncoherentPowerAverage,
            trace_len: self.trace_len,
        })
    }
}

/// Coherent (time-domain) average of the kept traces, then `|DFT|^2`.
pub fn average_coherent<'a>(
    traces: impl IntoIterator<Item = &'a PhotonTrace>,
    mean_photons: f64,
    sample_interval: f64,
    subtract_mean: bool,
) -> Result<PsdSpectrum> {
    let mut acc: Option<CoherentAccumulator> = None;
    for t in traces {
        acc.get_or_insert_with(|| CoherentAccumulator::new(t.counts.len(), mean_photons, sample_interval, subtract_mean))
            .add(t);
    }
    acc.ok_or(Error::EmptyInput)?.spectrum()
}

/// Incoherent average: mean of the per-trace power spectra of the kept traces.
pub fn average_incoherent<'a>(
    traces: impl IntoIterator<Item = &'a PhotonTrace>,
    sample_interval: f64,
    subtract_mean: bool,
) -> Result<PsdSpectrum> {
    let mut acc: Option<IncoherentAccumulator> = None;
    for t in traces {
        acc.get_or_insert_with(|| IncoherentAccumulator::new(t.counts.len(), sample_interval, subtract_mean))
            .add(t);
    }
    acc.ok_or(Error::EmptyInput)?.spectrum()
}

/// Peak power against the noise floor, NMR convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub peak_bin: usize,
    pub peak_power: f64,
    pub baseline_mean: f64,
    pub baseline_rms: f64,
    /// `(peak_power - baseline_mean) / baseline_rms`.
    pub snr: f64,
    /// Set when the baseline spread is zero and `snr` holds [`SNR_CAP`].
    pub saturated: bool,
}

/// SNR at `expected_bin` (or the largest non-DC bin) with the baseline taken
/// over all non-DC bins outside `[peak - halfwidth, peak + halfwidth]`.
pub fn estimate_snr(spectrum: &PsdSpectrum, expected_bin: Option<usize>, exclusion_halfwidth: usize) -> Result<SnrEstimate> {
    let p = &spectrum.power;
    if p.len() < 2 {
        return Err(invalid("spectrum", "need at least one non-DC bin"));
    }
    let peak_bin = match expected_bin {
        Some(b) if b >= p.len() => return Err(invalid("expected_bin", "outside spectrum")),
        Some(b) => b,
        None => (1..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(1),
    };
    let lo = peak_bin.saturating_sub(exclusion_halfwidth);
    let hi = peak_bin + exclusion_halfwidth;
    let baseline = (1..p.len()).filter(|&k| k < lo || k > hi).map(|k| p[k]);
    let (mut n, mut sum) = (0usize, 0.0);
    for v in baseline.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return Err(invalid("exclusion_halfwidth", "exclusion window covers every bin"));
    }
    let mean = sum / n as f64;
    let var = baseline.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let rms = libm::sqrt(var);
    let excess = p[peak_bin] - mean;
    let (snr, saturated) = if rms > 0.0 {
        (excess / rms, false)
    } else if excess == 0.0 {
        (0.0, false)
    } else {
        (SNR_CAP.copysign(excess), true)
    };
    Ok(SnrEstimate {
        peak_bin,
        peak_power: p[peak_bin],
        baseline_mean: mean,
        baseline_rms: rms,
        snr,
        saturated,
    })
}
