//! End-to-end averaging pipelines over an engine pass: generation, optional
//! trace output, coherent or incoherent averaging, PSD and SNR, with SNR
//! snapshots at prefix sizes.

use rectdyne_core::protocols::{Protocol, RunSummary, TraceGenerator, TraceHeader};
use rectdyne_core::spectral::{
    estimate_snr, one_sided_power, oscillation_amplitude, CoherentAccumulator, FftPlan, IncoherentAccumulator,
    PsdSpectrum, SnrEstimate,
};
use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::engine::{Engine, Progress, Stop};
use crate::error::CliResult;
use crate::formats::{trace_csv_header, trace_csv_row, TraceFileWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Time-domain average of (sign-corrected) traces, then one PSD.
    Coherent,
    /// PSD of every trace, then averaged.
    Incoherent,
}

impl Pipeline {
    /// Qdyne traces have random phases and are averaged in power; rectified
    /// traces are averaged in time.
    pub fn for_protocol(p: Protocol) -> Self {
        if p.is_rectified() {
            Pipeline::Coherent
        } else {
            Pipeline::Incoherent
        }
    }
}

/// SNR after the first `n_kept` kept traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub n_kept: usize,
    pub n_generated: usize,
    pub snr: SnrEstimate,
    /// Oscillation amplitude of the averaged trace (coherent pipeline only).
    pub amplitude: Option<f64>,
}

/// Where generated traces are written, if anywhere.
pub enum TraceSink {
    None,
    Binary(TraceFileWriter),
    /// CSV text built in memory (small runs only).
    Csv(String),
}

impl TraceSink {
    fn active(&self) -> bool {
        !matches!(self, TraceSink::None)
    }

    fn write(&mut self, header: &TraceHeader, counts: &[f64]) -> CliResult<()> {
        match self {
            TraceSink::None => Ok(()),
            TraceSink::Binary(w) => w.write(header, counts),
            TraceSink::Csv(s) => {
                trace_csv_row(s, header, counts);
                Ok(())
            }
        }
    }

    pub fn csv(points: usize) -> Self {
        TraceSink::Csv(trace_csv_header(points))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub pipeline: Pipeline,
    pub spectrum: PsdSpectrum,
    pub snr: SnrEstimate,
    pub expected_bin: usize,
    /// Averaged baseline-subtracted trace (coherent pipeline only).
    pub averaged_trace: Option<Vec<f64>>,
    pub amplitude: Option<f64>,
    pub snapshots: Vec<Snapshot>,
    pub summary: RunSummary,
}

enum Acc {
    Coherent(CoherentAccumulator),
    Incoherent(IncoherentAccumulator),
}

struct Item {
    counts: Option<Vec<f64>>,
    power: Option<Vec<f64>>,
}

impl Acc {
    fn evaluate(&self, plan: &FftPlan, bin: usize, halfwidth: usize) -> CliResult<(PsdSpectrum, SnrEstimate, Option<Vec<f64>>)> {
        let (spec, avg) = match self {
            Acc::Coherent(a) => (a.spectrum_with(plan)?, Some(a.averaged_trace()?)),
            Acc::Incoherent(a) => (a.spectrum()?, None),
        };
        let snr = estimate_snr(&spec, Some(bin), halfwidth)?;
        Ok((spec, snr, avg))
    }
}

/// Runs the pipeline matching the configured protocol.
///
/// `snapshot_at` must be ascending; a snapshot is taken when the kept count
/// first reaches each entry.
pub fn run_pipeline(
    engine: &Engine,
    cfg: &SimulationConfig,
    stop: Stop,
    snapshot_at: &[usize],
    sink: &mut TraceSink,
) -> CliResult<PipelineResult> {
    let pc = &cfg.protocol;
    let gen = TraceGenerator::new(pc.clone())?;
    let m = pc.geometry.points_per_trace;
    let dt = pc.geometry.sample_interval;
    let subtract_mean = cfg.analysis.subtract_mean;
    let halfwidth = cfg.analysis.exclusion_halfwidth;
    let expected_bin = cfg.analysis.expected_bin.unwrap_or_else(|| pc.signal_bin().0);
    let pipeline = Pipeline::for_protocol(pc.protocol);
    let plan = FftPlan::new(m);
    let mut acc = match pipeline {
        Pipeline::Coherent => Acc::Coherent(CoherentAccumulator::new(m, pc.readout.mean_photons, dt, subtract_mean)),
        Pipeline::Incoherent => Acc::Incoherent(IncoherentAccumulator::new(m, dt, subtract_mean)),
    };
    let keep_counts = pipeline == Pipeline::Coherent || sink.active();
    let mut snapshots = Vec::new();
    let mut snap_iter = snapshot_at.iter().copied().peekable();
    let mut progress = Progress { generated: 0, kept: 0 };

    let work = |h: &TraceHeader, counts: &[f64]| Item {
        counts: keep_counts.then(|| counts.to_vec()),
        power: (pipeline == Pipeline::Incoherent && h.kept).then(|| one_sided_power(&plan, counts, subtract_mean)),
    };
    let protocol = pc.protocol;
    engine.run(&gen, stop, sink.active(), work, |h, item| {
        progress.generated += 1;
        if let Some(item) = &item {
            if let Some(c) = &item.counts {
                sink.write(h, c)?;
            }
        }
        if !h.kept {
            return Ok(());
        }
        progress.kept += 1;
        let item = item.expect("kept traces always carry counts");
        match &mut acc {
            Acc::Coherent(a) => a.add_weighted(item.counts.as_deref().expect("coherent keeps counts"), h.coherent_weight(protocol)),
            Acc::Incoherent(a) => a.add_power(item.power.as_deref().expect("incoherent computes power")),
        }
        while snap_iter.peek().is_some_and(|&n| n <= progress.kept) {
            let n = snap_iter.next().unwrap();
            if n == progress.kept {
                let (_, snr, avg) = acc.evaluate(&plan, expected_bin, halfwidth)?;
                snapshots.push(Snapshot {
                    n_kept: n,
                    n_generated: progress.generated,
                    snr,
                    amplitude: avg.map(|t| oscillation_amplitude(&t, expected_bin)),
                });
            }
        }
        Ok(())
    })?;

    let (spectrum, snr, averaged_trace) = acc.evaluate(&plan, expected_bin, halfwidth)?;
    let amplitude = averaged_trace.as_ref().map(|t| oscillation_amplitude(t, expected_bin));
    Ok(PipelineResult {
        pipeline,
        spectrum,
        snr,
        expected_bin,
        averaged_trace,
        amplitude,
        snapshots,
        summary: gen.summary(progress.generated, progress.kept),
    })
}
