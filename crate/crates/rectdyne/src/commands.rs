//! The CLI subcommands as library functions. Each writes its outputs and a
//! `manifest.json` into the output directory and returns the manifest.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rectdyne_core::analysis::{
    alpha_from_contrast, comparison_curves, fit_dd_lineshape, fit_power_law, fit_power_law_pinned, predict_snr,
    synthetic_dd_sweep, LineshapeFit, ScalingFit, SnrPrediction,
};
use rectdyne_core::fidelity::{self, FidelityReport};
use rectdyne_core::protocols::{Protocol, RunSummary};
use rectdyne_core::spectral::SnrEstimate;
use serde::{Deserialize, Serialize};

use crate::config::{
    self, CompareConfig, DdSynthConfig, FidelityConfig, SimulationConfig, TraceOutput,
};
use crate::engine::{Engine, Stop};
use crate::error::{CliError, CliResult};
use crate::formats::{protocol_name, Column, OutputDir, Table, TableFormat, TraceFileWriter};
use crate::manifest::{unix_now, RunManifest, MANIFEST_FILE};
use crate::pipeline::{run_pipeline, Pipeline, PipelineResult, TraceSink};

/// Options shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOptions {
    pub out_dir: PathBuf,
    pub format: TableFormat,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

impl GlobalOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            format: TableFormat::Csv,
            threads: None,
            seed: None,
        }
    }
}

/// What the config hash covers: command, output format and effective config.
#[derive(Serialize)]
struct Hashed<'a, T: Serialize> {
    format: &'a str,
    config: &'a T,
}

struct Run {
    out: OutputDir,
    manifest: RunManifest,
    format: TableFormat,
}

impl Run {
    fn start<T: Serialize>(command: &str, opts: &GlobalOptions, effective: &T, seed: Option<u64>) -> CliResult<Self> {
        let started = unix_now();
        let hash = config::config_hash(
            command,
            &Hashed {
                format: opts.format.extension(),
                config: effective,
            },
        );
        Ok(Self {
            out: OutputDir::create(&opts.out_dir)?,
            manifest: RunManifest::new(command, hash, seed, started),
            format: opts.format,
        })
    }

    fn finish(mut self) -> CliResult<RunManifest> {
        self.manifest.outputs = self.out.written().to_vec();
        self.manifest.finished_unix_s = unix_now();
        let m = self.manifest.clone();
        self.out.write_json(MANIFEST_FILE, &m)?;
        Ok(m)
    }
}

fn load_simulation(path: Option<&Path>, seed: Option<u64>) -> CliResult<SimulationConfig> {
    let path = path.ok_or_else(|| CliError::config("--config is required"))?;
    let mut cfg: SimulationConfig = config::load(path)?;
    if let Some(s) = seed {
        cfg.protocol.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Analytic expectations for a run with `n` kept traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theory {
    /// Rectification fidelity including charge state and alpha spread.
    pub fidelity: f64,
    /// `(2/pi)(2F - 1)`; 1 for Qdyne.
    pub reduction_factor: f64,
    /// `(1 - F_cs) J1(alpha)`, the amplitude factor of the phase-resolved memory model.
    pub phase_resolved_factor: f64,
    pub snr: SnrPrediction,
    pub snr_phase_resolved: SnrPrediction,
    /// `n c / 2 * k` (coherent) or 0.
    pub amplitude: f64,
}

pub fn theory(cfg: &SimulationConfig, n: f64) -> Theory {
    let p = &cfg.protocol;
    let coherent = Pipeline::for_protocol(p.protocol) == Pipeline::Coherent;
    let f = fidelity::fidelity_alpha_ensemble(p.interaction.alpha, p.alpha_sigma, p.charge_infidelity);
    let k = fidelity::reduction_factor(f);
    let kp = fidelity::phase_resolved_factor(p.interaction.alpha, p.charge_infidelity);
    let (nb, m, c) = (p.readout.mean_photons, p.geometry.points_per_trace, p.readout.contrast);
    Theory {
        fidelity: f,
        reduction_factor: if coherent { k } else { 1.0 },
        phase_resolved_factor: kp,
        snr: predict_snr(coherent, nb, m, c, k, n),
        snr_phase_resolved: predict_snr(coherent, nb, m, c, kp, n),
        amplitude: if coherent { 0.5 * nb * c * k } else { 0.0 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub protocol: Protocol,
    pub pipeline: Pipeline,
    pub detected_frequency_hz: f64,
    pub expected_bin: usize,
    pub snr: SnrEstimate,
    pub amplitude: Option<f64>,
    pub theory: Theory,
    pub summary: RunSummary,
}

fn psd_table(r: &PipelineResult, protocol: Protocol) -> Table {
    let s = &r.spectrum;
    Table::default()
        .meta("protocol", protocol_name(protocol))
        .meta("mode", format!("{:?}", s.mode))
        .meta("n_averaged", s.n_averaged)
        .meta("trace_len", s.trace_len)
        .column("bin", Column::U64((0..s.len() as u64).collect()))
        .column("frequency_hz", Column::F64(s.bin_frequencies.clone()))
        .column("power", Column::F64(s.power.clone()))
}

/// Generates `n_traces` traces, averages them with the protocol's pipeline
/// and writes the PSD, averaged trace (rectified protocols), SNR report and
/// optionally the traces.
pub fn cmd_simulate(opts: &GlobalOptions, config_path: Option<&Path>) -> CliResult<RunManifest> {
    let cfg = load_simulation(config_path, opts.seed)?;
    let engine = Engine::new(opts.threads)?;
    let mut run = Run::start("simulate", opts, &cfg, Some(cfg.protocol.master_seed))?;
    let p = &cfg.protocol;
    let mut sink = match cfg.traces {
        TraceOutput::None => TraceSink::None,
        TraceOutput::Binary => TraceSink::Binary(TraceFileWriter::create(&run.out.path("traces.rdt"), p)?),
        TraceOutput::Csv => TraceSink::csv(p.geometry.points_per_trace),
    };
    let r = run_pipeline(&engine, &cfg, Stop::Generated(p.n_traces), &[], &mut sink)?;
    match sink {
        TraceSink::None => {}
        TraceSink::Binary(w) => {
            w.finish()?;
            run.out.record("traces.rdt");
        }
        TraceSink::Csv(text) => run.out.write_text("traces.csv", &text)?,
    }
    run.out.write_table("psd", &psd_table(&r, p.protocol), run.format)?;
    if let Some(avg) = &r.averaged_trace {
        let dt = p.geometry.sample_interval;
        let t = Table::default()
            .meta("protocol", protocol_name(p.protocol))
            .meta("n_averaged", r.summary.traces_kept)
            .meta("baseline_subtracted", p.readout.mean_photons)
            .column("index", Column::U64((0..avg.len() as u64).collect()))
            .column("time_s", Column::F64((0..avg.len()).map(|j| j as f64 * dt).collect()))
            .column("signal", Column::F64(avg.clone()));
        run.out.write_table("averaged_trace", &t, run.format)?;
    }
    let report = SimulateReport {
        protocol: p.protocol,
        pipeline: r.pipeline,
        detected_frequency_hz: p.detected_frequency(),
        expected_bin: r.expected_bin,
        snr: r.snr,
        amplitude: r.amplitude,
        theory: theory(&cfg, r.summary.traces_kept as f64),
        summary: r.summary.clone(),
    };
    run.out.write_json("snr.json", &report)?;
    run.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub protocol: Protocol,
    pub pipeline: Pipeline,
    /// Free fit of SNR(N); `None` when some SNR is not positive (e.g. pure noise).
    pub snr_fit: Option<ScalingFit>,
    /// Fit with the exponent pinned at 0.5 (incoherent) or 1 (coherent).
    pub snr_fit_pinned: Option<ScalingFit>,
    /// Why the SNR fits are missing.
    pub snr_fit_error: Option<String>,
    /// Free fit of the PSD baseline RMS.
    pub noise_floor_fit: ScalingFit,
    /// Leading-order slope of the analytic SNR, `SNR ~ slope * N^exponent`.
    pub theory_slope: f64,
    pub theory_slope_phase_resolved: f64,
    pub theory: Theory,
    pub summary: RunSummary,
}

/// Evaluates SNR at the prefix sizes of `scaling.n_grid` over one pool of
/// kept traces and fits power laws to SNR and baseline RMS. The pool is
/// generated until `max(n_grid)` traces are kept; `n_traces` is not used.
pub fn cmd_scaling(opts: &GlobalOptions, config_path: Option<&Path>, n_grid: Option<Vec<usize>>) -> CliResult<RunManifest> {
    let mut cfg = load_simulation(config_path, opts.seed)?;
    if let Some(g) = n_grid {
        cfg.scaling.n_grid = g;
        cfg.scaling.validate()?;
    }
    let engine = Engine::new(opts.threads)?;
    let mut run = Run::start("scaling", opts, &cfg, Some(cfg.protocol.master_seed))?;
    let report = scaling_report(&engine, &cfg, |t| run.out.write_table("scaling", t, run.format))?;
    run.out.write_json("scaling_fit.json", &report)?;
    run.finish()
}

/// Runs the scaling pipeline, hands the per-N table to `emit`, then fits.
pub fn scaling_report(
    engine: &Engine,
    cfg: &SimulationConfig,
    mut emit: impl FnMut(&Table) -> CliResult<()>,
) -> CliResult<ScalingReport> {
    let grid = &cfg.scaling.n_grid;
    let n_max = *grid.last().expect("validated non-empty");
    let cap = cfg.scaling.max_generated.unwrap_or(n_max.saturating_mul(1000));
    let r = run_pipeline(engine, cfg, Stop::Kept { n: n_max, cap }, grid, &mut TraceSink::None)?;
    let snaps = &r.snapshots;
    let th: Vec<Theory> = snaps.iter().map(|s| theory(cfg, s.n_kept as f64)).collect();
    let t_seq = cfg.protocol.timing.map(|t| t.t_seq);
    let mut table = Table::default()
        .meta("protocol", protocol_name(cfg.protocol.protocol))
        .meta("pipeline", format!("{:?}", r.pipeline))
        .meta("expected_bin", r.expected_bin)
        .column("n_kept", Column::U64(snaps.iter().map(|s| s.n_kept as u64).collect()))
        .column("n_generated", Column::U64(snaps.iter().map(|s| s.n_generated as u64).collect()))
        .column("snr", Column::F64(snaps.iter().map(|s| s.snr.snr).collect()))
        .column("peak_power", Column::F64(snaps.iter().map(|s| s.snr.peak_power).collect()))
        .column("baseline_mean", Column::F64(snaps.iter().map(|s| s.snr.baseline_mean).collect()))
        .column("baseline_rms", Column::F64(snaps.iter().map(|s| s.snr.baseline_rms).collect()))
        .column("theory_snr", Column::F64(th.iter().map(|t| t.snr.exact).collect()))
        .column("theory_snr_phase_resolved", Column::F64(th.iter().map(|t| t.snr_phase_resolved.exact).collect()));
    if r.pipeline == Pipeline::Coherent {
        table = table.column("amplitude", Column::F64(snaps.iter().map(|s| s.amplitude.unwrap_or(f64::NAN)).collect()));
    }
    if let Some(t) = t_seq {
        table = table.column(
            "model_time_s",
            Column::F64(snaps.iter().map(|s| t * s.n_generated as f64).collect()),
        );
    }
    emit(&table)?;

    let snr_points: Vec<(f64, f64)> = snaps.iter().map(|s| (s.n_kept as f64, s.snr.snr)).collect();
    let rms_points: Vec<(f64, f64)> = snaps.iter().map(|s| (s.n_kept as f64, s.snr.baseline_rms)).collect();
    let exponent = match r.pipeline {
        Pipeline::Coherent => 1.0,
        Pipeline::Incoherent => 0.5,
    };
    let t1 = theory(cfg, 1.0);
    let fits = fit_power_law(&snr_points).and_then(|f| Ok((f, fit_power_law_pinned(&snr_points, exponent)?)));
    let (snr_fit, snr_fit_pinned, snr_fit_error) = match fits {
        Ok((f, p)) => (Some(f), Some(p), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(ScalingReport {
        protocol: cfg.protocol.protocol,
        pipeline: r.pipeline,
        snr_fit,
        snr_fit_pinned,
        snr_fit_error,
        noise_floor_fit: fit_power_law(&rms_points)?,
        theory_slope: t1.snr.slope,
        theory_slope_phase_resolved: t1.snr_phase_resolved.slope,
        theory: t1,
        summary: r.summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityOutput {
    pub report: FidelityReport,
    pub optimal_alpha: f64,
    pub optimal_fidelity_shot_noise: f64,
}

/// Overrides applied on top of the fidelity config (or its defaults).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FidelityArgs {
    pub alpha: Option<f64>,
    pub charge_infidelity: Option<f64>,
    pub alpha_sigma: Option<f64>,
    pub sweep: bool,
}

pub fn cmd_fidelity(opts: &GlobalOptions, config_path: Option<&Path>, args: FidelityArgs) -> CliResult<RunManifest> {
    let mut cfg: FidelityConfig = match config_path {
        Some(p) => config::load(p)?,
        None => FidelityConfig::default(),
    };
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.charge_infidelity = args.charge_infidelity.unwrap_or(cfg.charge_infidelity);
    cfg.alpha_sigma = args.alpha_sigma.unwrap_or(cfg.alpha_sigma);
    cfg.validate()?;
    let engine = Engine::new(opts.threads)?;
    #[derive(Serialize)]
    struct Effective<'a> {
        config: &'a FidelityConfig,
        sweep: bool,
    }
    let mut run = Run::start("fidelity", opts, &Effective { config: &cfg, sweep: args.sweep }, None)?;
    let opt = fidelity::optimal_alpha();
    let out = FidelityOutput {
        report: FidelityReport::new(cfg.alpha, cfg.charge_infidelity, cfg.alpha_sigma),
        optimal_alpha: opt,
        optimal_fidelity_shot_noise: fidelity::fidelity_shot_noise(opt),
    };
    run.out.write_json("fidelity.json", &out)?;
    if args.sweep {
        let s = &cfg.sweep;
        let mut combos = Vec::new();
        for &f in &s.charge_infidelities {
            for &sig in &s.alpha_sigmas {
                for i in 0..s.alpha_points {
                    let a = s.alpha_min + (s.alpha_max - s.alpha_min) * i as f64 / (s.alpha_points - 1) as f64;
                    combos.push((a, f, sig));
                }
            }
        }
        let rows = engine.map_ordered(combos.len(), |i| {
            let (a, f, sig) = combos[i];
            FidelityReport::new(a, f, sig)
        });
        let col = |g: fn(&FidelityReport) -> f64| Column::F64(rows.iter().map(g).collect());
        let t = Table::default()
            .meta("integration_window", "phi in [-pi/2, pi/2]")
            .column("alpha", col(|r| r.alpha))
            .column("alpha_over_pi", col(|r| r.alpha / PI))
            .column("charge_infidelity", col(|r| r.charge_infidelity))
            .column("alpha_sigma", col(|r| r.alpha_sigma))
            .column("f_sn", col(|r| r.f_sn))
            .column("f_total", col(|r| r.f_total))
            .column("binary_factor", col(|r| r.binary_factor))
            .column("reduction_factor", col(|r| r.reduction_factor))
            .column("phase_resolved_factor", col(|r| r.phase_resolved_factor))
            .column("psd_signal_loss", col(|r| r.psd_signal_loss))
            .column("psd_signal_loss_total", col(|r| r.psd_signal_loss_total));
        run.out.write_table("fidelity_sweep", &t, run.format)?;
    }
    run.finish()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DdFitArgs {
    pub pulse_count: Option<u32>,
    pub frequency_guess: Option<f64>,
    pub alpha_guess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdFitReport {
    pub fit: LineshapeFit,
    pub alpha_sigma: f64,
    pub target_frequency_sigma: f64,
    /// Alpha from inverting the largest sweep value as the resonance contrast.
    pub alpha_from_peak_contrast: Option<f64>,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    pub run: u64,
    pub fit: Option<DdFitReport>,
    pub error: Option<String>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub config: DdSynthConfig,
    pub successes: usize,
    pub runs: usize,
    pub success_fraction: f64,
    pub results: Vec<SynthRun>,
}

fn fit_report(sweep: &[(f64, f64)], pulse_count: u32, f_guess: f64, a_guess: f64) -> CliResult<DdFitReport> {
    let fit = fit_dd_lineshape(sweep, pulse_count, f_guess, a_guess)?;
    let peak = sweep.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(DdFitReport {
        alpha_sigma: fit.covariance[0][0].max(0.0).sqrt(),
        target_frequency_sigma: fit.covariance[1][1].max(0.0).sqrt(),
        alpha_from_peak_contrast: alpha_from_contrast(peak).ok(),
        n_points: sweep.len(),
        fit,
    })
}

/// Synthetic closed-loop recovery study over `cfg.runs` seeded sweeps.
pub fn dd_synth_study(engine: &Engine, cfg: &DdSynthConfig) -> CliResult<SynthReport> {
    cfg.validate()?;
    let tau0 = 0.5 / cfg.target_frequency;
    let sweep = |run: u64| {
        synthetic_dd_sweep(
            cfg.alpha,
            cfg.target_frequency,
            cfg.pulse_count,
            cfg.tau_min_rel * tau0,
            cfg.tau_max_rel * tau0,
            cfg.points,
            cfg.noise_sigma,
            cfg.seed,
            run,
        )
    };
    sweep(0).map_err(|e| CliError::config(e.to_string()))?;
    let results = engine.map_ordered(cfg.runs, |i| {
        let run = i as u64;
        let res = sweep(run)
            .map_err(CliError::from)
            .and_then(|s| fit_report(&s, cfg.pulse_count, cfg.frequency_guess, cfg.alpha_guess));
        match res {
            Ok(r) => SynthRun {
                run,
                success: (r.fit.alpha / cfg.alpha - 1.0).abs() <= cfg.success_tolerance,
                fit: Some(r),
                error: None,
            },
            Err(e) => SynthRun {
                run,
                fit: None,
                error: Some(e.to_string()),
                success: false,
            },
        }
    });
    let successes = results.iter().filter(|r| r.success).count();
    Ok(SynthReport {
        config: cfg.clone(),
        successes,
        runs: cfg.runs,
        success_fraction: successes as f64 / cfg.runs as f64,
        results,
    })
}

/// Fits a measured sweep (`sweep_csv`) or runs the synthetic study
/// described by the config (defaults when no config is given).
pub fn cmd_ddfit(
    opts: &GlobalOptions,
    config_path: Option<&Path>,
    sweep_csv: Option<&Path>,
    args: DdFitArgs,
) -> CliResult<RunManifest> {
    let engine = Engine::new(opts.threads)?;
    if let Some(path) = sweep_csv {
        if config_path.is_some() {
            return Err(CliError::config("give either --sweep-csv or --config, not both"));
        }
        let sweep = crate::formats::read_sweep_csv(path)?;
        let pulse_count = args.pulse_count.unwrap_or(8);
        let f_guess = args.frequency_guess.unwrap_or(0.5 / sweep[sweep.len() / 2].0);
        let a_guess = args.alpha_guess.unwrap_or(0.5 * PI);
        #[derive(Serialize)]
        struct Effective<'a> {
            sweep: &'a [(f64, f64)],
            pulse_count: u32,
            frequency_guess: f64,
            alpha_guess: f64,
        }
        let eff = Effective {
            sweep: &sweep,
            pulse_count,
            frequency_guess: f_guess,
            alpha_guess: a_guess,
        };
        let mut run = Run::start("ddfit", opts, &eff, None)?;
        let report = fit_report(&sweep, pulse_count, f_guess, a_guess)?;
        run.out.write_json("ddfit.json", &report)?;
        return run.finish();
    }
    let mut cfg: DdSynthConfig = match config_path {
        Some(p) => config::load(p)?,
        None => DdSynthConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    cfg.pulse_count = args.pulse_count.unwrap_or(cfg.pulse_count);
    cfg.frequency_guess = args.frequency_guess.unwrap_or(cfg.frequency_guess);
    cfg.alpha_guess = args.alpha_guess.unwrap_or(cfg.alpha_guess);
    cfg.validate()?;
    let mut run = Run::start("ddfit", opts, &cfg, Some(cfg.seed))?;
    let report = dd_synth_study(&engine, &cfg)?;
    let tau0 = 0.5 / cfg.target_frequency;
    let first = synthetic_dd_sweep(
        cfg.alpha,
        cfg.target_frequency,
        cfg.pulse_count,
        cfg.tau_min_rel * tau0,
        cfg.tau_max_rel * tau0,
        cfg.points,
        cfg.noise_sigma,
        cfg.seed,
        0,
    )?;
    let t = Table::default()
        .meta("run", 0)
        .column("tau_s", Column::F64(first.iter().map(|p| p.0).collect()))
        .column("signal", Column::F64(first.iter().map(|p| p.1).collect()));
    run.out.write_table("synthetic_sweep", &t, run.format)?;
    run.out.write_json("ddfit.json", &report)?;
    run.finish()
}

/// Writes one relative-SNR table per protocol label.
pub fn cmd_compare(
    opts: &GlobalOptions,
    config_path: Option<&Path>,
    n_nv_grid: Option<Vec<f64>>,
    rounded_penalty: bool,
) -> CliResult<RunManifest> {
    let mut cfg: CompareConfig = match config_path {
        Some(p) => config::load(p)?,
        None => CompareConfig::default(),
    };
    if let Some(g) = n_nv_grid {
        cfg.n_nv_grid = g;
    }
    cfg.params.rounded_penalty |= rounded_penalty;
    let curves = comparison_curves(&cfg.n_nv_grid, &cfg.params).map_err(|e| CliError::config(e.to_string()))?;
    let mut run = Run::start("compare", opts, &cfg, None)?;
    for c in &curves {
        let t = Table::default()
            .meta("protocol_label", c.protocol_label.as_str())
            .meta("reference", "single NV without rectification")
            .meta("correlation_penalty", cfg.params.correlation_penalty())
            .column("n_nv", Column::F64(c.n_nv.clone()))
            .column("relative_snr", Column::F64(c.relative_snr.clone()));
        run.out.write_table(&format!("compare_{}", c.protocol_label.as_str()), &t, run.format)?;
    }
    run.finish()
}

/// Reference-experiment simulation config for `protocol`.
pub fn preset(protocol: Protocol) -> SimulationConfig {
    SimulationConfig::new(rectdyne_core::protocols::ProtocolConfig::reference(protocol))
}
