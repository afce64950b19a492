use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rectdyne::commands::{self, DdFitArgs, FidelityArgs, GlobalOptions};
use rectdyne::formats::TableFormat;
use rectdyne::CliError;
use rectdyne_core::protocols::Protocol;

/// Monte Carlo simulator and analysis toolkit for rectified quantum
/// heterodyne (Qdyne) detection.
#[derive(Debug, Parser)]
#[command(name = "rectdyne", version, about)]
struct Cli {
    /// JSON configuration document for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, env = "RECTDYNE_OUT_DIR", default_value = "rectdyne-out")]
    out_dir: PathBuf,

    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,

    /// Worker threads (default: one per core). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetProtocol {
    Qdyne,
    ExSitu,
    InSitu,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate traces, average them and write PSD and SNR.
    Simulate,
    /// SNR versus number of averaged traces, with power-law fits.
    Scaling {
        /// Comma-separated ascending kept-trace counts (overrides the config).
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
    },
    /// Rectification fidelity report and optional sweep table.
    Fidelity {
        /// Interaction strength in radians.
        #[arg(long, conflicts_with = "alpha_over_pi")]
        alpha: Option<f64>,
        /// Interaction strength in units of pi.
        #[arg(long)]
        alpha_over_pi: Option<f64>,
        #[arg(long)]
        charge_infidelity: Option<f64>,
        /// Standard deviation of the alpha ensemble, radians.
        #[arg(long)]
        alpha_sigma: Option<f64>,
        /// Also write the alpha x F_cs x sigma sweep table.
        #[arg(long)]
        sweep: bool,
    },
    /// Fit the DD lineshape to a measured sweep, or run a synthetic recovery study.
    Ddfit {
        /// Two-column CSV of pulse spacing (s) and signal.
        #[arg(long)]
        sweep_csv: Option<PathBuf>,
        #[arg(long)]
        pulse_count: Option<u32>,
        #[arg(long)]
        frequency_guess: Option<f64>,
        #[arg(long)]
        alpha_guess: Option<f64>,
    },
    /// Relative SNR of single-NV and ensemble protocols versus NV count.
    Compare {
        /// Comma-separated NV counts (overrides the config).
        #[arg(long, value_delimiter = ',')]
        n_nv_grid: Option<Vec<f64>>,
        /// Use the rounded correlation penalty m/2 instead of (m+1)/2.
        #[arg(long)]
        rounded_penalty: bool,
    },
    /// Print the reference-experiment simulation config as JSON.
    Preset {
        #[arg(value_enum)]
        protocol: PresetProtocol,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let opts = GlobalOptions {
        out_dir: cli.out_dir,
        format: cli.format,
        threads: cli.threads,
        seed: cli.seed,
    };
    let config = cli.config.as_deref();
    let manifest = match cli.command {
        Command::Simulate => commands::cmd_simulate(&opts, config)?,
        Command::Scaling { n_grid } => commands::cmd_scaling(&opts, config, n_grid)?,
        Command::Fidelity {
            alpha,
            alpha_over_pi,
            charge_infidelity,
            alpha_sigma,
            sweep,
        } => commands::cmd_fidelity(
            &opts,
            config,
            FidelityArgs {
                alpha: alpha.or(alpha_over_pi.map(|a| a * std::f64::consts::PI)),
                charge_infidelity,
                alpha_sigma,
                sweep,
            },
        )?,
        Command::Ddfit {
            sweep_csv,
            pulse_count,
            frequency_guess,
            alpha_guess,
        } => commands::cmd_ddfit(
            &opts,
            config,
            sweep_csv.as_deref(),
            DdFitArgs {
                pulse_count,
                frequency_guess,
                alpha_guess,
            },
        )?,
        Command::Compare {
            n_nv_grid,
            rounded_penalty,
        } => commands::cmd_compare(&opts, config, n_nv_grid, rounded_penalty)?,
        Command::Preset { protocol } => {
            let p = match protocol {
                PresetProtocol::Qdyne => Protocol::Qdyne,
                PresetProtocol::ExSitu => Protocol::ExSitu,
                PresetProtocol::InSitu => Protocol::InSitu,
            };
            let text = serde_json::to_string_pretty(&commands::preset(p)).expect("configs serialize");
            println!("{text}");
            return Ok(());
        }
    };
    for f in &manifest.outputs {
        println!("{}", opts.out_dir.join(f).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rectdyne: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
