mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use log::LevelFilter;
use msw_core::circuits::Topology;
use msw_core::spectra::TouchstoneFormat;

use commands::ConvertArgs;
use config::RunConfig;

/// Characterize MSW resonators: convert, extract metrics, fit circuits,
/// synthesize sweeps and map photon-magnon anti-crossings.
#[derive(Debug, Parser)]
#[command(name = "mswkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    zero_bias: Option<PathBuf>,
    /// JSON sweep manifest listing bias (tesla) and spectrum file.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory (output file for `convert`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// hyg or rhyg.
    #[arg(long, global = true)]
    topology: Option<Topology>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_starts: Option<usize>,
    /// Minimum relative prominence of a |Z| extremum.
    #[arg(long, global = true)]
    prominence: Option<f64>,
    /// Plot magnitudes in dB.
    #[arg(long, global = true)]
    log_mag: bool,
    /// CSV inputs hold impedance rather than reflection.
    #[arg(long, global = true)]
    from_z: bool,
    /// Report progress on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a spectrum between .s1p, .csv and .json.
    Convert {
        /// Convert S11 to Z11 before writing.
        #[arg(long)]
        z: bool,
        /// Touchstone data format for .s1p output: ri, ma or db.
        #[arg(long, default_value = "ri")]
        format: TouchstoneFormat,
    },
    /// Find resonances and tabulate Q, kt² and FOM.
    Extract,
    /// Two-stage circuit fit of a zero-bias trace and a bias sweep.
    Fit,
    /// Generate a synthetic bias sweep and its manifest.
    Synth,
    /// Compute an |Z| heatmap over bias and extract the anti-crossing gap.
    Anticross,
}

fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let paths = [
        (&common.input, &mut cfg.input),
        (&common.zero_bias, &mut cfg.zero_bias),
        (&common.manifest, &mut cfg.manifest),
        (&common.out, &mut cfg.out),
    ];
    for (flag, slot) in paths {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if common.topology.is_some() {
        cfg.topology = common.topology;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.n_starts {
        cfg.n_starts = n;
    }
    if let Some(p) = common.prominence {
        cfg.prominence = p;
    }
    cfg.log_mag |= common.log_mag;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.verbose {
        LevelFilter::Info
    } else {
        LevelFilter::Warn
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    let from_z = cli.common.from_z;
    let out = match cli.command {
        Command::Convert { z, format } => commands::convert(
            &cfg,
            &ConvertArgs {
                to_z: z,
                from_z,
                format,
            },
        )?,
        Command::Extract => commands::extract(&cfg, from_z)?,
        Command::Fit => commands::fit(&cfg, from_z)?,
        Command::Synth => commands::synth(&cfg)?,
        Command::Anticross => commands::anticross(&cfg)?,
    };
    log::info!("wrote {}", out.display());
    Ok(())
}
