//! Command line front end: parse flags, load and override the
//! configuration, dispatch to one study, and write its report.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use strip_bubbles::cli;
use strip_bubbles::config::RunConfig;
use strip_bubbles::report::Report;
use strip_bubbles::{Error, Result};

#[derive(Parser)]
#[command(
    name = "strip-bubbles",
    version,
    about = "Concentrating solutions of a coupled critical system on a periodic strip",
    after_help = "Run with no --config to use the built-in defaults; \
                  `strip-bubbles config` prints a commented example file."
)]
struct Args {
    /// Configuration file (flat `key = value` lines; defaults if omitted)
    #[arg(long, global = true, value_name = "path")]
    config: Option<PathBuf>,
    /// Override mc.seed
    #[arg(long, global = true, value_name = "u64")]
    seed: Option<u64>,
    /// Override output.dir
    #[arg(long, global = true, value_name = "dir")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "n")]
    threads: Option<usize>,
    /// Override quad.tol_fields
    #[arg(long, global = true, value_name = "float")]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate every assembled constant with its identity-check residual
    Constants,
    /// Probe the periodic kernel for symmetry and periodicity
    Green,
    /// Check the projected pair against the bubble array and its monopole model
    Project,
    /// Measure the weighted residual norm across the scale grid
    Residual,
    /// Solve the concentration balance at the configured period
    Reduce,
    /// Map the concentration scale across the period grid
    Sweep,
    /// Print a commented example configuration file
    Config,
}

fn load_config(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.mc_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(tol) = args.tol {
        cfg.tol_fields = tol;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &Args) -> Result<()> {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("cannot size the thread pool: {e}")))?;
    }
    if matches!(args.command, Command::Config) {
        print!("{}", RunConfig::example_text());
        return Ok(());
    }
    let cfg = load_config(args)?;
    let report: Report = match args.command {
        Command::Constants => cli::cmd_constants(&cfg)?,
        Command::Green => cli::cmd_green(&cfg)?,
        Command::Project => cli::cmd_project(&cfg)?,
        Command::Residual => cli::cmd_residual(&cfg)?,
        Command::Reduce => cli::cmd_reduce(&cfg)?,
        Command::Sweep => cli::cmd_sweep(&cfg)?,
        Command::Config => unreachable!("handled above"),
    };
    let path = report.write(&cfg.out_dir)?;
    println!("wrote {} ({} rows)", path.display(), report.rows());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
