use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hpbsas::io::{cmd_calibrate, cmd_estimate, cmd_generate_dataset, cmd_simulate, cmd_transitions, Context, ErrorRecord, RunConfig};
use hpbsas::{atomic::AtomicConstants, Error, Result};

#[derive(Parser)]
#[command(name = "hpbsas", version, about = "Rb-87 D2 saturated absorption in strong magnetic fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overrides `output_dir`.
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
    /// RNG seed, overrides `seed`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one spectrum per configured field.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Build a frequency axis from a raw trace and extract peaks.
    Calibrate {
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the field to a peak list with Monte Carlo errors.
    Estimate {
        peaks: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write a seeded synthetic dataset and its manifest.
    GenerateDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Print the transition table at a field as CSV.
    Transitions {
        /// Field in tesla.
        #[arg(long = "B", value_name = "TESLA", allow_negative_numbers = true)]
        field_t: f64,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Err(Error::Config("--config is required for this subcommand".into())),
    }
}

fn setup(common: &Common) -> Result<()> {
    if let Some(n) = common.jobs {
        if n == 0 {
            return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("--jobs: {e}")))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    let progress = |msg: &str| eprintln!("{msg}");
    let quiet = |_: &str| {};
    let context = |common: &Common| Context {
        output_dir: common.output.clone(),
        seed: common.seed,
        progress: if common.verbose { &progress } else { &quiet },
    };
    match command {
        Command::Simulate { common } => {
            setup(&common)?;
            let config = load_config(&common)?;
            for path in cmd_simulate(&config, &context(&common))? {
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Calibrate { trace, common } => {
            setup(&common)?;
            let config = load_config(&common)?;
            let out = cmd_calibrate(&trace, &config, &context(&common))?;
            let d = &out.diagnostics;
            eprintln!(
                "{} markers, axis {:.1} to {:.1} MHz, suggested sigma_calib {:.3} MHz ({:?})",
                d.marker_count, d.axis_min_mhz, d.axis_max_mhz, d.suggested_sigma_calib_mhz, d.sigma_calib_source
            );
            for p in [&out.spectrum, &out.peaks, &out.report] {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Estimate { peaks, common } => {
            setup(&common)?;
            let config = load_config(&common)?;
            let out = cmd_estimate(&peaks, &config, &context(&common))?;
            for p in [&out.report, &out.trials] {
                eprintln!("wrote {}", p.display());
            }
            println!("{}", out.summary);
        }
        Command::GenerateDataset { common } => {
            setup(&common)?;
            let config = load_config(&common)?;
            let (path, manifest) = cmd_generate_dataset(&config, &context(&common))?;
            eprintln!("wrote {} spectra and {}", manifest.entries.len(), path.display());
        }
        Command::Transitions { field_t, common } => {
            setup(&common)?;
            let constants = match &common.config {
                Some(p) => RunConfig::load(p)?.constants()?,
                None => AtomicConstants::rb87(),
            };
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            cmd_transitions(field_t, &constants, &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn report(error: &Error) -> ExitCode {
    let record = ErrorRecord::from(error);
    let line = serde_json::to_string(&record).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", record.error));
    eprintln!("{line}");
    ExitCode::from(record.exit_code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&Error::InvalidArgument(e.render().to_string().trim_end().to_string())),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
