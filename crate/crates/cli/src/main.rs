use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sixmode_cli::{commands, load_config, preset, reproduce, CliError, McOptions, Options, Report, PRESETS};

#[derive(Parser)]
#[command(name = "sixmode", version, about = "Thresholds, spectra and VLF criteria for cascaded four-wave mixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Unstable {
    /// Evaluate unstable operating points as a formal continuation.
    #[arg(long)]
    allow_unstable: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the two pump thresholds and the regime.
    Thresholds { config: PathBuf },
    /// Print every analytic steady state with its stability.
    SteadyState { config: PathBuf },
    /// Output quadrature covariance versus frequency.
    Spectrum {
        config: PathBuf,
        #[command(flatten)]
        unstable: Unstable,
    },
    /// Optimized VLF inequalities versus frequency.
    VlfSweep {
        config: PathBuf,
        #[command(flatten)]
        unstable: Unstable,
        /// Switch the quantum noise off (debugging; every value becomes 4).
        #[arg(long)]
        zero_diffusion: bool,
    },
    /// Minimum over frequency of the VLF inequalities versus pump amplitude.
    PumpSweep {
        config: PathBuf,
        #[command(flatten)]
        unstable: Unstable,
    },
    /// Compare the Lyapunov covariance with the integrated spectrum and a Monte-Carlo run.
    McValidate {
        config: PathBuf,
        #[arg(long, default_value_t = McOptions::default().paths)]
        paths: usize,
        #[arg(long, default_value_t = McOptions::default().steps)]
        steps: usize,
    },
    /// Regenerate the data behind one figure (fig2 .. fig9).
    Reproduce {
        figure: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<Report, CliError> {
    let opts = |u: Unstable, zero_diffusion| Options { allow_unstable: u.allow_unstable, zero_diffusion };
    match cli.command {
        Command::Thresholds { config } => commands::thresholds(&load_config(&config)?),
        Command::SteadyState { config } => commands::steady_state(&load_config(&config)?),
        Command::Spectrum { config, unstable } => commands::spectrum(&load_config(&config)?, opts(unstable, false)),
        Command::VlfSweep { config, unstable, zero_diffusion } => {
            commands::vlf_sweep(&load_config(&config)?, opts(unstable, zero_diffusion)).map(|(r, _)| r)
        }
        Command::PumpSweep { config, unstable } => commands::pump_sweep(&load_config(&config)?, opts(unstable, false)),
        Command::McValidate { config, paths, steps } => {
            commands::mc_validate(&load_config(&config)?, McOptions { paths, steps }).map(|(r, _)| r)
        }
        Command::Reproduce { figure, out_dir } => {
            let p = preset(&figure).ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
                CliError::Config(sixmode_cli::ConfigError {
                    line: None,
                    message: format!("unknown figure `{figure}` (available: {})", names.join(", ")),
                })
            })?;
            reproduce(p, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli).and_then(|report| {
        report.write()?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(report.stdout.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
