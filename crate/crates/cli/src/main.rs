use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use enztrend_cli::config::{load_value, RunConfig};
use enztrend_cli::{
    certificate_value, equilibrium_value, failed_checks, run_certificate, run_equilibrium,
    run_simulate, run_verify, sweep, CliError,
};

/// Reversible enzyme reaction-diffusion: simulation, decay certificate and
/// numerical verification.
///
/// Log verbosity is read from ENZTREND_LOG (e.g. `info`, `debug`).
#[derive(Parser)]
#[command(name = "enztrend", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the system and write the diagnostics CSV.
    Simulate {
        config: PathBuf,
        /// Also write the effective configuration, defaults included.
        #[arg(long)]
        config_out: Option<PathBuf>,
    },
    /// Print the certificate constants as JSON.
    Certificate {
        config: PathBuf,
        /// Trajectory CSV to check the decay bound against.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Repeat for each value: `key.path=a,b,c`.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Run the sampled inequality checks; exit code 4 if any fails.
    Verify {
        config: PathBuf,
        /// Scale c3 by this factor before the master-inequality checks.
        #[arg(long, hide = true, default_value_t = 1.0)]
        corrupt_c3: f64,
    },
    /// Print the detailed-balance equilibrium as JSON.
    Equilibrium {
        config: PathBuf,
        #[arg(long)]
        sweep: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    let mut emit = |text: &str| {
        stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(&PathBuf::from("<stdout>"), e))
    };
    match cli.command {
        Command::Simulate { config, config_out } => {
            let cfg = RunConfig::load(&config)?;
            if let Some(path) = config_out {
                std::fs::write(&path, cfg.effective_json() + "\n").map_err(|e| CliError::io(&path, e))?;
            }
            if let Some(csv) = run_simulate(&cfg)? {
                emit(&csv)?;
            }
        }
        Command::Certificate {
            config,
            trajectory,
            sweep: spec,
        } => match spec {
            Some(spec) => {
                if trajectory.is_some() {
                    return Err(CliError::Config("--trajectory cannot be combined with --sweep".into()));
                }
                emit(&sweep(&load_value(&config)?, &spec, |c| certificate_value(c, None))?)?;
            }
            None => emit(&run_certificate(&RunConfig::load(&config)?, trajectory.as_deref())?)?,
        },
        Command::Verify { config, corrupt_c3 } => {
            let cfg = RunConfig::load(&config)?;
            let (text, passed) = run_verify(&cfg, corrupt_c3)?;
            emit(&text)?;
            if !passed {
                return Err(CliError::VerifyFailed(failed_checks(&text).join(", ")));
            }
        }
        Command::Equilibrium { config, sweep: spec } => match spec {
            Some(spec) => emit(&sweep(&load_value(&config)?, &spec, equilibrium_value)?)?,
            None => emit(&run_equilibrium(&RunConfig::load(&config)?)?)?,
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENZTREND_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
