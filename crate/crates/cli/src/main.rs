use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mspec_cli::config::{Pipeline, RunConfig};
use mspec_cli::{compare_spectra, run, CliError, EXIT_CHECK_FAILED, EXIT_ERROR};
use mspec_core::spectral::{SpectralData, SpectralSource};
use mspec_core::stieltjes::Precision;

#[derive(Parser)]
#[command(name = "mspec", version, about = "Exit-time moments, Dirichlet spectra and heat content")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline and write its artifacts and manifest.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pipeline: Option<Pipeline>,
        /// Exit non-zero when a check fails.
        #[arg(long)]
        strict: bool,
        /// Overrides mc.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        precision: Option<Precision>,
    },
    /// Compare two `lambda,multiplicity,a2` tables.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Exit non-zero on unmatched entries or weight deviations above tol.
        #[arg(long)]
        strict: bool,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default config with every key.
    Defaults,
}

fn read_spectrum(path: &PathBuf) -> Result<SpectralData, CliError> {
    let file = fs::File::open(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    SpectralData::read_csv(file, SpectralSource::Numeric, None).map_err(|source| CliError::Input {
        path: path.clone(),
        source,
    })
}

fn main_inner(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            pipeline,
            strict,
            seed,
            precision,
        } => {
            let mut cfg = match &config {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    RunConfig::parse(&text)?
                }
                None => RunConfig::default(),
            };
            if let Some(out) = out {
                cfg.out = out;
            }
            if let Some(p) = pipeline {
                cfg.pipeline = p;
            }
            if let Some(s) = seed {
                cfg.mc_seed = s;
            }
            if let Some(p) = precision {
                cfg.precision = p;
            }
            cfg.strict |= strict;
            let outcome = run(&cfg, config.as_deref())?;
            println!("{} pipeline wrote {} files to {}", cfg.pipeline, outcome.files.len(), outcome.out.display());
            for msg in &outcome.failed_checks {
                println!("check failed: {msg}");
            }
            Ok(if cfg.strict && !outcome.failed_checks.is_empty() {
                EXIT_CHECK_FAILED
            } else {
                0
            })
        }
        Command::Compare {
            a,
            b,
            tol,
            strict,
            out,
        } => {
            let report = compare_spectra(&read_spectrum(&a)?, &read_spectrum(&b)?, tol);
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            println!("{text}");
            if let Some(path) = out {
                fs::write(&path, format!("{text}\n")).map_err(|source| CliError::Io { path, source })?;
            }
            Ok(if strict && !report.passes() { EXIT_CHECK_FAILED } else { 0 })
        }
        Command::Defaults => {
            print!("{}", RunConfig::default().emit());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
