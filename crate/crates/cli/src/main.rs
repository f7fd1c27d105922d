//! `swstab` experiment runner.
//!
//! Exit codes: 0 pass, 1 analysis failure, 2 input error, 3 blow-up.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swstab::io::write_json;
use swstab::rng::derive_seed;
use swstab::Error;

use commands::{Report, Status};
use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "swstab", version, about = "Simulate and certify switched nonlinear time-varying systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Master seed; overrides the manifest's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the manifest's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate trajectories and write trajectory and signal CSVs.
    Simulate,
    /// Run the sandwich, decrease and integral-bound checks.
    Certify,
    /// Estimate the stability envelope and classify it.
    Envelope,
    /// Search the reduced limiting system for zeroing-output solutions.
    Falsify,
    /// Reproduce the claimed verdict of a registry example.
    Reproduce {
        /// Registry id: motivating, example1, example4 or inverter.
        id: String,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_BLOWUP: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BlowUp { .. } | Error::NonFinite { .. } | Error::Chattering { .. } => EXIT_BLOWUP,
        Error::Revalidation(_) => EXIT_FAIL,
        _ => EXIT_INPUT,
    }
}

/// Sub-seeds of the analysis stages, derived from the master seed.
const ENVELOPE_STREAM: u64 = 3;
const FALSIFIER_STREAM: u64 = 4;

fn load(cli: &Cli) -> swstab::Result<Manifest> {
    let mut m = match (&cli.command, &cli.manifest) {
        (_, Some(path)) => Manifest::load(path)?,
        (Command::Reproduce { id }, None) => commands::reproduce_manifest(id, cli.seed.unwrap_or(0)),
        (_, None) => return Err(Error::Input("--manifest is required".into())),
    };
    if let Some(seed) = cli.seed {
        m.seed = seed;
    }
    if let Command::Reproduce { id } = &cli.command {
        if &m.system.id != id {
            return Err(Error::Input(format!("manifest is for {:?}, not {id:?}", m.system.id)));
        }
    }
    Ok(m)
}

fn out_dir(cli: &Cli, m: &Manifest) -> PathBuf {
    let base = cli.out.clone().or_else(|| m.output_dir.clone()).unwrap_or_else(|| PathBuf::from("swstab-out"));
    match &cli.command {
        Command::Reproduce { id } if cli.out.is_none() && m.output_dir.is_none() => base.join(id),
        _ => base,
    }
}

fn execute(cli: &Cli) -> swstab::Result<Report> {
    let mut m = load(cli)?;
    let entry = m.resolve()?;
    m.analysis.envelope.seed = derive_seed(m.seed, ENVELOPE_STREAM);
    if let Some(f) = m.analysis.falsifier.as_mut() {
        f.seed = derive_seed(m.seed, FALSIFIER_STREAM);
    }
    let out = out_dir(cli, &m);
    m.output_dir = Some(out.clone());
    commands::ensure_dir(&out)?;
    write_json(&out.join("manifest.json"), &m)?;
    let report = match &cli.command {
        Command::Simulate => commands::simulate_cmd(&m, &entry, &out)?,
        Command::Certify => commands::certify(&m, &entry, &out)?.0,
        Command::Envelope => commands::envelope(&m, &entry, &out)?,
        Command::Falsify => commands::falsify(&m, &entry, &out)?.0,
        Command::Reproduce { .. } => commands::reproduce(&m, &entry, &out)?,
    };
    write_summary(&out, &report)?;
    Ok(report)
}

fn write_summary(out: &Path, r: &Report) -> swstab::Result<()> {
    let status = match r.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
    };
    std::fs::write(out.join("summary.txt"), format!("{}{status}\n", r.summary))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    match execute(&cli) {
        Ok(r) => {
            print!("{}", r.summary);
            match r.status {
                Status::Pass => {
                    println!("PASS");
                    ExitCode::SUCCESS
                }
                Status::Fail => {
                    println!("FAIL");
                    ExitCode::from(EXIT_FAIL)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
