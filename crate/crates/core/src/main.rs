use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use core_dse::cli::{cmd_oracle, cmd_report, cmd_run, defaults, format_table, RunSpec};
use core_dse::Error;

#[derive(Parser)]
#[command(name = "core-dse", version, about = "Constraint-aware accelerator design-space exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "CORE_DSE_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(Common),
    /// Enumerate every configuration of a small space.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        limit: Option<u128>,
    },
    /// Compare finished runs.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default config.
    Defaults,
}

fn load(c: &Common) -> Result<RunSpec, Error> {
    let mut spec = RunSpec::load(&c.config)?;
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    if let Some(w) = c.workers {
        spec.workers = w;
    }
    if let Some(o) = &c.out {
        spec.out = o.clone();
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(c) => {
            let s = cmd_run(&load(&c)?)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Oracle { common, limit } => {
            let spec = load(&common)?;
            let limit = limit.unwrap_or(spec.oracle.limit);
            let s = cmd_oracle(&spec, limit)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Report { dirs, out } => {
            let (rows, warnings) = cmd_report(&dirs, out.as_deref())?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", format_table(&rows));
        }
        Command::Defaults => println!("{}", defaults()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::TooLarge { .. } | Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
