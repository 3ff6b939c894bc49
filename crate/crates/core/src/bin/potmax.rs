use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use potmax::harness::{self, catalog_list, emit_plotdata, load_config, RunReport, EXIT_ERROR, PLOT_KINDS};
use potmax::stats::{Parallel, WORKERS_ENV};
use potmax::{Error, Result};

#[derive(Parser)]
#[command(
    name = "potmax",
    version,
    about = "Potential-theory experiments for Schrodinger operators with measure potentials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write report.json plus CSV files.
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all CPUs).
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// List the registered candidate functions.
    Catalog {
        #[arg(long)]
        json: bool,
    },
    /// Emit a flat CSV from a report.
    Plotdata {
        report: PathBuf,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PLOT_KINDS))]
        what: String,
        /// Write to a file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            workers,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let parallel = workers
                .filter(|&n| n > 0)
                .map_or_else(Parallel::from_env, Parallel::new);
            let report = harness::run_to_disk(&cfg, &parallel)?;
            for v in &report.verdicts {
                println!("{v}");
            }
            println!(
                "{:?}: wrote {} (config {})",
                report.status,
                cfg.output_dir.join("report.json").display(),
                &report.config_hash[..12]
            );
            Ok(report.exit_code)
        }
        Command::Catalog { json } => {
            let list = catalog_list();
            if json {
                println!("{}", serde_json::to_string_pretty(&list)?);
            } else {
                for e in list {
                    let sampled = if e.sampled { " [sampled]" } else { "" };
                    println!("{:<22} {}{sampled}\n{:<22} note: {}", e.name, e.formula, "", e.note);
                }
            }
            Ok(0)
        }
        Command::Plotdata { report, what, output } => {
            let text = std::fs::read_to_string(&report)?;
            let rep = RunReport::from_json(&text)?;
            let csv = emit_plotdata(&rep, &what)?;
            match output {
                Some(p) => std::fs::write(p, csv)?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!("valid {} config (hash {})", cfg.kind.label(), cfg.hash());
                Ok(0)
            }
            Err(Error::Config(v)) => {
                eprintln!("invalid config {}:", config.display());
                for m in v {
                    eprintln!("  {m}");
                }
                Ok(EXIT_ERROR)
            }
            Err(e) => Err(e),
        },
    }
}
