use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gffperc_cli::config::ExperimentConfig;
use gffperc_cli::{criteria, experiments, validate};

#[derive(Parser)]
#[command(
    name = "gffperc",
    version,
    about = "Level-set percolation of the Gaussian free field on metric graphs: \
             simulation and estimation at finite volume"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker count override (0 = auto).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the deterministic invariant suites.
    Validate {
        #[arg(long, default_value_t = 20260808)]
        seed: u64,
    },
    /// Re-run (or reuse) the canonical data for one acceptance criterion
    /// and print its verdict.
    Reproduce {
        /// Criterion id; use "list" to enumerate.
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute fit summaries from the raw CSV of an existing run.
    Estimate {
        /// Run directory holding raw.csv and manifest.json.
        #[arg(long)]
        run: PathBuf,
    },
    /// Write the JSON description of the configured window's graph.
    DumpGraph {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, seed, workers, out } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = ExperimentConfig::from_toml(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let art = experiments::run(&cfg, &out)?;
            let summary = experiments::estimate(&art.dir)?;
            println!(
                "run complete: {} rows in {:.1}s -> {}",
                art.rows,
                art.wall_s,
                art.dir.display()
            );
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(true)
        }
        Command::Validate { seed } => {
            let reports = validate::run_all(seed);
            let mut all = true;
            for r in &reports {
                println!("suite {:<28} {} ({})", r.name, if r.pass { "pass" } else { "FAIL" }, r.detail);
                all &= r.pass;
            }
            Ok(all)
        }
        Command::Reproduce { id, out, workers } => {
            if id == "list" {
                for c in criteria::CRITERIA {
                    println!("{c}");
                }
                return Ok(true);
            }
            let root = out.unwrap_or_else(criteria::default_run_dir);
            let verdict = criteria::run_criterion(&id, &root, workers)?;
            verdict.print();
            Ok(verdict.pass)
        }
        Command::Estimate { run } => {
            let summary = experiments::estimate(&run)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(true)
        }
        Command::DumpGraph { config, out } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = ExperimentConfig::from_toml(&text)?;
            let window = experiments::build_window(&cfg)?;
            let dump = gffperc::graph::dump_graph(&window.graph);
            let json = serde_json::to_string(&dump)?;
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(true)
        }
    }
}
