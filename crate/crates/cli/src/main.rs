use std::path::PathBuf;
use std::process::ExitCode;

use bifilter_cli::oracle::format_report;
use bifilter_cli::preset::{preset, PRESETS};
use bifilter_cli::{load_config, oracle_check, run_experiment, CliError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bifilter", version, about = "Bi-directional graph filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Base seed; run r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write sweep.dat for gnuplot.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Compare every solver against its independent oracle.
    OracleCheck,
    /// Print a named preset as config lines; lists presets without --name.
    Preset {
        #[arg(long)]
        name: Option<String>,
    },
    /// Explain how to produce dataset directories from the Planetoid files.
    ConvertHelp,
}

const CONVERT_HELP: &str = "\
Dataset directories are plain text (UTF-8, LF, 0-indexed nodes):

  meta.txt      n=<int>, d=<int>, classes=<int> on three lines
  edges.txt     one undirected edge \"u v\" per line, u < v, no duplicates
  features.txt  n lines of d space-separated reals
  labels.txt    n lines, class index or -1 for unlabeled
  masks.txt     n lines, one of train|val|test|none

The Planetoid citation files (ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index})
are converted by a separate tool that is not part of this binary. It should
reorder the test indices, fill isolated test rows of Citeseer with zeros, drop
self-loops and duplicate edges, and emit the standard masks (140/500/1000 for
Cora). Point `dataset.path` at the resulting directory.
";

fn threads() -> Result<Option<usize>, CliError> {
    match std::env::var("BIFILTER_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("BIFILTER_THREADS={v:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            gnuplot,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            cfg.gnuplot |= gnuplot;
            let report = run_experiment(&cfg, threads()?)?;
            for row in &report.summary {
                let r = &row.report;
                println!(
                    "{:>8} {:.2} ± {:.2} ({} runs)",
                    row.sweep_value.map_or("none".into(), |v| v.to_string()),
                    100.0 * r.mean,
                    100.0 * r.std,
                    r.runs
                );
            }
            println!("wrote {}", cfg.output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck => {
            let checks = oracle_check();
            print!("{}", format_report(&checks));
            Ok(if checks.iter().all(|c| c.passed()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Preset { name: Some(name) } => {
            let p = preset(&name)?;
            print!("# {}\n{}", p.note, p.fragment());
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name: None } => {
            for p in PRESETS {
                println!("{:<22} p={:<5} lambda={:<4} {}", p.name, p.p, p.lambda, p.task);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ConvertHelp => {
            print!("{CONVERT_HELP}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
