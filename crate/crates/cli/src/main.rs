//! `orbitfix` batch front end.
//!
//! Every subcommand loads a config (defaults when `--config` is absent),
//! runs one experiment and writes CSVs plus a manifest to `--out`. Written
//! paths go to stdout, progress to stderr. On failure the process exits
//! with status 2 and prints `error[<category>]: <message>` to stderr.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use orbitfix::experiment::{compare_systems, raw_measurements, run_experiment, Experiment};
use orbitfix::output::{emit_comparison, emit_csv, render_verdicts, write_measurement_dump};
use orbitfix::scenario::{load_config, ScenarioConfig, System};
use orbitfix::{Error, Result};

#[derive(Parser)]
#[command(name = "orbitfix", version, about = "LEO and GNSS carrier-phase positioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nadir Doppler and Doppler rate.
    Doppler(RunArgs),
    /// Doppler phase-approximation error over a short window.
    PhaseError(RunArgs),
    /// Condition number of the stacked phase geometry over time.
    Condition(RunArgs),
    /// Integer ambiguity convergence over growing windows.
    Ambiguity(RunArgs),
    /// Delay-only and joint positioning error over growing windows.
    Position(PositionArgs),
    /// Run one experiment for LEO and GNSS and print a verdict table.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use seeds 1..=N instead of the config's seed list.
    #[arg(long, value_name = "N")]
    seeds: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (JSON). Defaults to the LEO scenario.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PositionArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also dump raw measurements of the first seed to this CSV.
    #[arg(long, value_name = "PATH")]
    dump_measurements: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Experiment to compare.
    #[arg(long, value_name = "NAME")]
    experiment: String,
    /// Config for the LEO side; durations and seeds are taken from it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Config for the GNSS side.
    #[arg(long, value_name = "PATH")]
    gnss_config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn load(path: Option<&PathBuf>, default: System, seeds: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => ScenarioConfig::default_for(default),
    };
    if let Some(n) = seeds {
        if n == 0 {
            return Err(Error::ConfigSchema {
                key: "--seeds".into(),
                message: "need at least one seed".into(),
            });
        }
        cfg.seeds = (1..=n).collect();
    }
    Ok(cfg)
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run_single(args: &RunArgs, experiment: Experiment) -> Result<()> {
    let cfg = load(args.config.as_ref(), System::Leo, args.common.seeds)?;
    let start = Instant::now();
    eprintln!("running {experiment} for {}", cfg.system.name());
    let result = run_experiment(&cfg, experiment)?;
    eprintln!("finished in {:.2} s", start.elapsed().as_secs_f64());
    for (k, v) in &result.summary {
        eprintln!("  {k} = {v}");
    }
    print_paths(&emit_csv(&result, &args.common.out)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Doppler(a) => run_single(&a, Experiment::Doppler),
        Command::PhaseError(a) => run_single(&a, Experiment::PhaseError),
        Command::Condition(a) => run_single(&a, Experiment::Condition),
        Command::Ambiguity(a) => run_single(&a, Experiment::Ambiguity),
        Command::Position(a) => {
            run_single(&a.run, Experiment::Position)?;
            if let Some(path) = &a.dump_measurements {
                let cfg = load(a.run.config.as_ref(), System::Leo, a.run.common.seeds)?;
                let seed = cfg.seeds.iter().copied().min().unwrap_or(1);
                let epochs = raw_measurements(&cfg, seed)?;
                println!("{}", write_measurement_dump(&epochs, path)?.display());
            }
            Ok(())
        }
        Command::Compare(a) => {
            let experiment: Experiment = a.experiment.parse()?;
            let leo = load(a.config.as_ref(), System::Leo, a.common.seeds)?;
            let gnss = load(a.gnss_config.as_ref(), System::Gnss, a.common.seeds)?;
            let start = Instant::now();
            eprintln!("comparing {} vs {} on {experiment}", leo.system.name(), gnss.system.name());
            let cmp = compare_systems(&leo, &gnss, experiment)?;
            eprintln!("finished in {:.2} s", start.elapsed().as_secs_f64());
            eprint!("{}", render_verdicts(&cmp));
            print_paths(&emit_comparison(&cmp, &a.common.out)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(2)
        }
    }
}
