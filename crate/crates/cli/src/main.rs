//! Command-line front end: run one scenario, run the acceptance suite, or
//! list the available scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inflation_core::harness::{default_out_dir, OUT_DIR_ENV};
use inflation_core::{run_acceptance_suite, run_scenario, Error, ExperimentConfig, ScenarioKind, Tier};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "inflation", version, about = "Inflated minimum-norm interpolation experiments")]
struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance criteria and print one line per criterion.
    Accept {
        #[arg(long, default_value = "fast")]
        tier: String,
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
        /// Where to write the verdict JSON.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// List scenario kinds.
    ListScenarios,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("cannot configure {t} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match cli.command {
        Command::ListScenarios => {
            for k in ScenarioKind::ALL {
                println!("{:<20} {}", k.name(), k.description());
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, out } => run(config, seed, out),
        Command::Accept { tier, seed, out } => accept(&tier, seed, out),
    }
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_FAILED),
    }
}

fn run(path: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_path(&path) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.out_dir = out;
    }
    match run_scenario(&cfg) {
        Ok(report) => {
            let dir = report.run_dir(&cfg.out_dir.clone().unwrap_or_else(default_out_dir));
            for v in &report.verdicts {
                let status = if v.passed { "PASS" } else { "FAIL" };
                println!("{status} {}: measured {} required {}", v.id, v.measured, v.required);
            }
            if !report.failures.is_empty() {
                println!("{} replicate(s) failed", report.failures.len());
            }
            println!("report: {}", dir.join("report.json").display());
            if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILED) }
        }
        Err(e) => exit_for(&e),
    }
}

fn accept(tier: &str, seed: u64, out: Option<PathBuf>) -> ExitCode {
    let tier: Tier = match tier.parse() {
        Ok(t) => t,
        Err(e) => return exit_for(&e),
    };
    let summary = run_acceptance_suite(tier, seed);
    for c in &summary.criteria {
        println!("{}", c.line());
    }
    let dir = out.unwrap_or_else(default_out_dir).join(format!("acceptance-{tier}-{seed}"));
    let written = std::fs::create_dir_all(&dir)
        .map_err(Error::from)
        .and_then(|_| summary.verdict_json())
        .and_then(|json| std::fs::write(dir.join("verdicts.json"), json).map_err(Error::from));
    if let Err(e) = written {
        return exit_for(&e);
    }
    let failed = summary.criteria.iter().filter(|c| !c.passed).count();
    println!("{} of {} criteria passed", summary.criteria.len() - failed, summary.criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILED) }
}
