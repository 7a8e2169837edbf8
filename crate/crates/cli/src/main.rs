use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use slicelb::baselines::Scheme;
use slicelb::sim::output::{write_config, write_run, write_sweep_summary};
use slicelb::sim::{run_experiment, run_sweep, ScenarioConfig};
use slicelb::verify::{inverted_allocator, swap_allocator, verify_all};

/// Thread count for sweeps; defaults to the number of CPUs.
const THREADS_ENV: &str = "SLICELB_THREADS";

#[derive(Parser)]
#[command(name = "slicelb", version, about = "Slice-aware load balancing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSVs and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (seed, scheme) pair and a per-slice comparison against NoLB.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Comma-separated scheme names.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "radioweaver,nolb,naivelb,isolatedlb,mora,mora_pp"
        )]
        schemes: Vec<Scheme>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in two-cell example through every scheme.
    GoldenExample,
    /// Run the randomized optimality and isolation checks.
    VerifyLemmas {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Check a deliberately broken allocator instead of the real one.
        #[arg(long, hide = true)]
        inject_buggy_allocator: bool,
    },
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<slicelb::Error> for Failure {
    fn from(e: slicelb::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out } => {
            let (cfg, base) = load_config(&config)?;
            let output = run_experiment(&cfg, &base)?;
            write_run(&out, &output)?;
            write_config(&out, &cfg)?;
            println!(
                "{}: seed {} with {} invocations, {} handovers -> {}",
                output.scheme,
                output.seed,
                output.metrics.invocations,
                output.metrics.handovers(false) + output.metrics.handovers(true),
                out.display()
            );
            Ok(())
        }
        Command::Sweep {
            config,
            seeds,
            schemes,
            out,
        } => {
            if seeds == 0 || schemes.is_empty() {
                return Err(Failure::Usage(
                    "a sweep needs --seeds >= 1 and at least one scheme".into(),
                ));
            }
            let (cfg, base) = load_config(&config)?;
            let threads = match std::env::var(THREADS_ENV) {
                Ok(v) => Some(v.parse().with_context(|| format!("{THREADS_ENV}={v}"))?),
                Err(_) => None,
            };
            let result = run_sweep(&cfg, &base, seeds, &schemes, threads)?;
            for run in &result.runs {
                write_run(&out.join(format!("seed_{}", run.seed)).join(run.scheme.name()), run)?;
            }
            write_config(&out, &cfg)?;
            write_sweep_summary(&out.join("summary.csv"), &result.rows)?;
            println!("{} runs -> {}", result.runs.len(), out.display());
            Ok(())
        }
        Command::GoldenExample => {
            let report = slicelb::golden::run_golden()?;
            println!(
                "{:<12} {:<28} {:>12} {:>12}  ok",
                "scheme", "check", "expected", "actual"
            );
            for c in &report.checks {
                println!(
                    "{:<12} {:<28} {:>12.6} {:>12.6}  {}",
                    c.scheme,
                    c.name,
                    c.expected,
                    c.actual,
                    if c.passed() { "yes" } else { "NO" }
                );
            }
            let failed = report.failures().count();
            if failed > 0 {
                return Err(Failure::Runtime(anyhow::anyhow!("{failed} values do not match")));
            }
            Ok(())
        }
        Command::VerifyLemmas {
            trials,
            seed,
            inject_buggy_allocator,
        } => {
            if trials == 0 {
                return Err(Failure::Usage("--trials must be at least 1".into()));
            }
            let allocator = if inject_buggy_allocator {
                inverted_allocator
            } else {
                swap_allocator
            };
            let mut failed = 0;
            for report in verify_all(trials, seed, allocator) {
                match &report.failure {
                    None => println!("PASS {} ({} trials)", report.suite, report.trials),
                    Some(ce) => {
                        failed += 1;
                        println!("FAIL {} at trial {}: {}", report.suite, ce.trial, ce.reason);
                        println!("{}", ce.to_json());
                    }
                }
            }
            if failed > 0 {
                return Err(Failure::Runtime(anyhow::anyhow!("{failed} suites failed")));
            }
            Ok(())
        }
    }
}

/// Parses and validates a scenario. Validation problems are usage errors.
fn load_config(path: &Path) -> Result<(ScenarioConfig, PathBuf), Failure> {
    let cfg = ScenarioConfig::load(path).map_err(|e| Failure::Usage(format!("error: {e}")))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let violations = cfg.validate(&base);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Failure::Usage(format!("invalid scenario:\n  {}", lines.join("\n  "))));
    }
    Ok((cfg, base))
}
