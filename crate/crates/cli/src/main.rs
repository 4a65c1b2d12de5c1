use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rezo_core::graph::ScheduleParams;
use rezo_core::sim::{self, report, verify, ExperimentConfig, SimError, Trace};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_INVARIANTS: u8 = 3;

#[derive(Parser)]
#[command(name = "rezo", version, about = "Resilient zeroth-order online optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory. Takes precedence over REZO_OUT_DIR and the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Mix every received payload (baseline ablation).
        #[arg(long)]
        no_filter: bool,
    },
    /// Run the built-in invariant suites.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Print the checks as a JSON array.
        #[arg(long)]
        json: bool,
    },
    /// Turn a trace into plot-ready tables or summary statistics.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
        format: ReportFormat,
    },
    /// Sample a schedule that passes the connectivity checks.
    GenSchedule {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        period: usize,
        #[arg(long)]
        trusted_density: f64,
        #[arg(long)]
        adv_density: f64,
        #[arg(long, default_value_t = 0.2)]
        normal_density: f64,
        /// Connectivity window; defaults to the period.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value_t = 0)]
        min_adversarial: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Summary,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME };
        Failure { code, error: e.into() }
    }
}

fn validation(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_VALIDATION, error }
}

fn runtime(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_RUNTIME, error }
}

fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os("REZO_OUT_DIR").map(PathBuf::from))
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn cmd_run(config: &Path, out: Option<PathBuf>, no_filter: bool) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(config)
        .with_context(|| format!("loading {}", config.display()))
        .map_err(validation)?;
    if no_filter {
        cfg.filter_enabled = false;
    }
    let dir = output_dir(out, &cfg);
    let output = sim::run(&cfg)?;
    let (trace, summary) = sim::write_outputs(&output, &dir).map_err(|e| runtime(e.into()))?;
    let s = &output.summary;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    println!("trace      {}", trace.display());
    println!("summary    {}", summary.display());
    println!("disagreement {:.6e} -> {:.6e}", s.initial_disagreement, s.final_disagreement);
    for (i, r) in s.regret_over_t.iter().enumerate() {
        println!("agent {} regret/T {:.6e}", i + 1, r);
    }
    println!("queries {}  wall {:.3}s  hash {}", s.total_queries, s.wall_time_secs, s.config_hash);
    Ok(())
}

fn cmd_verify(suite: &str, json: bool) -> Result<(), Failure> {
    let checks = verify::run_suite(suite)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&checks).expect("checks serialize"));
    } else {
        for c in &checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            println!("{verdict} {:<14} {}  measured={:e} threshold={:e}", c.suite, c.name, c.measured, c.threshold);
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure { code: EXIT_INVARIANTS, error: anyhow::anyhow!("{failed} of {} checks failed", checks.len()) });
    }
    Ok(())
}

/// Writes to stdout; a closed pipe (`rezo report ... | head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(runtime(anyhow::Error::new(e).context("writing to stdout"))),
        _ => Ok(()),
    }
}

fn cmd_report(trace: &Path, format: ReportFormat) -> Result<(), Failure> {
    let trace = Trace::load(trace).with_context(|| format!("reading {}", trace.display())).map_err(validation)?;
    match format {
        ReportFormat::Csv => emit(&report::aligned_csv(&trace)?),
        ReportFormat::Summary => {
            let stats = report::summarize(&trace)?;
            emit(&(serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n"))
        }
    }
}

fn cmd_gen_schedule(params: ScheduleParams, out: &Path) -> Result<(), Failure> {
    let file = sim::gen_schedule(&params)?;
    let json = serde_json::to_string_pretty(&file).expect("schedule serializes");
    std::fs::write(out, json + "\n")
        .with_context(|| format!("writing {}", out.display()))
        .map_err(runtime)?;
    println!("{}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, no_filter } => cmd_run(&config, out, no_filter),
        Command::Verify { suite, json } => cmd_verify(&suite, json),
        Command::Report { trace, format } => cmd_report(&trace, format),
        Command::GenSchedule {
            n,
            period,
            trusted_density,
            adv_density,
            normal_density,
            window,
            min_adversarial,
            seed,
            out,
        } => {
            let params = ScheduleParams {
                normal_density,
                window,
                min_adversarial_per_snapshot: min_adversarial,
                ..ScheduleParams::new(n, period, trusted_density, adv_density, seed)
            };
            cmd_gen_schedule(params, &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
