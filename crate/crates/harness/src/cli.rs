//! Command-line front end: `run`, `analyze`, `report` and `scenario`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use satqic_core::analysis::Status;
use satqic_core::scenarios::{
    builtin, parse_scenario, serialize_scenario, ScenarioSpec, BUILTIN_NAMES,
};
use thiserror::Error;

use crate::capture;
use crate::orchestrator::{self, ExecOptions, Mode};
use crate::report;
use crate::results::{self, RESULT_FILE};

pub const RUN_META_FILE: &str = "run_meta.json";

#[derive(Debug, Parser)]
#[command(
    name = "satqic",
    version,
    about = "QUIC-style transfer measurements over emulated satellite links"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every client against every server in each scenario.
    Run(RunArgs),
    /// Recompute metrics from the stored traces and compare with the results.
    Analyze(DirArgs),
    /// Render heatmaps, CDFs, role distributions and time-offset plots.
    Report(ReportArgs),
    /// Inspect scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Comma-separated built-in names (TERR, SAT, SATL) or scenario files.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scenario: Vec<String>,
    /// Comma-separated client endpoints.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "newreno,cubic,ratestartup"
    )]
    pub clients: Vec<String>,
    /// Comma-separated server endpoints.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "newreno,cubic,ratestartup"
    )]
    pub servers: Vec<String>,
    /// Iterations per cell, overriding the scenario.
    #[arg(long)]
    pub iterations: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-run timeout in seconds, overriding the scenario.
    #[arg(long)]
    pub timeout_s: Option<f64>,
    /// Transferred file size in bytes, overriding the scenario.
    #[arg(long)]
    pub file_size: Option<u64>,
    /// External endpoint as name=command; may be repeated.
    #[arg(long)]
    pub external: Vec<String>,
    /// Run built-in pairs over real sockets too, instead of the virtual clock.
    #[arg(long)]
    pub realtime: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// No per-run progress lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct DirArgs {
    /// Directory written by `run`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Where plots go; defaults to `<out>/report`.
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Print a scenario in its text form.
    Show { name: String },
    /// List the built-in scenarios.
    List,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("satqic: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => run(&a),
        Command::Analyze(a) => analyze(&a.out),
        Command::Report(a) => {
            let dir = a.report_dir.unwrap_or_else(|| a.out.join("report"));
            render(&a.out, &dir)
        }
        Command::Scenario(ScenarioCommand::Show { name }) => {
            print!("{}", serialize_scenario(&load_scenario(&name)?));
            Ok(())
        }
        Command::Scenario(ScenarioCommand::List) => {
            for n in BUILTIN_NAMES {
                println!("{n}");
            }
            Ok(())
        }
    }
}

/// A built-in name, or else a path to a scenario file.
pub fn load_scenario(name: &str) -> Result<ScenarioSpec, CliError> {
    if let Ok(s) = builtin(name) {
        return Ok(s);
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "unknown scenario {name:?} (built-ins: {})",
            BUILTIN_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| failure(format!("{name}: {e}")))?;
    parse_scenario(&text).map_err(|e| CliError::Usage(format!("{name}: {e}")))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn run(a: &RunArgs) -> Result<(), CliError> {
    let mut scenarios = Vec::new();
    for name in &a.scenario {
        let mut s = load_scenario(name)?;
        if let Some(n) = a.iterations {
            s.iterations = n;
        }
        if let Some(t) = a.timeout_s {
            s.timeout_s = t;
        }
        if let Some(f) = a.file_size {
            s.file_size = f;
        }
        s.validate()
            .map_err(|e| CliError::Usage(format!("{}: {e}", s.name)))?;
        scenarios.push(s);
    }
    let usage = |e: orchestrator::PlanError| CliError::Usage(e.to_string());
    let externals = orchestrator::parse_externals(&a.external).map_err(usage)?;
    let clients = orchestrator::resolve_endpoints(&a.clients, &externals).map_err(usage)?;
    let servers = orchestrator::resolve_endpoints(&a.servers, &externals).map_err(usage)?;
    let plan = orchestrator::plan(&scenarios, &clients, &servers, a.seed).map_err(usage)?;

    std::fs::create_dir_all(&a.out).map_err(|e| failure(format!("{}: {e}", a.out.display())))?;
    let started_at = unix_now();
    let clock = Instant::now();
    let total = plan.entries.len();
    let quiet = a.quiet;
    let mut progress = |i: usize,
                        id: &satqic_core::trace::RunIdentity,
                        o: &satqic_core::analysis::TransferOutcome| {
        if quiet {
            return;
        }
        let detail = match (o.status, o.goodput) {
            (Status::Success, Some(g)) => {
                format!("{:.3} Mbit/s, efficiency {:.3}", g / 1e6, o.efficiency)
            }
            (s, _) => format!("{s:?}").to_lowercase(),
        };
        eprintln!(
            "[{}/{total}] {} client {} server {} #{}: {detail}",
            i + 1,
            id.scenario,
            id.client,
            id.server,
            id.iteration
        );
    };
    let mut opts = ExecOptions::new(&a.out);
    opts.mode = if a.realtime {
        Mode::Realtime
    } else {
        Mode::Auto
    };
    opts.progress = Some(&mut progress);
    let matrix = orchestrator::execute(&plan, opts).map_err(failure)?;
    results::emit_results(&matrix, &a.out).map_err(failure)?;

    let meta = serde_json::json!({
        "harness_version": env!("CARGO_PKG_VERSION"),
        "started_unix_s": started_at,
        "finished_unix_s": unix_now(),
        "wall_clock_s": clock.elapsed().as_secs_f64(),
        "command_line": std::env::args().collect::<Vec<_>>(),
    });
    let meta_path = a.out.join(RUN_META_FILE);
    std::fs::write(&meta_path, format!("{meta:#}\n"))
        .map_err(|e| failure(format!("{}: {e}", meta_path.display())))?;

    for s in &matrix.scenarios {
        let sum = s.summary();
        let mbit = |v: Option<f64>| {
            v.map(|g| format!("{:.3}", g / 1e6))
                .unwrap_or_else(|| "-".into())
        };
        println!(
            "{}: mean goodput {} Mbit/s, max {} Mbit/s, {} ok, {} timeouts, {} errors",
            s.spec.name,
            mbit(sum.mean_goodput),
            mbit(sum.max_goodput),
            sum.successes,
            sum.timeouts,
            sum.errors
        );
    }
    Ok(())
}

/// Recomputes each run's outcome from its trace; any difference to the
/// stored results is reported and fails the command.
pub fn analyze(out: &Path) -> Result<(), CliError> {
    let matrix = results::load_results(out).map_err(failure)?;
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    for s in &matrix.scenarios {
        for c in &s.cells {
            for r in &c.runs {
                let Some(rel) = &r.trace_file else { continue };
                let trace = capture::read_trace(&out.join(rel)).map_err(failure)?;
                let again = orchestrator::recompute_outcome(r.outcome.status, &trace, &s.spec);
                checked += 1;
                if again != r.outcome {
                    mismatches.push(format!(
                        "{rel}: stored {:?}, recomputed {:?}",
                        r.outcome, again
                    ));
                }
            }
        }
    }
    for m in &mismatches {
        println!("mismatch {m}");
    }
    println!("{checked} runs checked, {} mismatches", mismatches.len());
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(failure(format!(
            "{} runs disagree with {RESULT_FILE}",
            mismatches.len()
        )))
    }
}

pub fn render(out: &Path, report_dir: &Path) -> Result<(), CliError> {
    let matrix = results::load_results(out).map_err(failure)?;
    let summary = report::render_report(&matrix, out, report_dir).map_err(failure)?;
    for s in &summary.skipped {
        eprintln!("skipped: {s}");
    }
    println!(
        "{} files written to {}",
        summary.written.len(),
        report_dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(
            main_with(["satqic", "run", "--scenario", "MARS", "--out", "/tmp/x"]),
            2
        );
        assert_eq!(main_with(["satqic", "frobnicate"]), 2);
        assert_eq!(
            main_with([
                "satqic",
                "run",
                "--scenario",
                "SAT",
                "--clients",
                "nope",
                "--out",
                "/tmp/x"
            ]),
            2
        );
    }

    #[test]
    fn missing_inputs_exit_1() {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(
            main_with([
                "satqic".as_ref(),
                "report".as_ref(),
                "--out".as_ref(),
                d.path().as_os_str()
            ]),
            1
        );
        assert_eq!(
            main_with([
                "satqic".as_ref(),
                "analyze".as_ref(),
                "--out".as_ref(),
                d.path().as_os_str()
            ]),
            1
        );
    }

    #[test]
    fn scenario_show() {
        assert_eq!(main_with(["satqic", "scenario", "show", "SATL"]), 0);
        assert_eq!(main_with(["satqic", "scenario", "show", "MARS"]), 2);
    }
}
