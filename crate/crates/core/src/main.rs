use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use tictoc::config::PolicyConfig;
use tictoc::harness::conformance::run_suite;
use tictoc::harness::report::{emit_report, ReportFormat};
use tictoc::harness::{run_trace_with, sweep_mdc_size, RunOptions, RunResult, TraceSource};
use tictoc::traces::{generate, write_trace, MemAccess, TraceSpec};

/// Exit status when a run completes but an oracle or conformance check fails.
const EXIT_VERDICT_FAIL: u8 = 3;

#[derive(Parser)]
#[command(name = "tictoc", version, about = "Bandwidth simulator for a channel-shared DRAM cache over 3D-XPoint")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace from a spec file.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one configuration over a trace and write a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Rerun one configuration at several metadata-cache sizes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "128,256,512,1024")]
        sizes: Vec<usize>,
        /// Also write the full per-size report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Run the per-operation cost conformance suite.
    Selftest,
}

fn read_config(path: &Path) -> Result<PolicyConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    PolicyConfig::parse(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn load_trace(path: &Path, cfg: &PolicyConfig) -> Result<Arc<Vec<MemAccess>>> {
    TraceSource::File(path.to_path_buf())
        .load(cfg.geometry.memory_lines)
        .with_context(|| format!("loading trace {}", path.display()))
}

fn all_passed(results: &[RunResult]) -> bool {
    results.iter().all(|r| r.verdict.passed())
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERDICT_FAIL)
    }
}

fn generate_cmd(spec: &Path, out: &Path) -> Result<ExitCode> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading spec {}", spec.display()))?;
    let spec = TraceSpec::parse(&text).context("parsing trace spec")?;
    let trace = generate(&spec)?;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_trace(&trace, BufWriter::new(file))?;
    eprintln!("wrote {} accesses to {}", trace.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_cmd(config: &Path, trace: &Path, report: &Path, format: ReportFormat) -> Result<ExitCode> {
    let cfg = read_config(config)?;
    let trace = load_trace(trace, &cfg)?;
    let result = run_trace_with(&cfg, &trace, RunOptions::default(), 0)?;
    eprintln!("{} {}: {}", cfg.organization, cfg.flags_label(), result.verdict);
    let results = [result];
    emit_report(&results, format, report).with_context(|| format!("writing report {}", report.display()))?;
    Ok(status(all_passed(&results)))
}

fn sweep_cmd(
    config: &Path,
    trace: &Path,
    sizes: &[usize],
    report: Option<&Path>,
    format: ReportFormat,
) -> Result<ExitCode> {
    if sizes.is_empty() || sizes.contains(&0) {
        bail!("--sizes needs one or more positive entry counts");
    }
    let cfg = read_config(config)?;
    let trace = load_trace(trace, &cfg)?;
    let rows = sweep_mdc_size(&cfg, &trace, sizes)?;
    let mut out = io::stdout().lock();
    writeln!(out, "entries,rho,makespan_ns,verdict")?;
    for r in &rows {
        writeln!(out, "{},{:.6},{},{}", r.entries, r.rho, r.makespan_ns, r.result.verdict)?;
    }
    let results: Vec<RunResult> = rows.into_iter().map(|r| r.result).collect();
    if let Some(path) = report {
        emit_report(&results, format, path).with_context(|| format!("writing report {}", path.display()))?;
    }
    Ok(status(all_passed(&results)))
}

fn selftest_cmd() -> Result<ExitCode> {
    let cases = run_suite();
    let mut out = io::stdout().lock();
    for c in &cases {
        writeln!(out, "{c}")?;
    }
    let failed = cases.iter().filter(|c| !c.passed()).count();
    writeln!(out, "{} cases, {failed} failed", cases.len())?;
    Ok(status(failed == 0))
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Generate { spec, out } => generate_cmd(&spec, &out),
        Command::Run { config, trace, report, format } => run_cmd(&config, &trace, &report, format),
        Command::Sweep { config, trace, sizes, report, format } => {
            sweep_cmd(&config, &trace, &sizes, report.as_deref(), format)
        }
        Command::Selftest => selftest_cmd(),
    }
}
