use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saferefine::pipeline::{
    exit_code, measure_project, replay, run_translation, ConfigFile, PipelineError, RunConfig, RunPaths,
    TranslationReport, EXIT_ENVIRONMENT,
};
use saferefine::validation::{CargoToolchain, ToolchainConfig};
use tracing_subscriber::EnvFilter;

/// Refines transpiler-produced unsafe Rust into safer Rust, one function at
/// a time, with a tree search over model-generated candidates.
#[derive(Parser)]
#[command(name = "saferefine", version)]
struct Cli {
    /// Log filter, e.g. `info` or `saferefine=debug`. Overrides RUST_LOG.
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine every function of a project and write the result and a report.
    Translate(TranslateArgs),
    /// Measure the safety ratio and idiomaticity of a project against its baseline.
    Metrics(MetricsArgs),
    /// Re-run a recorded translation, answering model queries from its transcript.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    project: PathBuf,
    /// Test suite (TOML). Without one, compilation alone decides acceptance.
    #[arg(long)]
    tests: Option<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Overrides `search.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Serve every model from a mock script (`.toml`) or a transcript (`.jsonl`).
    #[arg(long)]
    mock: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    project: PathBuf,
    /// The untouched transpiler output the project was derived from.
    #[arg(long)]
    baseline: PathBuf,
    /// Skip the linter; idiomaticity is then reported as null.
    #[arg(long)]
    no_lint: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    transcript: PathBuf,
    /// Output directory; defaults to `replay` beside the transcript.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = match &cli.log {
        Some(directives) => EnvFilter::new(directives),
        None => EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
    };
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ENVIRONMENT
        }
    };
    ExitCode::from(code as u8)
}

fn run(command: Command) -> Result<i32, PipelineError> {
    match command {
        Command::Translate(a) => {
            let mut file = ConfigFile::load(&a.config)?;
            if let Some(seed) = a.seed {
                file.search.seed = seed;
            }
            let paths = RunPaths {
                project_dir: a.project,
                tests_file: a.tests,
                output_dir: a.out,
                report_path: a.report,
                mock: a.mock,
            };
            let report = run_translation(&RunConfig::new(file, paths))?;
            print_summary(&report);
            Ok(exit_code(&report))
        }
        Command::Metrics(a) => {
            let toolchain = CargoToolchain::new(ToolchainConfig::default())?;
            let m = measure_project(&a.project, &a.baseline, &toolchain, !a.no_lint)?;
            let text = serde_json::to_string_pretty(&m).map_err(|e| PipelineError::Report(e.to_string()))?;
            println!("{text}");
            Ok(0)
        }
        Command::Replay(a) => {
            let out = a.out.unwrap_or_else(|| {
                a.transcript
                    .parent()
                    .unwrap_or(std::path::Path::new("."))
                    .join("replay")
            });
            let summary = replay(&a.transcript, &out)?;
            print_summary(&summary.report);
            if summary.unused_records > 0 {
                println!("{} recorded answers were not used", summary.unused_records);
            }
            match summary.matches_original {
                Some(true) => println!("report matches the recorded run"),
                Some(false) => println!("report differs from the recorded run"),
                None => println!("recorded report not found; nothing to compare"),
            }
            println!("outputs written to {}", out.display());
            Ok(exit_code(&summary.report))
        }
    }
}

fn print_summary(report: &TranslationReport) {
    let p = &report.project;
    let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", v * 100.0));
    for id in &report.order {
        let f = &report.per_function[id];
        let mark = if f.refined { "refined " } else { "fallback" };
        println!(
            "{mark} {id}  S={:.3} queries={} tokens={}",
            f.safety, f.queries, f.tokens
        );
    }
    println!(
        "SR={:.3} FCR={} FRR={} TPR={} PCR={} PPR={} I={} avg_queries={} avg_tokens={} time={:.1}s",
        p.sr,
        pct(p.fcr),
        pct(p.frr),
        pct(p.tpr),
        pct(Some(p.pcr)),
        pct(p.ppr),
        p.idiomaticity.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}")),
        p.avg_queries.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}")),
        p.avg_tokens.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}")),
        p.wall_time_secs,
    );
}
