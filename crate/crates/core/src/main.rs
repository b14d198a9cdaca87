use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use escdyn::flows::example_systems;
use escdyn::report::{write_report, write_summary};
use escdyn::scenario::{parse_scenario, Resolved};

/// Run escape, limit-set, hyperspace and semigroup analyses from a JSON
/// scenario and write one CSV report per request.
///
/// Exit status: 0 when every check passes or skips, 2 when any check fails,
/// 1 on configuration or input errors.
#[derive(Debug, Parser)]
#[command(name = "escdyn", version)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, required_unless_present = "list_systems")]
    scenario: Option<PathBuf>,

    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed for sampled requests; overrides the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Print the built-in example systems and exit.
    #[arg(long)]
    list_systems: bool,

    /// Report progress on stderr.
    #[arg(long, short)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_systems {
        for (name, sys) in example_systems() {
            println!("{name}\t{}", sys.describe());
        }
        return ExitCode::SUCCESS;
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Returns whether every check passed or skipped.
fn run(cli: &Cli) -> Result<bool, String> {
    let path = cli.scenario.as_ref().expect("clap enforces --scenario");
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let scenario = parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let resolved = Resolved::new(&scenario, cli.seed).map_err(|e| e.to_string())?;
    let out = cli
        .out
        .clone()
        .or_else(|| scenario.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("reports"));
    fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;

    let mut reports = Vec::with_capacity(scenario.requests.len());
    for (i, req) in scenario.requests.iter().enumerate() {
        if cli.verbose {
            eprintln!("[{}/{}] {} {}", i + 1, scenario.requests.len(), req.kind(), req.target());
        }
        let report = resolved.run(i, req).map_err(|e| format!("request {}: {e}", i + 1))?;
        write_report(&out, &report).map_err(|e| e.to_string())?;
        if cli.verbose {
            let t = report.tally;
            eprintln!("    {} rows, {} pass, {} fail, {} skip", report.rows.len(), t.pass, t.fail, t.skip);
        }
        reports.push(report);
    }
    write_summary(&out, &reports).map_err(|e| e.to_string())?;
    Ok(reports.iter().all(|r| r.tally.fail == 0))
}
