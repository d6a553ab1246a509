use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use rmw_cli::{run_scenario, CliError, CliResult, ScenarioConfig, ScenarioId};

/// Error-suppressed entanglement witness scenarios, emitted as CSV.
#[derive(Parser, Debug)]
#[command(name = "rmw", version)]
struct Cli {
    #[command(subcommand)]
    scenario: ScenarioId,
    /// JSON config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path (stdout when neither this nor the config sets one).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit the timestamp line so reruns are byte-identical.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

/// Relative output paths are placed under `RMW_OUT_DIR` when it is set.
fn output_path(cli: &Cli, cfg: &ScenarioConfig) -> Option<PathBuf> {
    let path = cli.out.clone().or_else(|| cfg.output.clone())?;
    match std::env::var_os("RMW_OUT_DIR") {
        Some(dir) if path.is_relative() => Some(PathBuf::from(dir).join(path)),
        _ => Some(path),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Schema(format!("cannot read config {}: {e}", path.display())))?;
            ScenarioConfig::from_json(&text)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let cfg = cfg.resolve(cli.scenario)?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut table = run_scenario(&cfg, jobs)?;
    if !cli.reproducible {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        table.note("generated_unix", now.to_string());
    }
    match output_path(cli, &cfg) {
        Some(path) => table.emit_csv(&path),
        None => {
            std::io::stdout().write_all(table.to_csv()?.as_bytes())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
