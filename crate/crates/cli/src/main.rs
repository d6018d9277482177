use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use positivity_core::suite::VerificationSuite;
use positivity_core::sweep::{run_sweep, SweepConfig};

const DEMO_CONFIG: &str = include_str!("../demo.json");

const EXIT_VALIDATION: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Overlap-positivity sweeps and verification checks.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// Sweep configuration (JSON).
    #[arg(long, conflicts_with_all = ["demo", "verify"])]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the configuration's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for grid cells.
    #[arg(long)]
    workers: Option<usize>,
    /// Run the bundled demo sweep.
    #[arg(long, conflicts_with = "verify")]
    demo: bool,
    /// Run the verification suite.
    #[arg(long)]
    verify: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.verify {
        return verify(cli.seed.unwrap_or(0));
    }
    let (text, source) = if cli.demo {
        (DEMO_CONFIG.to_string(), "demo.json".to_string())
    } else if let Some(path) = &cli.config {
        match std::fs::read_to_string(path) {
            Ok(text) => (text, path.display().to_string()),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    } else {
        eprintln!("nothing to do: pass --config <path>, --demo or --verify");
        return ExitCode::from(EXIT_VALIDATION);
    };
    let mut config = match SweepConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{source}:{e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        if workers == 0 {
            eprintln!("--workers must be positive");
            return ExitCode::from(EXIT_VALIDATION);
        }
        config.workers = Some(workers);
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&config.output));
    match run_sweep(&config, &out) {
        Ok(outcome) => {
            let errors = outcome.rows.iter().filter(|r| r.status.is_err()).count();
            println!(
                "{} rows ({errors} with errors) written to {}",
                outcome.rows.len(),
                outcome.results_path.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sweep failed: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn verify(seed: u64) -> ExitCode {
    let summary = VerificationSuite::standard(seed).run();
    print!("{}", summary.render());
    if summary.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}
