use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use starflow_cli::config::Config;
use starflow_cli::manifest::Input;
use starflow_cli::run::{run, write_outcome, RunError, Subcommand};

/// Exit status for configuration and runtime errors; failed checks exit with 1.
const ERROR_EXIT: u8 = 2;

#[derive(Parser)]
#[command(name = "starflow", version, about = "Star-graph flow checks")]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// TOML config file; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Overrides `workers` from the config.
    #[arg(short, long)]
    workers: Option<usize>,
    /// Skip SVG plots.
    #[arg(long)]
    no_svg: bool,
}

fn execute(args: &Args) -> Result<bool, RunError> {
    let (mut cfg, config_input) = match &args.config {
        Some(path) => {
            let cfg = Config::load(path)?;
            let bytes = std::fs::read(path)?;
            let name = path
                .file_name()
                .map_or_else(|| "config".into(), |f| f.to_string_lossy().into_owned());
            (cfg, Some(Input::new(name, &bytes)))
        }
        None => (Config::default(), None),
    };
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w.max(1));
    }
    let start = Instant::now();
    let outcomes = run(args.subcommand, &cfg, !args.no_svg)?;
    let mut ok = true;
    for outcome in &outcomes {
        write_outcome(outcome, &cfg, config_input.as_ref())?;
        if outcome.subcommand == Subcommand::All {
            continue;
        }
        for c in &outcome.checks {
            let status = if c.passed() { "PASS" } else { "FAIL" };
            println!(
                "{status} {} = {:.4e} (threshold {:.4e})",
                c.name, c.value, c.threshold
            );
        }
        ok &= outcome.passed();
    }
    if let Some(all) = outcomes.iter().find(|o| o.subcommand == Subcommand::All) {
        for c in all.checks.iter().filter(|c| c.name.starts_with("beta.")) {
            let status = if c.passed() { "PASS" } else { "FAIL" };
            println!(
                "{status} {} = {:.4e} (threshold {:.4e})",
                c.name, c.value, c.threshold
            );
        }
        ok &= all.passed();
    }
    eprintln!(
        "{} in {:.1}s, artifacts in {}",
        args.subcommand.name(),
        start.elapsed().as_secs_f64(),
        cfg.output_dir.display()
    );
    Ok(ok)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR_EXIT)
        }
    }
}
