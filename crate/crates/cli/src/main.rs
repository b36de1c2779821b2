//! `knockoffs`: sample knockoff copies, diagnose them, check copula
//! constructions and run filter / discretization simulations from a JSON
//! run configuration.
//!
//! Exit status: 0 on success, 1 on a configuration or validation error,
//! 2 when the command's mandatory diagnostic fails.

mod commands;
mod config;

use clap::Parser;
use config::{Command, Format, RunConfig, DEFAULT_SEED};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "knockoffs", version, about = "Model-X knockoff construction and verification")]
struct Args {
    /// Command to run; overrides `command` in the config.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON run configuration (`-` reads stdin).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Seed; overrides the config. Default when neither is given: 20240917.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output file; overrides the config. Default: stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Suppress the summary line on stderr.
    #[arg(long)]
    quiet: bool,
}

/// Fills command, seed, output and format so the config embedded in the
/// report is exactly what ran.
fn resolve(mut cfg: RunConfig, args: &Args) -> Result<RunConfig, String> {
    cfg.command = args.command.or(cfg.command);
    let command = cfg.command.ok_or("`command` missing: give it in the config or on the command line")?;
    cfg.seed = Some(args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED));
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    cfg.format = Some(cfg.format.unwrap_or(match command {
        Command::Sample => Format::Csv,
        _ => Format::Json,
    }));
    if matches!(command, Command::Diagnose | Command::CheckCopula) && cfg.format == Some(Format::Csv) {
        return Err(format!("{command} only writes JSON"));
    }
    if cfg.input.is_some() && command != Command::Diagnose {
        return Err("`input` is only used by diagnose".into());
    }
    Ok(cfg)
}

fn load(args: &Args) -> Result<RunConfig, String> {
    let text = if args.config.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).map_err(|e| format!("stdin: {e}"))?;
        s
    } else {
        commands::read(&args.config)?
    };
    let cfg = config::parse(&text, &args.config)?;
    resolve(cfg, args)
}

fn write(cfg: &RunConfig, body: &str) -> Result<(), String> {
    match &cfg.out {
        Some(path) => std::fs::write(path, body).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().lock().write_all(body.as_bytes()).map_err(|e| format!("stdout: {e}")),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let command = cfg.command.expect("resolved");
    let out = match commands::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {command}: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write(&cfg, &out.body) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if !args.quiet {
        let dest = cfg.out.as_ref().map_or("stdout".to_string(), |p| p.display().to_string());
        eprintln!("{command}: {} -> {dest}", out.summary);
    }
    if out.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
