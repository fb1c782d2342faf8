use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use param_mend::orchestrate::{self, load_config, Command};
use param_mend::par::ExecMode;

#[derive(Parser)]
#[command(name = "param-mend", version, about = "Detect and repair API parameter compatibility issues across library upgrades")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (key = value text or JSON)
    #[arg(long)]
    config: PathBuf,
    /// Use only the static library index; no environments needed
    #[arg(long)]
    static_only: bool,
    /// Write the JSON report to this path
    #[arg(long)]
    json_report: Option<PathBuf>,
    /// Run per-file tasks sequentially
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Report compatibility of every library call
    Check(Common),
    /// Repair incompatible calls (dry run unless --write)
    Fix {
        #[command(flatten)]
        common: Common,
        /// Rewrite project files in place
        #[arg(long)]
        write: bool,
    },
    /// Generate and score a mutation corpus
    Bench(Common),
}

fn run(cli: Cli) -> Result<bool> {
    let (common, command, write) = match cli.command {
        Cmd::Check(c) => (c, Some(Command::Check), false),
        Cmd::Fix { common, write } => (common, Some(Command::Fix), write),
        Cmd::Bench(c) => (c, None, false),
    };
    let mut config = load_config(&common.config)?;
    if common.static_only {
        config.static_only = true;
    }
    if write {
        config.dry_run = false;
    }
    config.validate()?;
    let mode = if common.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };

    let Some(command) = command else {
        let report = orchestrate::run_bench(&config, mode)?;
        let json = serde_json::to_string_pretty(&report)? + "\n";
        if let Some(path) = &common.json_report {
            fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
        }
        print!("{json}");
        return Ok(false);
    };

    let report = orchestrate::run_with(&config, command, mode)?;
    if let Some(path) = &common.json_report {
        fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", report.to_table());
    if command == Command::Fix {
        for f in &report.files {
            if f.written {
                eprintln!("rewrote {}", f.file);
            } else {
                print!("{}", f.diff);
            }
        }
    }
    Ok(report.has_incompatibilities())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::from(0),
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
