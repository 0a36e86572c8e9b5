//! `perclab`: run one percolation experiment from a JSON config and flags.

mod commands;
mod config;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use perclab::estimators::CSV_HEADER;
use serde_json::json;

use commands::{Outcome, RunError};
use config::{Command, ExperimentConfig, Format};

#[derive(Debug, Parser)]
#[command(name = "perclab", version, about = "Monte Carlo and exact experiments for percolation with a defect sublattice")]
struct Cli {
    /// Experiment to run; overrides `command` from the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON experiment config.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    workers: Option<usize>,
    /// Output stem: writes STEM.csv and STEM.json.
    #[arg(long)]
    out: Option<String>,
    /// Format printed to stdout when no --out is given.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Exit with status 4 when a built-in acceptance check fails.
    #[arg(long)]
    assert: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_ASSERT: u8 = 4;

fn resolve(cli: &Cli) -> Result<ExperimentConfig, config::ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => config::load(path)?,
        None => ExperimentConfig::default(),
    };
    if cli.command.is_some() {
        cfg.command = cli.command;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cli.format.is_some() {
        cfg.format = cli.format;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn csv_text(out: &Outcome) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &out.records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn json_text(cfg: &ExperimentConfig, out: &Outcome) -> String {
    let doc = json!({
        "command": cfg.command.map(Command::name),
        "config": cfg,
        "summary": out.summary,
        "records": out.records,
        "checks": out.checks,
        "details": out.details,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

fn stem(out: &str) -> &str {
    out.strip_suffix(".csv").or_else(|| out.strip_suffix(".json")).unwrap_or(out)
}

fn write_outputs(cfg: &ExperimentConfig, out: &Outcome, path: &str) -> std::io::Result<()> {
    let stem = stem(path);
    if let Some(dir) = Path::new(stem).parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(format!("{stem}.csv"), csv_text(out))?;
    std::fs::write(format!("{stem}.json"), json_text(cfg, out))?;
    if !out.trace.is_empty() {
        let mut lines = String::new();
        for t in &out.trace {
            lines.push_str(&serde_json::to_string(t).expect("serializable"));
            lines.push('\n');
        }
        std::fs::write(format!("{stem}.trace.jsonl"), lines)?;
    }
    Ok(())
}

fn execute(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match cfg.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| RunError::Runtime(e.to_string()))?;
            pool.install(|| commands::run(cfg))
        }
        None => commands::run(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = match execute(&cfg) {
        Ok(o) => o,
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match &cfg.out {
        Some(path) => {
            if let Err(e) = write_outputs(&cfg, &out, path) {
                eprintln!("error: writing {path}: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
            println!("{}", out.summary);
        }
        None => {
            match cfg.format.unwrap_or_default() {
                Format::Csv => print!("{}", csv_text(&out)),
                Format::Json => print!("{}", json_text(&cfg, &out)),
            }
            eprintln!("{}", out.summary);
        }
    }
    let failed: Vec<_> = out.checks.iter().filter(|c| !c.passed).collect();
    for c in &failed {
        eprintln!("check failed: {} ({})", c.name, c.detail);
    }
    if cli.assert && !failed.is_empty() {
        return ExitCode::from(EXIT_ASSERT);
    }
    ExitCode::SUCCESS
}
