use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use dfl_cli::{parse_config, run, Scenario, ScenarioConfig};

/// Run a flux-across-surfaces scenario and write its CSV files and report.json.
#[derive(Parser, Debug)]
#[command(name = "dfl", version)]
struct Args {
    /// configuration file (`section.key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// scenario name, overriding the configuration
    #[arg(long)]
    scenario: Option<Scenario>,
    /// output directory; falls back to DFL_OUT_DIR, then run.out_dir, then ./out
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// worker threads, overriding run.threads
    #[arg(long)]
    threads: Option<usize>,
    /// print the default configuration and exit
    #[arg(long)]
    print_defaults: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    let args = Args::parse();
    if args.print_defaults {
        print!("{}", ScenarioConfig::default().to_text());
        return Ok(ExitCode::SUCCESS);
    }
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(n) = args.threads {
        cfg.threads = n;
    }
    cfg.validate()?;
    let out_dir = args
        .out_dir
        .or_else(|| std::env::var_os("DFL_OUT_DIR").map(PathBuf::from))
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    log::info!("running {} into {}", cfg.scenario.name(), out_dir.display());
    let report = run(&cfg, &out_dir)?;
    for a in &report.assertions {
        println!(
            "{} {:<34} measured {:<14.6e} {}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.measured,
            a.limit
        );
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
