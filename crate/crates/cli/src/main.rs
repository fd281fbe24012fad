//! `synthcascade`: batch experiment runner for the cascade-synthesis
//! toolkit. Every run is driven by a TOML config (file and/or --set
//! overrides), writes CSV/JSON into an output directory, and finishes
//! with a manifest echoing the config, seeds, and file list — rerunning
//! the same config reproduces every byte.

mod commands;
mod config;
mod emit;

use std::path::PathBuf;
use std::process::ExitCode;

use config::{CliError, Config};

const USAGE: &str = "\
synthcascade — exact experiments for secure cascade channel synthesis

USAGE:
    synthcascade <COMMAND> [MODE] [OPTIONS]

COMMANDS:
    region       [weighted|member|pareto]   rate-region search over auxiliary pairs
    wyner                                   cascade vs single-variable common information
    task-assign  [corners|auxiliary]        committee-selection closed forms
    softcover    [cloud|nested]             codebook output-law mixing sweeps
    protocol                                cascade scheme build + security audit
    audit                                   chi-square audit of sampled episodes

OPTIONS:
    --config PATH      TOML config file
    --set KEY=VALUE    override a config key (repeatable; dotted keys,
                       TOML-typed values, e.g. --set softcover.n=[2,4])
    --out DIR          output directory (default: out)
    --m N              shorthand for --set task-assign.m=N
    --a N              shorthand for --set task-assign.a=N
    --b N              shorthand for --set task-assign.b=N
    -h, --help         print this help

EXIT CODES:
    0 success    2 config error    3 budget exceeded    4 invariant violation
";

/// Commands that take an optional positional mode word, stored under
/// `<command>.mode`.
fn accepts_mode(command: &str) -> bool {
    matches!(command, "region" | "task-assign" | "softcover")
}

fn parse_and_run(args: &[String]) -> Result<(), CliError> {
    let mut command: Option<String> = None;
    let mut mode: Option<String> = None;
    let mut config_path: Option<PathBuf> = None;
    let mut sets: Vec<(String, String)> = Vec::new();
    let mut out_dir = PathBuf::from("out");

    let take = |i: &mut usize, flag: &str| -> Result<String, CliError> {
        *i += 1;
        args.get(*i)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("{flag} requires a value")))
    };

    let mut i = 0;
    while i < args.len() {
        match args[i].as_str() {
            "-h" | "--help" => {
                print!("{USAGE}");
                return Ok(());
            }
            "--config" => config_path = Some(PathBuf::from(take(&mut i, "--config")?)),
            "--out" => out_dir = PathBuf::from(take(&mut i, "--out")?),
            "--set" => {
                let kv = take(&mut i, "--set")?;
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
                sets.push((k.to_string(), v.to_string()));
            }
            "--m" => sets.push(("task-assign.m".into(), take(&mut i, "--m")?)),
            "--a" => sets.push(("task-assign.a".into(), take(&mut i, "--a")?)),
            "--b" => sets.push(("task-assign.b".into(), take(&mut i, "--b")?)),
            flag if flag.starts_with('-') => {
                return Err(CliError::Config(format!("unknown flag `{flag}` (try --help)")));
            }
            word if command.is_none() => command = Some(word.to_string()),
            word if mode.is_none() && accepts_mode(command.as_deref().unwrap_or("")) => {
                mode = Some(word.to_string());
            }
            word => {
                return Err(CliError::Config(format!("unexpected argument `{word}`")));
            }
        }
        i += 1;
    }

    let command = command
        .ok_or_else(|| CliError::Config("missing command (try --help)".into()))?;
    if let Some(m) = mode {
        sets.push((format!("{command}.mode"), m));
    }

    let cfg = Config::load(config_path.as_deref(), &sets)?;
    match command.as_str() {
        "region" => commands::region::run(&cfg, &out_dir),
        "wyner" => commands::wyner::run(&cfg, &out_dir),
        "task-assign" => commands::task::run(&cfg, &out_dir),
        "softcover" => commands::softcover::run(&cfg, &out_dir),
        "protocol" => commands::protocol::run(&cfg, &out_dir),
        "audit" => commands::audit::run(&cfg, &out_dir),
        other => Err(CliError::Config(format!(
            "unknown command `{other}` (region, wyner, task-assign, softcover, protocol, audit)"
        ))),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match parse_and_run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
