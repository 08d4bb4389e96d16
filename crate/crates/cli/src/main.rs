mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use commands::Failure;

const USAGE_EXIT: u8 = 2;

/// Exit status per runtime error category. Usage errors use 2.
fn exit_code(category: &str) -> u8 {
    match category {
        "io" => 3,
        "bad_data" => 4,
        "invalid_input" => 5,
        "insufficient_data" => 6,
        "instability" => 7,
        "singular" => 8,
        "sampling_failure" => 9,
        "selection_failure" => 10,
        "benchmark_failure" => 11,
        _ => 1,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("CGP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("CGP_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let body: Vec<&str> = msg.lines().take_while(|l| !l.starts_with("Usage:")).collect();
            eprintln!("error: usage: {}", one_line(body.join(" ").trim_start_matches("error: ")));
            return ExitCode::from(USAGE_EXIT);
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: usage: {}", one_line(&msg));
        return ExitCode::from(USAGE_EXIT);
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: usage: {}", one_line(&msg));
            ExitCode::from(USAGE_EXIT)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {}: {}", e.category(), one_line(&e.to_string()));
            ExitCode::from(exit_code(e.category()))
        }
    }
}
