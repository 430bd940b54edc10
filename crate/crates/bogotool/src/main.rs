use std::io::Write;
use std::process::ExitCode;

use bogotool::cli::{self, ParseError};
use bogotool::commands::{self, Usage};

/// Number of worker threads; all cores when unset.
const THREADS_VAR: &str = "BOGOTOOL_THREADS";

fn main() -> ExitCode {
    let cli = match cli::parse(std::env::args_os()) {
        Ok(c) => c,
        Err(ParseError::Clap(e)) => e.exit(),
        Err(ParseError::Config(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let threads = match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        };
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let rep = match commands::run(&cli) {
        Ok(r) => r,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(3);
        }
    };
    let stdout = std::io::stdout();
    if let Err(e) = rep.write(cli.out.as_deref(), &mut stdout.lock()) {
        eprintln!("error: {e:#}");
        return ExitCode::from(3);
    }
    let _ = rep.summary(&mut std::io::stderr().lock());
    let _ = std::io::stderr().flush();
    if rep.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
