//! `cmdr`: serve sessions, run ladder batches, replay logs, validate files.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, bad config, replay
//! mismatch), 2 usage error. Failures print exactly one line to stderr.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// A command failure: exit code plus the one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn runtime(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

fn one_line(s: &str) -> String {
    s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let head: String = text.split("\n\n").next().unwrap_or("invalid arguments").to_string();
            eprintln!("cmdr: {}", one_line(head.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    let (name, result) = match cli.command {
        Command::Serve(a) => ("serve", commands::serve(a)),
        Command::Eval(a) => ("eval", commands::eval(a)),
        Command::Replay(a) => ("replay", commands::replay(a)),
        Command::Validate(a) => ("validate", commands::validate(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("cmdr {name}: {}", one_line(&f.message));
            ExitCode::from(f.code)
        }
    }
}
