use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use triquad_cli::{error_json, run, usage_error_json, Command, JobConfig, EXIT_ERROR};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    Analyze,
    Trace,
    Verify,
    Selftest,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Analyze => Command::Analyze,
            CommandArg::Trace => Command::Trace,
            CommandArg::Verify => Command::Verify,
            CommandArg::Selftest => Command::Selftest,
        }
    }
}

/// Bounds on the total Betti number of the intersection of three real quadrics.
///
/// Exit codes: 0 success or PASS, 1 error, 2 FAIL verdict, 3 result not authoritative.
#[derive(Debug, Parser)]
#[command(name = "triquad", version)]
struct Args {
    command: CommandArg,
    /// Pencil as JSON: {"n": int, "quadrics": [matrix, ...], "comment": string}
    #[arg(long)]
    input: Option<PathBuf>,
    /// Icosphere subdivision depth, 0 to 10.
    #[arg(long, default_value_t = triquad::pipeline::DEFAULT_DEPTH)]
    depth: usize,
    /// Fixed perturbation size instead of the stabilization search.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finest oracle subdivision level (default 8, or 9 for n = 4).
    #[arg(long)]
    oracle_res: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{}", usage_error_json(&e.to_string()));
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let config = JobConfig {
        command: args.command.into(),
        input: args.input,
        depth: args.depth,
        epsilon: args.epsilon,
        seed: args.seed,
        oracle_res: args.oracle_res,
        out: args.out,
    };
    let (code, err) = run(&config);
    if let Some(e) = err {
        eprint!("{}", error_json(config.command, &e));
    }
    ExitCode::from(code as u8)
}
