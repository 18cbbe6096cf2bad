use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use treecode_cli::{
    cmd_audit, cmd_bound, cmd_build, cmd_search, cmd_selftest, cmd_verify, exit_code_for, Format,
    Outcome, RunConfig,
};
use treecode_core::code::Caps;

#[derive(Parser)]
#[command(
    name = "treecode",
    version,
    about = "Build, certify and bound small tree codes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for randomized commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Largest message space enumerated, in bits.
    #[arg(long, global = true)]
    cap: Option<u32>,
    /// Largest number of pair-position evaluations per check.
    #[arg(long, global = true)]
    max_evaluations: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Build a code or partition from a JSON recipe.
    Build { input: PathBuf },
    /// Run a certifier: {"code": ..., "check": {"property": ...}}.
    Verify { input: PathBuf },
    /// Evaluate a bound formula.
    Bound {
        #[arg(long)]
        formula: String,
        /// JSON object of parameters, or @path to read them from a file.
        #[arg(long)]
        params: String,
    },
    /// Audit a code against a partition: {"code", "partition", "ledger"?}.
    Audit { input: PathBuf },
    /// Search for a tree code: {"n", "sigma_out", "delta", "trials"?, "method"?}.
    Search { input: PathBuf },
    /// Run the built-in acceptance checks.
    Selftest,
}

/// Reads a file, or stdin for `-`.
fn read_input(path: &PathBuf) -> anyhow::Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn run(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<Result<Outcome, treecode_core::Error>> {
    Ok(match &cli.command {
        Command::Build { input } => cmd_build(&read_input(input)?, cfg),
        Command::Verify { input } => cmd_verify(&read_input(input)?, cfg),
        Command::Bound { formula, params } => {
            let params = match params.strip_prefix('@') {
                Some(path) => read_input(&PathBuf::from(path))?,
                None => params.clone(),
            };
            cmd_bound(formula, &params)
        }
        Command::Audit { input } => cmd_audit(&read_input(input)?, cfg),
        Command::Search { input } => cmd_search(&read_input(input)?, cfg),
        Command::Selftest => Ok(cmd_selftest(cfg)),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let mut caps = Caps::default();
    if let Some(bits) = cli.cap {
        caps.max_message_bits = bits;
    }
    if let Some(evals) = cli.max_evaluations {
        caps.max_evaluations = evals;
    }
    let cfg = RunConfig {
        seed: cli.seed,
        caps,
        format: match cli.format {
            FormatArg::Json => Format::Json,
            FormatArg::Text => Format::Text,
        },
    };
    match run(&cli, &cfg) {
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
        Ok(Ok(outcome)) => {
            let text = outcome.render(cfg.format);
            let written = match &cli.output {
                Some(path) => {
                    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
                }
                None => io::stdout().write_all(text.as_bytes()).map_err(Into::into),
            };
            if let Err(e) = written {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
    }
}
