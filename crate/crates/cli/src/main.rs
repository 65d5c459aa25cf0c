use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kato_cli::emit::{emit, Format};
use kato_cli::{exit, load_scenario, run, CliError, RunOptions};
use kato_core::zoo::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "kato", version, about = "Honesty diagnostics for minimal substochastic semigroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its report.
    Run {
        scenario: PathBuf,
        /// Output directory. Without it, JSON goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Worker threads (overrides KATO_THREADS).
        #[arg(long)]
        threads: Option<usize>,
        /// Omit timing so that repeated runs are byte-identical.
        #[arg(long)]
        stable_output: bool,
        /// Override the scenario's λ list.
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        /// Override the scenario's truncation ladder.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
    },
    /// List the built-in models.
    ListModels,
    /// Parse and validate scenarios without running them.
    Validate {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("KATO_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| CliError::Usage(format!("KATO_THREADS must be a positive integer, got '{v}'"))),
        _ => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::ListModels => {
            for m in ModelKind::ALL {
                println!("{:<18} {}", m.id(), m.description());
                println!("{:<18} parameters: {}", "", m.parameters());
            }
            Ok(exit::OK)
        }
        Command::Validate { scenarios } => {
            let mut code = exit::OK;
            for p in &scenarios {
                match load_scenario(p) {
                    Ok(cfg) => println!("ok {} ({})", p.display(), cfg.model.id()),
                    Err(e) => {
                        eprintln!("error: {e}");
                        code = exit::CONFIG;
                    }
                }
            }
            Ok(code)
        }
        Command::Run {
            scenario,
            out,
            format,
            threads,
            stable_output,
            lambda,
            ladder,
        } => {
            let mut cfg = load_scenario(&scenario)?;
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            if let Some(l) = ladder {
                cfg.ladder = l;
            }
            cfg.validate().map_err(|e| CliError::Config {
                path: scenario.display().to_string(),
                message: e.to_string(),
            })?;
            if threads == Some(0) {
                return Err(CliError::Usage("--threads must be positive".into()));
            }
            let opts = RunOptions {
                threads: match threads {
                    Some(t) => Some(t),
                    None => threads_from_env()?,
                },
                stable_output,
            };
            let report = run(&cfg, &opts)?;
            if let Some(text) = emit(&report, format, out.as_deref())? {
                print!("{text}");
            }
            let v = &report.verdict;
            if let Some(o) = v.overall {
                eprintln!("verdict: {o:?} (expected: {:?})", v.expected);
            }
            for c in &report.cells {
                for e in &c.errors {
                    eprintln!("error at lambda = {}, N = {}: {e}", c.lambda, c.truncation);
                }
            }
            Ok(report.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                CliError::Core(_) => exit::RUNTIME,
                _ => exit::CONFIG,
            };
            ExitCode::from(code as u8)
        }
    }
}
