use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use dynring::experiment::{output_paths, run_and_write, ExperimentConfig};
use dynring::verify::verify_lemmas;
use dynring::TraceError;

#[derive(Parser)]
#[command(
    name = "dynring",
    version,
    about = "Exploration of dynamic rings by three robots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory for results unless the config names one.
        #[arg(long, env = "DYNRING_OUT_DIR", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Certify the round bounds on small rings by exhaustive search.
    Verify {
        #[arg(long, default_value_t = 6)]
        max_n: usize,
        #[arg(long, default_value_t = 3)]
        max_k: u8,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Re-run a trace and check it round by round.
    Replay { trace: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.downcast_ref::<std::io::Error>()
        .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Run { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let outcome = run_and_write(&cfg, &out_dir)?;
            writeln!(
                out,
                "{:>8} {:>3} {:>10} {:>7} {:>9} {:>14} {:>12}",
                "n", "k", "adversary", "trials", "success", "mean rounds", "max rounds"
            )?;
            for p in &outcome.summary {
                let mean = p
                    .rounds_termination
                    .mean
                    .map_or("-".into(), |m| format!("{m:.1}"));
                let max = p
                    .rounds_termination
                    .max
                    .map_or("-".into(), |m| m.to_string());
                writeln!(
                    out,
                    "{:>8} {:>3} {:>10} {:>7} {:>9.3} {:>14} {:>12}",
                    p.n, p.k, p.adversary, p.trials, p.success_fraction, mean, max
                )?;
            }
            let (csv, summary, _) = output_paths(&cfg, &out_dir);
            writeln!(out, "wrote {} and {}", csv.display(), summary.display())?;
            for t in &outcome.traces {
                writeln!(out, "trace {}", t.display())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { max_n, max_k, json } => {
            let report = verify_lemmas(max_n, max_k)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                for check in &report.checks {
                    writeln!(out, "{check}")?;
                }
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Replay { trace } => match dynring::replay_file(&trace) {
            Ok(result) => {
                writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
                Ok(ExitCode::SUCCESS)
            }
            Err(e @ TraceError::Divergence { .. }) => {
                eprintln!("error: replaying {}: {e}", trace.display());
                Ok(ExitCode::FAILURE)
            }
            Err(e) => Err(e).with_context(|| format!("replaying {}", trace.display())),
        },
    }
}
