use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grangernet::pipeline::{report_text, run_all, run_stage, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "grangernet", version, about = "Event-level spatio-temporal forecasting with Granger nets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one pipeline stage, or `all` of them in order.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// ingest, quantize, sweep, fit, predict, evaluate, riskmap, perturb,
        /// diffusion, report or all
        #[arg(long)]
        stage: String,
    },
    /// Build the summary report (running any missing stages) and print it.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> grangernet::Result<()> {
    match cli.command {
        Command::Run { config, stage } => {
            let cfg = RunConfig::load(&config)?;
            let outcomes = if stage == "all" {
                run_all(&cfg)?
            } else {
                vec![run_stage(&cfg, stage.parse::<Stage>()?)?]
            };
            for o in outcomes {
                println!("{}: {}", o.stage, if o.skipped { "up to date" } else { "done" });
            }
        }
        Command::Report { config } => {
            let cfg = RunConfig::load(&config)?;
            run_all(&cfg)?;
            print!("{}", report_text(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
