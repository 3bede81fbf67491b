use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use resilient_lqr::benchmark::{acceptance_table, format_table};
use resilient_lqr::scenario::{
    builtin_scenario, run_scenario, Phase, ScenarioConfig, ScenarioError, BUILTIN_SCENARIOS,
};
use resilient_lqr::Error;

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rlqr",
    version,
    about = "Learning-based LQR under eavesdropping and covert attack"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a JSON config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Run a built-in scenario, or print its config with --print.
    Builtin {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(BUILTIN_SCENARIOS))]
        name: String,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        print: bool,
    },
    /// Run the built-in experiments and print the acceptance table.
    Benchmark {
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_INVALID,
    }
}

fn scenario_exit(e: &ScenarioError) -> u8 {
    match (e.phase, &e.source) {
        (_, Error::Io(_)) => EXIT_IO,
        (Phase::Config, _) => EXIT_INVALID,
        (_, src) => exit_code(src),
    }
}

fn execute(mut cfg: ScenarioConfig, out_dir: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    if let Some(dir) = out_dir {
        cfg.output_dir = Some(dir);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    match run_scenario(&cfg) {
        Ok(run) => {
            println!("{}", run.report.to_json());
            if let Some(dir) = &cfg.output_dir {
                info!(
                    "wrote {} files to {}",
                    run.report.files.len(),
                    dir.display()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(scenario_exit(&e))
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(match e {
            Error::Io(_) => EXIT_IO,
            _ => EXIT_INVALID,
        })
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out_dir,
            seed,
        } => match load(&config) {
            Ok(cfg) => execute(cfg, out_dir, seed),
            Err(code) => code,
        },
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(cfg) => cfg,
                Err(code) => return code,
            };
            match cfg.validate() {
                Ok(p) => {
                    println!(
                        "ok: {} ({} states, {} inputs, mode {:?})",
                        cfg.name,
                        p.model.n(),
                        p.model.m(),
                        cfg.learner.mode
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(match e {
                        Error::Io(_) => EXIT_IO,
                        _ => EXIT_INVALID,
                    })
                }
            }
        }
        Command::Builtin {
            name,
            out_dir,
            seed,
            print,
        } => {
            let cfg = builtin_scenario(&name).expect("name checked by clap");
            if print {
                println!("{}", cfg.to_json());
                return ExitCode::SUCCESS;
            }
            execute(cfg, out_dir, seed)
        }
        Command::Benchmark { seed } => match acceptance_table(seed) {
            Ok(rows) => {
                print!("{}", format_table(&rows));
                if rows.iter().all(|r| r.passed) {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_NUMERICAL)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
    }
}
