use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use homogenize::harness::{run, validate_config, write_outputs};
use homogenize::{catalog_presets, Error};

#[derive(Parser)]
#[command(
    name = "homogenize",
    version,
    about = "Periodic homogenization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides `workers` from the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the coefficient field catalog.
    Presets,
    /// Validate a config file without running it.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<homogenize::harness::ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    validate_config(&text)
}

fn report(err: &Error) {
    match err {
        Error::Config(violations) => {
            eprintln!("invalid config:");
            for v in violations {
                eprintln!("  {v}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for field in catalog_presets() {
                let (lambda, big_lambda) = field.ellipticity_bounds();
                let kind = serde_json::to_string(field.kind()).unwrap_or_default();
                println!("{:<22} bounds [{lambda}, {big_lambda}]  {kind}", field.name);
            }
            ExitCode::SUCCESS
        }
        Command::Check { config } => match load(&config) {
            Ok(cfg) => {
                let names: Vec<&str> = cfg.fields.iter().map(|f| f.name.as_str()).collect();
                println!(
                    "ok: fields [{}], {} epsilons, cell_grid {}, resolution_factor {}",
                    names.join(", "),
                    cfg.epsilons.len(),
                    cfg.cell_grid,
                    cfg.resolution_factor
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                report(&e);
                ExitCode::from(2)
            }
        },
        Command::Run {
            config,
            output_dir,
            workers,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    report(&e);
                    return ExitCode::from(2);
                }
            };
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if let Some(0) = workers {
                eprintln!("error: --workers must be at least 1");
                return ExitCode::from(2);
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            let summary = run(&cfg);
            if let Err(e) = write_outputs(&summary, &cfg.output_dir) {
                report(&e);
                return ExitCode::FAILURE;
            }
            for f in &summary.fields {
                for failure in &f.failures {
                    eprintln!(
                        "{}: stage {} failed{}: {}",
                        failure.field,
                        failure.stage,
                        failure
                            .epsilon
                            .map(|e| format!(" at eps {e}"))
                            .unwrap_or_default(),
                        failure.message
                    );
                }
                for (name, ok) in &f.pass_fail {
                    println!(
                        "{:<20} {:<24} {}",
                        f.field.name,
                        name,
                        if *ok { "pass" } else { "FAIL" }
                    );
                }
            }
            println!("outputs written to {}", cfg.output_dir.display());
            if summary.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
