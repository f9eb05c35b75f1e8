use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use roundabout_dz::io::RunConfig;
use roundabout_dz::pipeline::{run_command, Command, RunPaths};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Step {
    Simulate,
    Mine,
    TrainDetector,
    Detect,
    TrainForecaster,
    Forecast,
    Evaluate,
    ManeuverStudy,
    ExportRoc,
    ExportDeviations,
}

/// Roundabout dilemma-zone toolkit. Log verbosity is read from DZ_LOG.
#[derive(Debug, Parser)]
#[command(name = "dzkit", version)]
struct Args {
    #[arg(value_enum)]
    command: Step,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory holding the step's inputs (defaults to --output).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    output: PathBuf,
    /// Model file to read (defaults to the standard name in the input directory).
    #[arg(long)]
    model: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DZ_LOG", "warn")).init();
    let args = Args::parse();
    let command: Command = args
        .command
        .to_possible_value()
        .expect("every step has a name")
        .get_name()
        .parse()
        .expect("step names match pipeline commands");
    let run = || {
        let mut config = match &args.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = args.seed {
            config.reseed(seed);
        }
        let paths = RunPaths {
            input: args.input.clone(),
            output: args.output.clone(),
            model: args.model.clone(),
        };
        let base = args.config.as_deref().and_then(|p| p.parent());
        run_command(command, &config, &paths, base)
    };
    match run() {
        Ok(outcome) => {
            for line in outcome.summary {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
