//! Command-line front end: `run`, `report` and `validate`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shiftleak::experiment::{cmd_report, cmd_run, cmd_run_manifest, RunInput, StudyConfig, StudyPreset};
use shiftleak::Error;

#[derive(Parser)]
#[command(name = "shiftleak", version, about = "Passive detection of data distribution shifts in federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study (or replay one run from its manifest.json) and write telemetry.
    Run(RunArgs),
    /// Aggregate the repeats under a telemetry directory into <DIR>/report.
    Report {
        /// Output directory of a previous `run`.
        dir: PathBuf,
    },
    /// Check a config against every invariant without running it.
    Validate(StudyArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// Study config (TOML or JSON). Fields override the preset's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// centralized, layerwise, sensitivity, scalability or custom.
    #[arg(long)]
    preset: Option<String>,
    /// Base seed: model = SEED, data = SEED + 1, order = SEED + 2.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of repeats per sweep point.
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads for sweep points and repeats.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_input(args: &StudyArgs) -> Result<RunInput, Failure> {
    let preset = args.preset.as_deref().map(str::parse::<StudyPreset>).transpose()?;
    let mut input = match (&args.config, preset) {
        (Some(path), preset) => RunInput::load(path, preset)?,
        (None, Some(preset)) => RunInput::Study(StudyConfig::preset(preset)),
        (None, None) => return Err(Failure::Config("pass --config or --preset".into())),
    };
    if let RunInput::Study(study) = &mut input {
        if let Some(seed) = args.seed {
            study.set_seed(seed);
        }
        if let Some(repeats) = args.repeats {
            study.repeats = repeats;
        }
    } else if args.seed.is_some() || args.repeats.is_some() || preset.is_some() {
        return Err(Failure::Config("a run manifest is replayed as is; drop --preset, --seed and --repeats".into()));
    }
    Ok(input)
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    match load_input(&args.study)? {
        RunInput::Study(study) => {
            let summaries = cmd_run(&study, &args.out, args.parallel)?;
            for s in summaries {
                println!("{}/run_{}: {}", s.point, s.repeat, s.verdict);
            }
        }
        RunInput::Manifest(m) => {
            let s = cmd_run_manifest(&m, &args.out)?;
            println!("{}/run_{}: {}", s.point, s.repeat, s.verdict);
        }
    }
    println!("telemetry written to {}", args.out.display());
    Ok(())
}

fn report(dir: &Path) -> Result<(), Failure> {
    let summary = cmd_report(dir)?;
    for line in &summary.verdicts {
        println!("{line}");
    }
    println!(
        "{} runs over {} points summarized in {}",
        summary.runs,
        summary.points,
        summary.out_dir.display()
    );
    Ok(())
}

fn validate(args: &StudyArgs) -> Result<(), Failure> {
    let study = match load_input(args)? {
        RunInput::Study(s) => s,
        RunInput::Manifest(m) => m.study,
    };
    let violations = study.violations();
    if violations.is_empty() {
        println!("ok");
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure::Config(format!("{} violation(s)", violations.len())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Report { dir } => report(dir),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
