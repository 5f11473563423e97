use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use presence_cli::pipeline::{self, RenderSelection, Split};
use presence_cli::{experiment, CliError, Layout, RunConfig, StageSelection};
use presence_train::Dataset;

#[derive(Parser)]
#[command(name = "presence", version, about = "Wi-Fi CSI presence detection: simulate, featurize, train, evaluate")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root (dumps/, features/, model/, eval/, render/).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate labelled CSI dumps for both splits plus calibration.
    Gen,
    /// Turn dumps into RP / ratio feature datasets.
    Featurize,
    /// Train one stage or all three.
    Train {
        #[arg(long, default_value = "all")]
        stage: StageSelection,
    },
    /// Evaluate the trained model, or run repeated full trials.
    Eval {
        /// Run this many independent trials (with ablations) instead.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Write the intermediate images of one window per series.
    Render {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Window end frame index within each series (default: last).
        #[arg(long)]
        index: Option<usize>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    let layout = Layout::new(&cli.out);
    match cli.command {
        Command::Gen => {
            let manifest = pipeline::generate(&config, &layout.dumps())?;
            println!("wrote {} series to {}", manifest.entries.len(), layout.dumps().display());
        }
        Command::Featurize => {
            let summary = pipeline::featurize(&config, &layout.dumps(), &layout.features())?;
            println!("{} train / {} test records, gamma = {}", summary.train_records, summary.test_records, summary.gamma);
        }
        Command::Train { stage } => {
            let rows = pipeline::train(&config, &layout.features(), &layout.model(), stage)?;
            if let Some(last) = rows.last() {
                println!("stage {} epoch {}: loss {:.5}", last.stage, last.epoch, last.loss);
            }
        }
        Command::Eval { trials: None } => {
            let report = pipeline::evaluate(&config, &layout.features(), &layout.model(), &layout.eval())?;
            println!("{}", serde_json::to_string_pretty(&report).context("serializing metrics")?);
        }
        Command::Eval { trials: Some(n) } => {
            let train = Dataset::read(&layout.features().join("train.crds")).map_err(CliError::from)?;
            let test = Dataset::read(&layout.features().join("test.crds")).map_err(CliError::from)?;
            let report = experiment::run_trials(&config, &train, &test, n)?;
            std::fs::create_dir_all(layout.eval()).map_err(CliError::from)?;
            let text = serde_json::to_string_pretty(&report).context("serializing trials")? + "\n";
            std::fs::write(layout.eval().join("trials.json"), &text).map_err(CliError::from)?;
            print!("{text}");
        }
        Command::Render { split, index } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let files = pipeline::render(&config, &layout.dumps(), &layout.render(), &RenderSelection { split, index })?;
            println!("wrote {} images to {}", files.len(), layout.render().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
