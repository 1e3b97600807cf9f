use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drivelime::pipeline::{run_stage, with_threads, Context, PipelineConfig, Stage};
use drivelime::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "drivelime", version, about = "Driver-behaviour classification with explanation-guided feature selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline configuration (JSON). Defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Split before oversampling and scaling.
    #[arg(long, global = true)]
    leak_safe: bool,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate the synthetic dataset (data.csv).
    Synth,
    /// Load and preprocess; write scaler, encoding and split indices.
    Prep,
    /// Evaluate every model on all splits; save the best fold-0 model.
    Train,
    /// Explain the best model on sampled test instances.
    Explain,
    /// Aggregate explanations into a ranking and chart.
    Select,
    /// Before/after comparison report.
    Compare,
    /// Full pipeline with every artifact.
    Run,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Synth => Stage::Synth,
            Command::Prep => Stage::Prep,
            Command::Train => Stage::Train,
            Command::Explain => Stage::Explain,
            Command::Select => Stage::Select,
            Command::Compare => Stage::Compare,
            Command::Run => Stage::Run,
        }
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Internal => 3,
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| match e {
            Error::Read { path, source } => Error::Config(vec![format!("cannot read {}: {source}", path.display())]),
            e => e,
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.leak_safe {
        config.leak_safe = true;
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    let stage = cli.command.stage();
    let out: &Path = &cli.out;
    let (artifacts, report) = with_threads(cli.threads, || {
        let ctx = Context::<f64>::load(config)?;
        run_stage(&ctx, stage)
    })??;
    artifacts.publish(out)?;
    for name in artifacts.names() {
        println!("wrote {}", out.join(name).display());
    }
    if let Some(r) = report {
        let best = r.best();
        println!(
            "best model {}: accuracy {:.3} before, {:.3} after selecting {} features",
            r.best_model,
            best.before.accuracy,
            best.after.accuracy,
            r.selected_features.len()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
