use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgm_core::pipeline::{self, Overrides, PipelineError, RunConfig};
use mgm_core::store::Policy;
use mgm_core::Normalization;

#[derive(Parser)]
#[command(name = "mgm", version, about = "Manifold graph metrics for embedding sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic embedding sets described by the config
    Synth(Common),
    /// Build one NNK graph per view-set
    Graph(Common),
    /// Compute metric distributions and feature vectors
    Metrics(Common),
    /// Run the model-level analyses on features and accuracies
    Analyze(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to one policy
    #[arg(long)]
    policy: Option<String>,
    #[arg(long, value_parser = ["paper", "min"])]
    normalization: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep per-sample values in metrics.json
    #[arg(long)]
    per_sample: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            policy: self.policy.as_deref().map(Policy::from),
            normalization: self.normalization.as_deref().map(|n| n.parse::<Normalization>().expect("checked by clap")),
            jobs: self.jobs,
            seed: self.seed,
            per_sample: self.per_sample,
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (common, cmd) = match &cli.command {
        Command::Synth(c) => (c, "synth"),
        Command::Graph(c) => (c, "graph"),
        Command::Metrics(c) => (c, "metrics"),
        Command::Analyze(c) => (c, "analyze"),
    };
    let cfg = RunConfig::load(&common.config, &common.overrides())?;
    match cmd {
        "synth" => {
            let files = pipeline::cmd_synth(&cfg)?;
            println!("wrote {} embedding files", files.len());
        }
        "graph" => {
            let n = pipeline::cmd_graph(&cfg)?;
            println!("wrote {n} graph files");
        }
        "metrics" => {
            let models = pipeline::cmd_metrics(&cfg)?;
            println!("computed metrics for {} models", models.len());
        }
        _ => {
            let report = pipeline::cmd_analyze(&cfg)?;
            println!("analyzed {} models, {} tasks", report.models.len(), report.tasks.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MGM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
