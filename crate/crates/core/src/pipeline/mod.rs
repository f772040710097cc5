//! File-based commands: `synth`, `graph`, `metrics` and `analyze`.
//!
//! Commands only talk to each other through the output directory, so each
//! can be rerun on its own.

mod analyze;
mod config;
mod graph;
mod metrics;
mod report;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use analyze::{cmd_analyze, read_accuracy_csv, read_features_csv, AnalysisReport};
pub use config::{AnalyzeOptions, InputSpec, MetricsOptions, Overrides, RunConfig};
pub use graph::{cmd_graph, GraphFile};
pub use metrics::{cmd_metrics, model_metrics, ModelMetrics, PolicyDiagnostics};
pub use synth::{SynthKind, SynthSpec};

use crate::metrics::MetricError;
use crate::nnk::NnkError;
use crate::stats::StatsError;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("missing input files:\n  {}", .0.join("\n  "))]
    MissingInputs(Vec<String>),
    #[error("{}: {source}", path.display())]
    Store { path: PathBuf, source: StoreError },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{context}: {source}")]
    Graph { context: String, source: NnkError },
    #[error("{context}: {source}")]
    Metric { context: String, source: MetricError },
    #[error("{context}: {source}")]
    Stats { context: String, source: StatsError },
    #[error("{0}")]
    Input(String),
}

impl PipelineError {
    /// 1 for bad or missing input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Graph { source, .. } => match source {
                NnkError::Solver { .. } => 2,
                _ => 1,
            },
            PipelineError::Metric { source, .. } => match source {
                MetricError::MissingFeature(_) | MetricError::ItemAbsent { .. } => 1,
                _ => 2,
            },
            PipelineError::Stats { source, .. } => match source {
                StatsError::NonConvergence { .. } | StatsError::NonFinite(_) => 2,
                _ => 1,
            },
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to `path`, creating parent directories.
pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T, path: &std::path::Path) -> Result<Vec<u8>, PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|source| PipelineError::Json { path: path.to_path_buf(), source })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes every embedding set described by `cfg.synth`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    if cfg.synth.is_empty() {
        return Err(PipelineError::Config("no [[synth]] entries".into()));
    }
    let written = synth::write_all(&cfg.synth, cfg.seed, &cfg.embeddings_dir())?;
    log::info!("wrote {} embedding files to {}", written.len(), cfg.embeddings_dir().display());
    Ok(written)
}
