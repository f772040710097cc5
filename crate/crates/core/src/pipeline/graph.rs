use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{io_err, to_json, write_file, InputSpec, PipelineError, RunConfig};
use crate::nnk::{build_graph, KernelConfig, NNKGraph};
use crate::store::{read_embeddings, EmbeddingSet, Policy, ViewSet, ViewSetIds};

/// One view-set graph as stored by `mgm graph`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub model_id: String,
    pub policy_id: Policy,
    pub view_set: usize,
    pub label: Option<i64>,
    /// (item, view) of every node.
    pub source_ids: Vec<(usize, usize)>,
    pub graph: NNKGraph,
}

pub(crate) fn graph_path(dir: &Path, idx: usize) -> PathBuf {
    dir.join(format!("{idx:06}.json"))
}

pub(crate) fn load_input(input: &InputSpec) -> Result<EmbeddingSet, PipelineError> {
    let set = read_embeddings(&input.path)
        .map_err(|source| PipelineError::Store { path: input.path.clone(), source })?;
    if set.manifest.policy_id != input.policy {
        return Err(PipelineError::Input(format!(
            "{}: manifest policy {} but config says {}",
            input.path.display(),
            set.manifest.policy_id.as_str(),
            input.policy.as_str()
        )));
    }
    Ok(set)
}

pub(crate) fn view_set_ids(input: &InputSpec, set: &EmbeddingSet) -> Result<Vec<ViewSetIds>, PipelineError> {
    set.view_set_ids().map_err(|source| PipelineError::Store { path: input.path.clone(), source })
}

/// Builds the graphs of every view-set in `set` on the current rayon pool,
/// returned in view-set order.
pub(crate) fn build_all(
    input: &InputSpec,
    set: &EmbeddingSet,
    ids: &[ViewSetIds],
    kernel: &KernelConfig,
) -> Result<Vec<(ViewSet, NNKGraph)>, PipelineError> {
    ids.par_iter()
        .enumerate()
        .map(|(idx, vs)| {
            let views = set.materialize(vs);
            let graph = build_graph(&views, kernel).map_err(|source| PipelineError::Graph {
                context: format!("{} view-set {idx}", input.path.display()),
                source,
            })?;
            Ok((views, graph))
        })
        .collect()
}

/// Writes one JSON file per view-set under
/// `<out>/graphs/<model>/<policy>/`, replacing any earlier contents.
/// Returns the number of files written.
pub fn cmd_graph(cfg: &RunConfig) -> Result<usize, PipelineError> {
    let inputs = cfg.check_inputs_exist()?;
    let pool = cfg.thread_pool()?;
    let mut total = 0;
    for input in &inputs {
        let set = load_input(input)?;
        let ids = view_set_ids(input, &set)?;
        let dir = cfg.graphs_dir(&input.model, &input.policy);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let graphs = pool.install(|| build_all(input, &set, &ids, &cfg.kernel))?;
        for (idx, ((views, graph), vs)) in graphs.into_iter().zip(&ids).enumerate() {
            let file = GraphFile {
                model_id: input.model.clone(),
                policy_id: input.policy.clone(),
                view_set: idx,
                label: vs.label,
                source_ids: views.source_ids,
                graph,
            };
            let path = graph_path(&dir, idx);
            write_file(&path, &to_json(&file, &path)?)?;
        }
        log::info!(
            "{} / {}: {} graphs in {}",
            input.model,
            input.policy.as_str(),
            ids.len(),
            dir.display()
        );
        total += ids.len();
    }
    Ok(total)
}

/// Loads stored graphs for `input` when they exist and were built from the
/// same view-sets with the same kernel; `None` means they must be rebuilt.
pub(crate) fn load_stored(
    cfg: &RunConfig,
    input: &InputSpec,
    ids: &[ViewSetIds],
) -> Result<Option<Vec<NNKGraph>>, PipelineError> {
    let dir = cfg.graphs_dir(&input.model, &input.policy);
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut graphs = Vec::with_capacity(ids.len());
    for (idx, vs) in ids.iter().enumerate() {
        let path = graph_path(&dir, idx);
        let Ok(text) = std::fs::read(&path) else {
            log::warn!("{} missing, rebuilding graphs", path.display());
            return Ok(None);
        };
        let file: GraphFile = serde_json::from_slice(&text)
            .map_err(|source| PipelineError::Json { path: path.clone(), source })?;
        if file.source_ids != vs.source_ids || file.graph.config != cfg.kernel {
            log::warn!("{} is stale, rebuilding graphs", path.display());
            return Ok(None);
        }
        graphs.push(file.graph);
    }
    if graph_path(&dir, ids.len()).exists() {
        log::warn!("{} holds extra graphs, rebuilding", dir.display());
        return Ok(None);
    }
    Ok(Some(graphs))
}
