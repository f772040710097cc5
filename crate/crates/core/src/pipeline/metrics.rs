use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::graph::{build_all, load_input, load_stored, view_set_ids};
use super::{to_json, write_file, InputSpec, PipelineError, RunConfig};
use crate::metrics::{
    aggregate, cross_affinity, feature_vector, graph_metrics, GraphMetrics, MetricDistribution,
    Normalization, AFFINITY, EQUIVARIANCE, NEIGHBORS,
};
use crate::nnk::{KernelConfig, NNKGraph};
use crate::store::{Policy, ViewSet};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyDiagnostics {
    pub policy: Policy,
    /// Number of graphs (view-sets); equals N for augmentation policies.
    pub graphs: usize,
    pub nodes_per_graph: usize,
    pub isolated_nodes: usize,
    pub skipped_edges: usize,
    pub from_graph_files: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelMetrics {
    pub model_id: String,
    pub distributions: Vec<MetricDistribution>,
    /// The 27-entry feature vector; absent when a standard policy is missing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<(String, f64)>>,
    pub diagnostics: Vec<PolicyDiagnostics>,
    /// Items whose cross affinity was undefined (degenerate subspace).
    pub skipped_cross_items: usize,
}

#[derive(Serialize)]
struct MetricsReport<'a> {
    normalization: Normalization,
    kernel: &'a KernelConfig,
    models: &'a [ModelMetrics],
}

struct PolicyGraphs {
    n_items: usize,
    views: Vec<ViewSet>,
    graphs: Vec<NNKGraph>,
}

impl PolicyGraphs {
    /// View-set holding (item, 0).
    fn locate(&self, item: usize) -> Option<usize> {
        self.views.iter().position(|v| v.position_of((item, 0)).is_some())
    }
}

fn metric_err(context: String) -> impl FnOnce(crate::metrics::MetricError) -> PipelineError {
    move |source| PipelineError::Metric { context, source }
}

fn policy_graphs(
    cfg: &RunConfig,
    input: &InputSpec,
) -> Result<(PolicyGraphs, bool), PipelineError> {
    let set = load_input(input)?;
    let ids = view_set_ids(input, &set)?;
    match load_stored(cfg, input, &ids)? {
        Some(graphs) => {
            let views = ids.iter().map(|vs| set.materialize(vs)).collect();
            Ok((PolicyGraphs { n_items: set.n_items, views, graphs }, true))
        }
        None => {
            let (views, graphs) = build_all(input, &set, &ids, &cfg.kernel)?.into_iter().unzip();
            Ok((PolicyGraphs { n_items: set.n_items, views, graphs }, false))
        }
    }
}

/// Metric distributions, feature vector and diagnostics of one model.
/// Runs on the current rayon pool.
pub fn model_metrics(
    cfg: &RunConfig,
    model: &str,
    inputs: &[InputSpec],
) -> Result<ModelMetrics, PipelineError> {
    let mut distributions = Vec::new();
    let mut diagnostics = Vec::new();
    let mut by_policy: BTreeMap<Policy, PolicyGraphs> = BTreeMap::new();
    for input in inputs {
        let (pg, from_files) = policy_graphs(cfg, input)?;
        let per_graph: Vec<GraphMetrics> = pg
            .graphs
            .par_iter()
            .zip(&pg.views)
            .enumerate()
            .map(|(idx, (g, v))| {
                graph_metrics(g, v, cfg.normalization)
                    .map_err(metric_err(format!("{model} / {} view-set {idx}", input.policy.as_str())))
            })
            .collect::<Result<_, _>>()?;

        let nodes = || per_graph.iter().flat_map(|m| m.nodes.iter().flatten());
        let policies = std::slice::from_ref(&input.policy);
        let context = format!("{model} / {}", input.policy.as_str());
        distributions.push(
            aggregate(nodes().map(|n| n.diameter).collect(), EQUIVARIANCE, policies)
                .map_err(metric_err(context.clone()))?,
        );
        distributions.push(
            aggregate(
                per_graph.iter().flat_map(|m| m.edges.iter().map(|e| e.affinity)).collect(),
                AFFINITY,
                policies,
            )
            .map_err(metric_err(context.clone()))?,
        );
        distributions.push(
            aggregate(nodes().map(|n| n.intrinsic_dim as f64).collect(), NEIGHBORS, policies)
                .map_err(metric_err(context))?,
        );
        diagnostics.push(PolicyDiagnostics {
            policy: input.policy.clone(),
            graphs: pg.graphs.len(),
            nodes_per_graph: pg.graphs.iter().map(NNKGraph::len).max().unwrap_or(0),
            isolated_nodes: per_graph.iter().map(|m| m.isolated_nodes).sum(),
            skipped_edges: per_graph.iter().map(|m| m.skipped_edges).sum(),
            from_graph_files: from_files,
        });
        if by_policy.insert(input.policy.clone(), pg).is_some() {
            return Err(PipelineError::Config(format!(
                "{model}: policy {} listed twice",
                input.policy.as_str()
            )));
        }
    }

    let mut skipped_cross_items = 0;
    for (sem_p, aug_p) in &cfg.metrics.cross_terms {
        let (sem, aug) = match (by_policy.get(sem_p), by_policy.get(aug_p)) {
            (Some(s), Some(a)) => (s, a),
            (None, None) => continue,
            (s, _) => {
                let missing = if s.is_none() { sem_p } else { aug_p };
                return Err(PipelineError::Input(format!(
                    "{model}: cross term {}-{} needs policy {}",
                    sem_p.as_str(),
                    aug_p.as_str(),
                    missing.as_str()
                )));
            }
        };
        if sem.n_items != aug.n_items {
            return Err(PipelineError::Input(format!(
                "{model}: {} has {} items but {} has {}",
                sem_p.as_str(),
                sem.n_items,
                aug_p.as_str(),
                aug.n_items
            )));
        }
        let values: Vec<Option<f64>> = (0..sem.n_items)
            .into_par_iter()
            .map(|item| {
                let (Some(s), Some(a)) = (sem.locate(item), aug.locate(item)) else {
                    return None;
                };
                cross_affinity(
                    (&aug.graphs[a], &aug.views[a]),
                    (&sem.graphs[s], &sem.views[s]),
                    item,
                    cfg.normalization,
                )
                .ok()
            })
            .collect();
        skipped_cross_items += values.iter().filter(|v| v.is_none()).count();
        let pair = [sem_p.clone(), aug_p.clone()];
        distributions.push(
            aggregate(values.into_iter().flatten().collect(), AFFINITY, &pair)
                .map_err(metric_err(format!("{model} / cross term")))?,
        );
    }

    let features = feature_vector(&distributions).ok();
    if !cfg.metrics.per_sample {
        distributions.iter_mut().for_each(|d| d.values.clear());
    }
    Ok(ModelMetrics {
        model_id: model.to_string(),
        distributions,
        features,
        diagnostics,
        skipped_cross_items,
    })
}

fn csv_bytes(
    path: &std::path::Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>, PipelineError> {
    let csv_err = |source| PipelineError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

pub(crate) fn write_csv(
    path: &std::path::Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), PipelineError> {
    write_file(path, &csv_bytes(path, header, rows)?)
}

/// Computes metrics for every configured model and writes `metrics.csv`,
/// `metrics.json` and `features.csv` to the output directory.
pub fn cmd_metrics(cfg: &RunConfig) -> Result<Vec<ModelMetrics>, PipelineError> {
    let inputs = cfg.check_inputs_exist()?;
    let mut models: Vec<(String, Vec<InputSpec>)> = Vec::new();
    for input in inputs {
        match models.iter_mut().find(|(m, _)| *m == input.model) {
            Some((_, list)) => list.push(input),
            None => models.push((input.model.clone(), vec![input])),
        }
    }
    let pool = cfg.thread_pool()?;
    let results = models
        .iter()
        .map(|(model, list)| {
            let m = pool.install(|| model_metrics(cfg, model, list))?;
            log::info!("{model}: {} distributions", m.distributions.len());
            Ok(m)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let path = cfg.out.join("metrics.csv");
    write_csv(
        &path,
        &["model_id", "policy", "metric", "mean", "spread", "count"],
        results.iter().flat_map(|m| {
            m.distributions.iter().map(|d| {
                vec![
                    m.model_id.clone(),
                    d.policy_key(),
                    d.metric.clone(),
                    d.mean.to_string(),
                    d.spread.to_string(),
                    d.count.to_string(),
                ]
            })
        }),
    )?;

    let path = cfg.out.join("metrics.json");
    let report = MetricsReport { normalization: cfg.normalization, kernel: &cfg.kernel, models: &results };
    write_file(&path, &to_json(&report, &path)?)?;

    let complete: Vec<&ModelMetrics> = results.iter().filter(|m| m.features.is_some()).collect();
    for m in results.iter().filter(|m| m.features.is_none()) {
        log::warn!("{}: incomplete policies, left out of features.csv", m.model_id);
    }
    if !complete.is_empty() {
        let path = cfg.out.join("features.csv");
        let mut header = vec!["model_id"];
        header.extend(crate::metrics::FEATURE_NAMES);
        write_csv(
            &path,
            &header,
            complete.iter().map(|m| {
                let mut row = vec![m.model_id.clone()];
                row.extend(m.features.iter().flatten().map(|(_, v)| v.to_string()));
                row
            }),
        )?;
    }
    Ok(results)
}
