use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use super::metrics::write_csv;
use super::report::{dendrogram_svg, pca_svg};
use super::{to_json, write_file, PipelineError, RunConfig};
use crate::stats::{
    complete_linkage, euclidean_distances, lasso_path, pearson, sparse_pca, standardize,
    tree_regression, CorrelationResult, Dendrogram, FeatureMatrix, RegressionResult,
    RegressionTree, StatsError,
};

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> PipelineError + '_ {
    move |source| PipelineError::Csv { path: path.to_path_buf(), source }
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64, PipelineError> {
    let v: f64 = field.trim().parse().map_err(|_| {
        PipelineError::Input(format!("{}:{line}: `{field}` is not a number", path.display()))
    })?;
    if !v.is_finite() {
        return Err(PipelineError::Input(format!("{}:{line}: non-finite value", path.display())));
    }
    Ok(v)
}

fn line_of(r: &csv::StringRecord) -> u64 {
    r.position().map_or(0, |p| p.line())
}

/// Reads a CSV with a `model_id` column followed by one column per feature.
pub fn read_features_csv(path: &Path) -> Result<FeatureMatrix, PipelineError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    if headers.get(0) != Some("model_id") || headers.len() < 2 {
        return Err(PipelineError::Input(format!(
            "{}: expected header `model_id,<features...>`",
            path.display()
        )));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let id = rec[0].to_string();
        if ids.contains(&id) {
            return Err(PipelineError::Input(format!("{}: model {id} appears twice", path.display())));
        }
        ids.push(id);
        for field in rec.iter().skip(1) {
            data.push(parse_f64(path, line_of(&rec), field)?);
        }
    }
    let rows = ids.len();
    FeatureMatrix::new(ids, names, DMatrix::from_row_slice(rows, headers.len() - 1, &data))
        .map_err(|source| PipelineError::Stats { context: path.display().to_string(), source })
}

/// Task names in order of first appearance, and accuracy per (model, task).
pub type AccuracyTable = (Vec<String>, BTreeMap<String, BTreeMap<String, f64>>);

/// Reads a long-format CSV with columns `model_id,task,accuracy`.
pub fn read_accuracy_csv(path: &Path) -> Result<AccuracyTable, PipelineError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["model_id", "task", "accuracy"] {
        return Err(PipelineError::Input(format!(
            "{}: expected header `model_id,task,accuracy`",
            path.display()
        )));
    }
    let mut tasks: Vec<String> = Vec::new();
    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let (model, task) = (rec[0].to_string(), rec[1].to_string());
        let acc = parse_f64(path, line_of(&rec), &rec[2])?;
        if !tasks.contains(&task) {
            tasks.push(task.clone());
        }
        if table.entry(model.clone()).or_default().insert(task.clone(), acc).is_some() {
            return Err(PipelineError::Input(format!(
                "{}: duplicate accuracy for {model} / {task}",
                path.display()
            )));
        }
    }
    Ok((tasks, table))
}

#[derive(Clone, Debug, Serialize)]
pub struct Projection {
    pub model_id: String,
    pub components: Vec<f64>,
    pub cluster: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Loading {
    pub feature: String,
    pub components: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PcaReport {
    pub penalty: f64,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub iterations: Vec<usize>,
    pub zero_loadings: usize,
    pub projections: Vec<Projection>,
    pub loadings: Vec<Loading>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClusterReport {
    pub dendrogram: Dendrogram,
    pub leaf_order: Vec<usize>,
    pub clusters: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TaskRegression {
    pub task: String,
    pub lasso_path: Vec<RegressionResult>,
    pub tree: RegressionResult,
    pub tree_nodes: RegressionTree,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub models: Vec<String>,
    pub features: Vec<String>,
    pub tasks: Vec<String>,
    pub constant_features: Vec<String>,
    pub pca: PcaReport,
    pub clustering: ClusterReport,
    pub correlations: Vec<CorrelationResult>,
    pub regressions: Vec<TaskRegression>,
}

fn stats_err(context: &str) -> impl Fn(StatsError) -> PipelineError + '_ {
    move |source| PipelineError::Stats { context: context.to_string(), source }
}

/// Runs every model-level analysis on in-memory inputs.
pub fn analyze(
    features: &FeatureMatrix,
    tasks: &[String],
    accuracy: &BTreeMap<String, BTreeMap<String, f64>>,
    cfg: &RunConfig,
) -> Result<AnalysisReport, PipelineError> {
    let m = features.n_models();
    if m < 3 {
        return Err(PipelineError::Input(format!("analysis needs at least 3 models, got {m}")));
    }
    let in_features: BTreeSet<&String> = features.model_ids.iter().collect();
    let in_accuracy: BTreeSet<&String> = accuracy.keys().collect();
    let diff: Vec<String> = in_features.symmetric_difference(&in_accuracy).map(|s| s.to_string()).collect();
    if !diff.is_empty() {
        return Err(PipelineError::Input(format!(
            "model ids differ between feature and accuracy tables: {}",
            diff.join(", ")
        )));
    }
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(tasks.len());
    for task in tasks {
        let col = features
            .model_ids
            .iter()
            .map(|id| {
                accuracy[id].get(task).copied().ok_or_else(|| {
                    PipelineError::Input(format!("no {task} accuracy for model {id}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        targets.push(col);
    }

    let std = standardize(features);
    let constant_features: Vec<String> = std
        .feature_names
        .iter()
        .zip(&std.constant_columns)
        .filter(|(_, c)| **c)
        .map(|(n, _)| n.clone())
        .collect();

    let comps = 2.min(std.n_features());
    let pca = sparse_pca(&std, comps, cfg.analyze.sparse_pca_penalty).map_err(stats_err("sparse PCA"))?;
    let dendrogram =
        complete_linkage(&euclidean_distances(&std)).map_err(stats_err("clustering"))?;
    let clusters = dendrogram.cut(cfg.analyze.clusters);

    let mut correlations = Vec::new();
    for (task, y) in tasks.iter().zip(&targets) {
        for (j, name) in features.feature_names.iter().enumerate() {
            if std.constant_columns[j] {
                continue;
            }
            match pearson(&features.column(j), y) {
                Ok(c) => correlations.push(CorrelationResult {
                    feature: name.clone(),
                    task: task.clone(),
                    correlation: c,
                }),
                Err(StatsError::ConstantInput(_)) => {
                    log::warn!("{task}: accuracy is constant, correlations skipped");
                    break;
                }
                Err(e) => return Err(stats_err(task)(e)),
            }
        }
    }

    let mut regressions = Vec::with_capacity(tasks.len());
    for (task, y) in tasks.iter().zip(&targets) {
        let path = lasso_path(&std, y, &cfg.analyze.lasso_lambdas).map_err(stats_err(task))?;
        let (tree, nodes) = tree_regression(&std, y, cfg.analyze.tree_depth).map_err(stats_err(task))?;
        regressions.push(TaskRegression { task: task.clone(), lasso_path: path, tree, tree_nodes: nodes });
    }

    let projections = (0..m)
        .map(|i| Projection {
            model_id: features.model_ids[i].clone(),
            components: pca.projections.row(i).iter().copied().collect(),
            cluster: clusters[i],
        })
        .collect();
    let loadings = (0..std.n_features())
        .map(|j| Loading {
            feature: std.feature_names[j].clone(),
            components: pca.loadings.row(j).iter().copied().collect(),
        })
        .collect();
    Ok(AnalysisReport {
        models: features.model_ids.clone(),
        features: features.feature_names.clone(),
        tasks: tasks.to_vec(),
        constant_features,
        pca: PcaReport {
            penalty: pca.penalty,
            explained_variance: pca.explained_variance.clone(),
            explained_variance_ratio: pca.explained_variance_ratio.clone(),
            iterations: pca.iterations.clone(),
            zero_loadings: pca.loadings.iter().filter(|v| **v == 0.0).count(),
            projections,
            loadings,
        },
        clustering: ClusterReport { leaf_order: dendrogram.leaf_order(), dendrogram, clusters },
        correlations,
        regressions,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Reads the feature and accuracy tables, runs the analyses and writes
/// `<out>/analysis/`.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalysisReport, PipelineError> {
    let features_path = cfg.analyze.features.clone().unwrap_or_else(|| cfg.out.join("features.csv"));
    let accuracy_path = cfg
        .analyze
        .accuracy
        .clone()
        .ok_or_else(|| PipelineError::Config("analyze.accuracy is not set".into()))?;
    let missing: Vec<String> = [&features_path, &accuracy_path]
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(PipelineError::MissingInputs(missing));
    }
    let features = read_features_csv(&features_path)?;
    let (tasks, accuracy) = read_accuracy_csv(&accuracy_path)?;
    let report = analyze(&features, &tasks, &accuracy, cfg)?;

    let dir = cfg.out.join("analysis");
    let path = dir.join("report.json");
    write_file(&path, &to_json(&report, &path)?)?;

    let pc_header = |first: &'static str| {
        let mut h = vec![first];
        h.extend(["pc1", "pc2"].iter().take(report.pca.explained_variance.len()));
        h
    };
    let mut h = pc_header("model_id");
    h.push("cluster");
    write_csv(
        &dir.join("pca.csv"),
        &h,
        report.pca.projections.iter().map(|p| {
            let mut row = vec![p.model_id.clone()];
            row.extend(p.components.iter().map(f64::to_string));
            row.push(p.cluster.to_string());
            row
        }),
    )?;
    write_csv(
        &dir.join("loadings.csv"),
        &pc_header("feature"),
        report.pca.loadings.iter().map(|l| {
            let mut row = vec![l.feature.clone()];
            row.extend(l.components.iter().map(f64::to_string));
            row
        }),
    )?;
    let d = &report.clustering.dendrogram;
    write_csv(
        &dir.join("dendrogram.csv"),
        &["step", "a", "b", "height", "size"],
        d.steps.iter().enumerate().map(|(i, s)| {
            vec![i.to_string(), s.a.to_string(), s.b.to_string(), s.height.to_string(), s.size.to_string()]
        }),
    )?;
    write_csv(
        &dir.join("correlations.csv"),
        &["feature", "task", "pearson_r", "p_value", "n"],
        report.correlations.iter().map(|c| {
            vec![
                c.feature.clone(),
                c.task.clone(),
                c.correlation.pearson_r.to_string(),
                c.correlation.p_value.to_string(),
                c.correlation.n.to_string(),
            ]
        }),
    )?;
    let mut rows = Vec::new();
    for r in &report.regressions {
        for fit in r.lasso_path.iter().chain(std::iter::once(&r.tree)) {
            let method = serde_json::to_value(fit.method).ok();
            let method = method.as_ref().and_then(|v| v.as_str()).unwrap_or_default().to_string();
            for (f, v) in fit.feature_names.iter().zip(&fit.values) {
                rows.push(vec![r.task.clone(), method.clone(), fmt_opt(fit.lambda), f.clone(), v.to_string()]);
            }
        }
    }
    write_csv(&dir.join("importances.csv"), &["task", "method", "lambda", "feature", "value"], rows)?;

    let xy: Vec<(f64, f64)> = report
        .pca
        .projections
        .iter()
        .map(|p| (p.components[0], p.components.get(1).copied().unwrap_or(0.0)))
        .collect();
    let svg = pca_svg(&report.models, &xy, &report.clustering.clusters, &report.pca.explained_variance_ratio);
    write_file(&dir.join("pca.svg"), svg.as_bytes())?;
    write_file(&dir.join("dendrogram.svg"), dendrogram_svg(d, &report.models).as_bytes())?;
    log::info!("analysis of {} models written to {}", report.models.len(), dir.display());
    Ok(report)
}
