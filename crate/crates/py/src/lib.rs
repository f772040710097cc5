//! Python bindings: NNK graphs, neighborhood metrics, the embedding store and
//! the model-level statistics. Vectors cross the boundary as lists of floats.

use mgm_core::nnk::{self, KernelConfig, NNKGraph, Neighborhood};
use mgm_core::stats::{self, FeatureMatrix};
use mgm_core::store::{self, EmbeddingSet, Manifest, Policy, ViewSet};
use mgm_core::{metrics, Normalization, SubspaceBasis};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn normalization(name: &str) -> PyResult<Normalization> {
    name.parse::<Normalization>().map_err(value_err)
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn feature_matrix(rows: &[Vec<f64>]) -> PyResult<FeatureMatrix> {
    let values = rows_to_matrix(rows)?;
    let ids = (0..values.nrows()).map(|i| format!("m{i}")).collect();
    let names = (0..values.ncols()).map(|j| format!("f{j}")).collect();
    FeatureMatrix::new(ids, names, values).map_err(value_err)
}

/// Cosine kernel and NNK solver settings.
#[pyclass(name = "KernelConfig", from_py_object)]
#[derive(Clone)]
struct PyKernelConfig {
    inner: KernelConfig,
}

#[pymethods]
impl PyKernelConfig {
    #[new]
    #[pyo3(signature = (clamp_negative=true, ridge=1e-10, weight_threshold=1e-6, k_init=None))]
    fn new(clamp_negative: bool, ridge: f64, weight_threshold: f64, k_init: Option<usize>) -> PyResult<Self> {
        let inner = KernelConfig { clamp_negative, ridge, weight_threshold, k_init, ..KernelConfig::default() };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn clamp_negative(&self) -> bool {
        self.inner.clamp_negative
    }

    #[getter]
    fn ridge(&self) -> f64 {
        self.inner.ridge
    }

    #[getter]
    fn weight_threshold(&self) -> f64 {
        self.inner.weight_threshold
    }

    #[getter]
    fn k_init(&self) -> Option<usize> {
        self.inner.k_init
    }

    fn __repr__(&self) -> String {
        format!(
            "KernelConfig(clamp_negative={}, ridge={}, weight_threshold={}, k_init={:?})",
            self.inner.clamp_negative, self.inner.ridge, self.inner.weight_threshold, self.inner.k_init
        )
    }
}

fn config_or_default(cfg: Option<PyKernelConfig>) -> KernelConfig {
    cfg.map(|c| c.inner).unwrap_or_default()
}

#[pyclass(name = "Neighborhood", frozen)]
struct PyNeighborhood {
    inner: Neighborhood,
}

#[pymethods]
impl PyNeighborhood {
    #[getter]
    fn query(&self) -> usize {
        self.inner.query
    }

    #[getter]
    fn candidates(&self) -> Vec<usize> {
        self.inner.candidates.clone()
    }

    #[getter]
    fn neighbors(&self) -> Vec<usize> {
        self.inner.neighbors.clone()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Neighborhood(query={}, neighbors={:?})", self.inner.query, self.inner.neighbors)
    }
}

/// Per-node diameters, per-node neighbor counts and `(from, to, affinity)`
/// edges.
type GraphMetricLists = (Vec<Option<f64>>, Vec<Option<usize>>, Vec<(usize, usize, f64)>);

/// NNK graph over one view-set. Keeps the views it was built from so the
/// metric methods need no further arguments.
#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    graph: NNKGraph,
    views: ViewSet,
}

#[pymethods]
impl PyGraph {
    #[getter]
    fn neighborhoods(&self) -> Vec<PyNeighborhood> {
        self.graph.neighborhoods.iter().map(|n| PyNeighborhood { inner: n.clone() }).collect()
    }

    fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    fn __len__(&self) -> usize {
        self.graph.len()
    }

    /// Per-node diameters and neighbor counts (None for isolated nodes) and
    /// `(from, to, affinity)` for every edge.
    #[pyo3(signature = (normalization="paper"))]
    fn metrics(&self, normalization: &str) -> PyResult<GraphMetricLists> {
        let m = metrics::graph_metrics(&self.graph, &self.views, self::normalization(normalization)?)
            .map_err(value_err)?;
        let diameters = m.nodes.iter().map(|n| n.as_ref().map(|n| n.diameter)).collect();
        let dims = m.nodes.iter().map(|n| n.as_ref().map(|n| n.intrinsic_dim)).collect();
        let edges = m.edges.iter().map(|e| (e.from, e.to, e.affinity)).collect();
        Ok((diameters, dims, edges))
    }

    fn __repr__(&self) -> String {
        format!("Graph(nodes={}, edges={})", self.graph.len(), self.graph.edge_count())
    }
}

#[pyfunction]
#[pyo3(signature = (a, b, config=None))]
fn cosine_kernel(a: Vec<f64>, b: Vec<f64>, config: Option<PyKernelConfig>) -> PyResult<f64> {
    nnk::cosine_kernel(&a, &b, &config_or_default(config)).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (views, config=None))]
fn build_graph(views: Vec<Vec<f64>>, config: Option<PyKernelConfig>) -> PyResult<PyGraph> {
    let views = ViewSet::from_vectors(views);
    let graph = nnk::build_graph(&views, &config_or_default(config)).map_err(value_err)?;
    Ok(PyGraph { graph, views })
}

/// Affinity between the spans of two vector lists.
#[pyfunction]
#[pyo3(signature = (a, b, normalization="paper"))]
fn subspace_affinity(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, normalization: &str) -> PyResult<f64> {
    let a = SubspaceBasis::from_vectors(&a).map_err(value_err)?;
    let b = SubspaceBasis::from_vectors(&b).map_err(value_err)?;
    Ok(metrics::subspace_affinity(&a, &b, self::normalization(normalization)?))
}

/// Embeddings of one model under one augmentation policy.
#[pyclass(name = "EmbeddingSet", frozen)]
struct PyEmbeddingSet {
    inner: EmbeddingSet,
}

#[pymethods]
impl PyEmbeddingSet {
    /// `data` is row-major over (item, view, dim).
    #[new]
    #[pyo3(signature = (model_id, policy, n_items, t_views, dim, data, labels=None))]
    fn new(
        model_id: String,
        policy: &str,
        n_items: usize,
        t_views: usize,
        dim: usize,
        data: Vec<f32>,
        labels: Option<Vec<i64>>,
    ) -> PyResult<Self> {
        let manifest = Manifest::new(model_id, Policy::from(policy), labels);
        let inner = EmbeddingSet::new(n_items, t_views, dim, data, manifest).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let inner = store::read_embeddings(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        store::write_embeddings(&self.inner, path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn model_id(&self) -> String {
        self.inner.manifest.model_id.clone()
    }

    #[getter]
    fn policy(&self) -> String {
        self.inner.manifest.policy_id.as_str().to_string()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.n_items, self.inner.t_views, self.inner.dim)
    }

    #[getter]
    fn labels(&self) -> Option<Vec<i64>> {
        self.inner.manifest.labels.clone()
    }

    fn vector(&self, item: usize, view: usize) -> PyResult<Vec<f32>> {
        if item >= self.inner.n_items || view >= self.inner.t_views {
            return Err(PyValueError::new_err(format!("({item}, {view}) out of range")));
        }
        Ok(self.inner.vector(item, view).to_vec())
    }

    /// The view-sets NNK graphs are built over, as lists of vectors.
    fn view_sets(&self) -> PyResult<Vec<Vec<Vec<f64>>>> {
        Ok(self.inner.view_sets().map_err(value_err)?.into_iter().map(|v| v.members).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "EmbeddingSet(model_id={:?}, policy={:?}, shape=({}, {}, {}))",
            self.inner.manifest.model_id,
            self.inner.manifest.policy_id.as_str(),
            self.inner.n_items,
            self.inner.t_views,
            self.inner.dim
        )
    }
}

/// Returns `(r, p_value)`.
#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    let c = stats::pearson(&x, &y).map_err(value_err)?;
    Ok((c.pearson_r, c.p_value))
}

/// Merge steps `(a, b, height, size)` for a square distance matrix.
#[pyfunction]
fn complete_linkage(distances: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize, f64, usize)>> {
    let d = stats::complete_linkage(&rows_to_matrix(&distances)?).map_err(value_err)?;
    Ok(d.steps.iter().map(|s| (s.a, s.b, s.height, s.size)).collect())
}

/// Column-wise z-scores (population standard deviation).
#[pyfunction]
fn standardize(rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(matrix_to_rows(&stats::standardize(&feature_matrix(&rows)?).values))
}

/// Returns `(loadings, explained_variance_ratio)`; loadings are
/// features × components. Rows are standardized first.
#[pyfunction]
#[pyo3(signature = (rows, n_components=2, penalty=0.65))]
fn sparse_pca(rows: Vec<Vec<f64>>, n_components: usize, penalty: f64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let m = stats::standardize(&feature_matrix(&rows)?);
    let p = stats::sparse_pca(&m, n_components, penalty).map_err(value_err)?;
    Ok((matrix_to_rows(&p.loadings), p.explained_variance_ratio))
}

/// LASSO coefficients on standardized rows.
#[pyfunction]
fn lasso(rows: Vec<Vec<f64>>, target: Vec<f64>, lam: f64) -> PyResult<Vec<f64>> {
    let m = stats::standardize(&feature_matrix(&rows)?);
    Ok(stats::lasso(&m, &target, lam).map_err(value_err)?.values)
}

/// Impurity-based feature importances of a regression tree.
#[pyfunction]
#[pyo3(signature = (rows, target, max_depth=5))]
fn tree_importances(rows: Vec<Vec<f64>>, target: Vec<f64>, max_depth: usize) -> PyResult<Vec<f64>> {
    let m = feature_matrix(&rows)?;
    Ok(stats::tree_regression(&m, &target, max_depth).map_err(value_err)?.0.values)
}

#[pymodule]
fn mgm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernelConfig>()?;
    m.add_class::<PyNeighborhood>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyEmbeddingSet>()?;
    m.add_function(wrap_pyfunction!(cosine_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(build_graph, m)?)?;
    m.add_function(wrap_pyfunction!(subspace_affinity, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(complete_linkage, m)?)?;
    m.add_function(wrap_pyfunction!(standardize, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_pca, m)?)?;
    m.add_function(wrap_pyfunction!(lasso, m)?)?;
    m.add_function(wrap_pyfunction!(tree_importances, m)?)?;
    m.add("FEATURE_NAMES", mgm_core::FEATURE_NAMES.to_vec())?;
    Ok(())
}
