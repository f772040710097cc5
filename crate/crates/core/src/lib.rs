//! Manifold graph metrics for learned representations.
//!
//! The crate builds non-negative kernel regression (NNK) neighborhoods over
//! groups of embedded views, measures the local geometry of those
//! neighborhoods (polytope diameter, subspace affinity, neighbor count), and
//! compares models through the resulting feature vectors.
//!
//! * [`store`] reads and writes the binary embedding format and splits a set
//!   into view-sets.
//! * [`nnk`] builds NNK neighborhoods and graphs with a cosine kernel.
//! * [`metrics`] turns graphs into per-sample metrics, distributions and the
//!   per-model feature vector.
//! * [`stats`] holds the model-level analyses: standardization, sparse PCA,
//!   complete linkage, Pearson correlation, LASSO and regression trees.
//! * [`pipeline`] wires everything into the `mgm` command line tool.

pub mod metrics;
pub mod nnk;
pub mod pipeline;
pub mod stats;
pub mod store;

pub use metrics::{
    aggregate, cross_affinity, feature_vector, graph_metrics, neighbor_subspace,
    polytope_diameter, subspace_affinity, GraphMetrics, MetricDistribution, MetricError,
    NodeMetrics, Normalization, SubspaceBasis, FEATURE_NAMES,
};
pub use nnk::{
    build_graph, cosine_kernel, knn_candidates, nnk_solve, KernelConfig, NNKGraph, Neighborhood,
    NnkError,
};
pub use store::{
    read_embeddings, write_embeddings, EmbeddingSet, Manifest, Policy, StoreError, ViewSet,
};
