//! Deterministic synthetic embedding sets with known geometry.
//!
//! Every model gets a shared "semantic world": items are grouped into
//! classes of `per_class` members and each class spans a random
//! `semantic_dim`-dimensional subspace. The Sem file stores one clean vector
//! per item; every other policy stores `t_views` views whose geometry depends
//! on the kind.

use std::path::PathBuf;

use chrono::DateTime;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use super::PipelineError;
use crate::store::{write_embeddings, EmbeddingSet, Manifest, Policy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Every view equals its item vector and every item equals its class
    /// vector.
    Collapsed,
    /// Views are independent random directions.
    Scattered,
    /// Views of each item fill a random `d`-dimensional subspace.
    SubspaceD,
    /// Views displace the item inside its class subspace.
    SimclrLike,
    /// Views displace the item orthogonally to its class subspace.
    OrthogonalAugs,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub model: String,
    pub kind: SynthKind,
    pub n_items: usize,
    pub t_views: usize,
    pub dim: usize,
    pub per_class: usize,
    pub semantic_dim: usize,
    /// Subspace dimension for `subspace-d`, displacement dimension for
    /// `orthogonal-augs`.
    pub d: usize,
    /// Multiplies the per-policy displacement scale.
    pub scale: f64,
    /// Isotropic noise added to every stored vector.
    pub noise: f64,
    /// Overrides the run seed for this model.
    pub seed: Option<u64>,
    pub policies: Vec<Policy>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            model: "synthetic".into(),
            kind: SynthKind::SimclrLike,
            n_items: 20,
            t_views: 10,
            dim: 32,
            per_class: 5,
            semantic_dim: 2,
            d: 3,
            scale: 1.0,
            noise: 1e-8,
            seed: None,
            policies: Policy::STANDARD.to_vec(),
        }
    }
}

fn invalid(msg: String) -> PipelineError {
    PipelineError::Config(format!("invalid synthetic geometry: {msg}"))
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_items == 0 || self.dim == 0 {
            return Err(invalid(format!("{}: n_items and dim must be positive", self.model)));
        }
        if self.t_views < 2 {
            return Err(invalid(format!("{}: t_views must be at least 2", self.model)));
        }
        if self.per_class < 2 || !self.n_items.is_multiple_of(self.per_class) {
            return Err(invalid(format!(
                "{}: n_items ({}) must be a multiple of per_class ({}) >= 2",
                self.model, self.n_items, self.per_class
            )));
        }
        if self.semantic_dim == 0 || self.d == 0 {
            return Err(invalid(format!("{}: semantic_dim and d must be positive", self.model)));
        }
        let needed = match self.kind {
            SynthKind::OrthogonalAugs => self.semantic_dim + self.d,
            SynthKind::SubspaceD => self.d.max(self.semantic_dim),
            _ => self.semantic_dim,
        };
        if needed > self.dim {
            return Err(invalid(format!("{}: needs {needed} dimensions, dim is {}", self.model, self.dim)));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) || !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(invalid(format!("{}: scale must be > 0 and noise >= 0", self.model)));
        }
        if self.model.is_empty() || self.model.contains(['/', '\\']) {
            return Err(invalid(format!("model id `{}` is not a valid file name", self.model)));
        }
        Ok(())
    }
}

pub fn file_name(model: &str, policy: &Policy) -> String {
    format!("{model}__{}.mgm", policy.as_str())
}

fn policy_scale(p: &Policy) -> f64 {
    match p {
        Policy::Augs => 1.0,
        Policy::Crop => 0.6,
        Policy::Colorjit => 0.35,
        Policy::Rotate => 1.5,
        Policy::Sem | Policy::Custom(_) => 1.0,
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn rng_for(seed: u64, model: &str, stream: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(model));
    rng.set_stream(fnv1a(stream));
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random `dim x k` matrix with orthonormal columns.
fn orthonormal(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, k, |_, _| gaussian(rng));
    g.qr().q().columns(0, k).into_owned()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gaussian(rng))
}

struct World {
    labels: Vec<i64>,
    class_basis: Vec<DMatrix<f64>>,
    /// Orthogonal complement directions per class (orthogonal-augs only).
    class_complement: Vec<DMatrix<f64>>,
    items: Vec<DVector<f64>>,
}

fn world(spec: &SynthSpec, seed: u64) -> World {
    let mut rng = rng_for(seed, &spec.model, "world");
    let classes = spec.n_items / spec.per_class;
    let extra = if spec.kind == SynthKind::OrthogonalAugs { spec.d } else { 0 };
    let mut class_basis = Vec::with_capacity(classes);
    let mut class_complement = Vec::with_capacity(classes);
    for _ in 0..classes {
        let q = orthonormal(&mut rng, spec.dim, spec.semantic_dim + extra);
        class_basis.push(q.columns(0, spec.semantic_dim).into_owned());
        class_complement.push(q.columns(spec.semantic_dim, extra).into_owned());
    }
    let labels: Vec<i64> = (0..spec.n_items).map(|i| (i / spec.per_class) as i64).collect();
    let class_coeffs: Vec<DVector<f64>> = (0..classes)
        .map(|_| gaussian_vec(&mut rng, spec.semantic_dim).map(|v| v.abs() + 0.1))
        .collect();
    let items = (0..spec.n_items)
        .map(|i| {
            let c = i / spec.per_class;
            // positive coefficients keep cosines within a class non-negative
            let coeffs = match spec.kind {
                SynthKind::Collapsed => class_coeffs[c].clone(),
                _ => gaussian_vec(&mut rng, spec.semantic_dim).map(|v| v.abs() + 0.1),
            };
            &class_basis[c] * coeffs
        })
        .collect();
    World { labels, class_basis, class_complement, items }
}

fn views_for(
    spec: &SynthSpec,
    w: &World,
    item: usize,
    policy: &Policy,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let x = &w.items[item];
    let c = item / spec.per_class;
    let s = policy_scale(policy) * spec.scale;
    match spec.kind {
        SynthKind::Collapsed => vec![x.clone(); spec.t_views],
        SynthKind::Scattered => (0..spec.t_views).map(|_| gaussian_vec(rng, spec.dim)).collect(),
        SynthKind::SubspaceD => {
            let basis = orthonormal(rng, spec.dim, spec.d);
            (0..spec.t_views).map(|_| &basis * gaussian_vec(rng, spec.d)).collect()
        }
        SynthKind::SimclrLike => (0..spec.t_views)
            .map(|_| x + &w.class_basis[c] * (gaussian_vec(rng, spec.semantic_dim) * (0.3 * s)))
            .collect(),
        SynthKind::OrthogonalAugs => (0..spec.t_views)
            .map(|_| x + &w.class_complement[c] * (gaussian_vec(rng, spec.d) * (2.0 * s)))
            .collect(),
    }
}

/// Builds the embedding sets of one synthetic model, in `spec.policies`
/// order.
pub fn generate(spec: &SynthSpec, run_seed: u64) -> Result<Vec<EmbeddingSet>, PipelineError> {
    spec.validate()?;
    let seed = spec.seed.unwrap_or(run_seed);
    let w = world(spec, seed);
    spec.policies
        .iter()
        .map(|policy| {
            let mut rng = rng_for(seed, &spec.model, policy.as_str());
            let t = if policy.is_semantic() { 1 } else { spec.t_views };
            let mut data = Vec::with_capacity(spec.n_items * t * spec.dim);
            for item in 0..spec.n_items {
                let views = if policy.is_semantic() {
                    vec![w.items[item].clone()]
                } else {
                    views_for(spec, &w, item, policy, &mut rng)
                };
                for v in views {
                    data.extend(v.iter().map(|&x| (x + spec.noise * gaussian(&mut rng)) as f32));
                }
            }
            let mut manifest = Manifest::new(&spec.model, policy.clone(), Some(w.labels.clone()));
            manifest.created = DateTime::from_timestamp(0, 0).expect("epoch");
            EmbeddingSet::new(spec.n_items, t, spec.dim, data, manifest)
                .map_err(|e| PipelineError::Config(format!("synthetic set invalid: {e}")))
        })
        .collect()
}

/// Generates and writes one file per (model, policy) under `dir`.
pub fn write_all(
    specs: &[SynthSpec],
    run_seed: u64,
    dir: &std::path::Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io { path: dir.to_path_buf(), source: e })?;
    let mut written = Vec::new();
    for spec in specs {
        for set in generate(spec, run_seed)? {
            let path = dir.join(file_name(&spec.model, &set.manifest.policy_id));
            write_embeddings(&set, &path)
                .map_err(|e| PipelineError::Store { path: path.clone(), source: e })?;
            written.push(path);
        }
    }
    Ok(written)
}
