use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::synth::SynthSpec;
use super::PipelineError;
use crate::metrics::Normalization;
use crate::nnk::KernelConfig;
use crate::store::Policy;

/// One embedding file and the (model, policy) it holds.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub model: String,
    pub policy: Policy,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    /// Include per-sample values in metrics.json.
    pub per_sample: bool,
    /// Cross-policy affinity terms, as (semantic, augmentation) pairs.
    pub cross_terms: Vec<(Policy, Policy)>,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self { per_sample: false, cross_terms: vec![(Policy::Sem, Policy::Augs)] }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeOptions {
    /// Feature CSV; defaults to `<out>/features.csv`.
    pub features: Option<PathBuf>,
    /// Transfer accuracy CSV with columns model_id, task, accuracy.
    pub accuracy: Option<PathBuf>,
    pub sparse_pca_penalty: f64,
    pub tree_depth: usize,
    pub lasso_lambdas: Vec<f64>,
    pub clusters: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            features: None,
            accuracy: None,
            sparse_pca_penalty: 0.65,
            tree_depth: 5,
            lasso_lambdas: crate::stats::default_lambda_grid(),
            clusters: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    pub seed: u64,
    pub normalization: Normalization,
    pub kernel: KernelConfig,
    pub inputs: Vec<InputSpec>,
    pub synth: Vec<SynthSpec>,
    pub metrics: MetricsOptions,
    pub analyze: AnalyzeOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("mgm_out"),
            jobs: None,
            seed: 0,
            normalization: Normalization::Paper,
            kernel: KernelConfig::default(),
            inputs: Vec::new(),
            synth: Vec::new(),
            metrics: MetricsOptions::default(),
            analyze: AnalyzeOptions::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub policy: Option<Policy>,
    pub normalization: Option<Normalization>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub per_sample: bool,
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parses a TOML config. Relative paths inside it are resolved against
    /// the directory that contains the file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Io { path: path.to_path_buf(), source: e })?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        cfg.out = rebase(&base, &cfg.out);
        for input in &mut cfg.inputs {
            input.path = rebase(&base, &input.path);
        }
        if let Some(p) = &cfg.analyze.features {
            cfg.analyze.features = Some(rebase(&base, p));
        }
        if let Some(p) = &cfg.analyze.accuracy {
            cfg.analyze.accuracy = Some(rebase(&base, p));
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(n) = o.normalization {
            self.normalization = n;
        }
        if o.jobs.is_some() {
            self.jobs = o.jobs;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.per_sample {
            self.metrics.per_sample = true;
        }
        if let Some(p) = &o.policy {
            self.inputs.retain(|i| &i.policy == p);
            for s in &mut self.synth {
                s.policies.retain(|q| q == p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.jobs == Some(0) {
            return Err(PipelineError::Config("jobs must be at least 1".into()));
        }
        self.kernel.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        for s in &self.synth {
            s.validate()?;
        }
        Ok(())
    }

    pub fn embeddings_dir(&self) -> PathBuf {
        self.out.join("embeddings")
    }

    pub fn graphs_dir(&self, model: &str, policy: &Policy) -> PathBuf {
        self.out.join("graphs").join(model).join(policy.as_str())
    }

    /// Explicit inputs, or the files `synth` writes when none are listed.
    pub fn resolved_inputs(&self) -> Vec<InputSpec> {
        if !self.inputs.is_empty() {
            return self.inputs.clone();
        }
        self.synth
            .iter()
            .flat_map(|s| {
                s.policies.iter().map(|p| InputSpec {
                    model: s.model.clone(),
                    policy: p.clone(),
                    path: self.embeddings_dir().join(super::synth::file_name(&s.model, p)),
                })
            })
            .collect()
    }

    /// Every input file must exist before graph or metrics work starts.
    pub fn check_inputs_exist(&self) -> Result<Vec<InputSpec>, PipelineError> {
        let inputs = self.resolved_inputs();
        if inputs.is_empty() {
            return Err(PipelineError::Config("no inputs configured".into()));
        }
        let missing: Vec<String> = inputs
            .iter()
            .filter(|i| !i.path.is_file())
            .map(|i| i.path.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(PipelineError::MissingInputs(missing));
        }
        Ok(inputs)
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            b = b.num_threads(j);
        }
        b.build().map_err(|e| PipelineError::Config(format!("thread pool: {e}")))
    }
}
