use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{make_env, Budget, CollectMode, EnvOverrides, Environment};
use crate::error::{Error, Result};
use crate::mdp::hex_digest;
use crate::regress::{ExtraTreesParams, MaxFeatures, RegressorSpec};

/// Experiment description, read from a TOML document whose keys are
/// grouped as `env.*`, `collect.*`, `pfqi.*`, `select.*`, `eval.*` and
/// `experiment.*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    #[serde(default)]
    pub collect: CollectSection,
    pub pfqi: PfqiSection,
    pub select: SelectSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub name: String,
    #[serde(default)]
    pub factor: Option<f64>,
    #[serde(default)]
    pub original_horizon: Option<usize>,
    #[serde(default)]
    pub original_discount: Option<f64>,
    #[serde(default)]
    pub magnitude: Option<f64>,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub initial_state: Option<usize>,
    #[serde(default)]
    pub unit_step: Option<bool>,
}

impl EnvSection {
    pub fn overrides(&self) -> EnvOverrides {
        EnvOverrides {
            factor: self.factor,
            original_horizon: self.original_horizon,
            original_discount: self.original_discount,
            magnitude: self.magnitude,
            path: self.path.clone(),
            initial_state: self.initial_state,
            unit_step: self.unit_step,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        make_env(&self.name, &self.overrides())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectSection {
    #[serde(default = "one")]
    pub k_sampling: usize,
    /// Exactly one of `samples` and `trajectories` must be set.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub trajectories: Option<usize>,
    #[serde(default)]
    pub mode: CollectMode,
}

impl Default for CollectSection {
    fn default() -> Self {
        Self {
            k_sampling: 1,
            samples: None,
            trajectories: Some(10),
            mode: CollectMode::Base,
        }
    }
}

impl CollectSection {
    pub fn budget(&self) -> Result<Budget> {
        match (self.samples, self.trajectories) {
            (Some(n), None) => Ok(Budget::Samples(n)),
            (None, Some(n)) => Ok(Budget::Trajectories(n)),
            _ => Err(Error::Config(
                "set exactly one of collect.samples and collect.trajectories".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfqiSection {
    #[serde(rename = "J")]
    pub iterations: usize,
    /// `extra-trees`, `table` or `knn`.
    #[serde(default = "default_regressor")]
    pub regressor: String,
    #[serde(default = "default_estimators")]
    pub n_estimators: usize,
    #[serde(default = "default_split")]
    pub min_samples_split: usize,
    #[serde(default = "default_leaf")]
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub max_features: MaxFeatures,
    #[serde(default = "default_knn")]
    pub knn_k: usize,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

impl PfqiSection {
    pub fn regressor_spec(&self) -> Result<RegressorSpec> {
        let spec = match self.regressor.as_str() {
            "extra-trees" => RegressorSpec::ExtraTrees(ExtraTreesParams {
                n_estimators: self.n_estimators,
                min_samples_split: self.min_samples_split,
                min_samples_leaf: self.min_samples_leaf,
                max_features: self.max_features,
                seed: 0,
            }),
            "table" => RegressorSpec::Table,
            "knn" => RegressorSpec::Knn { k: self.knn_k },
            other => return Err(Error::Config(format!("unknown regressor `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSection {
    /// Candidate persistences.
    #[serde(rename = "K")]
    pub candidates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Extra execution persistences `k'` applied to every trained `k`.
    #[serde(default)]
    pub cross: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            episodes: default_episodes(),
            cross: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Write measured durations instead of zeros.
    #[serde(default)]
    pub timing: bool,
    /// Monte-Carlo episodes per learning-curve point; 0 disables curves.
    #[serde(default)]
    pub curve_episodes: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seeds: 1,
            master_seed: 0,
            output: default_output(),
            timing: false,
            curve_episodes: 0,
        }
    }
}

fn one() -> usize {
    1
}
fn default_regressor() -> String {
    "extra-trees".into()
}
fn default_estimators() -> usize {
    100
}
fn default_split() -> usize {
    5
}
fn default_leaf() -> usize {
    2
}
fn default_knn() -> usize {
    5
}
fn default_episodes() -> usize {
    10
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Check everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        let env = self.env.build()?;
        self.collect.budget()?;
        if self.collect.k_sampling == 0 {
            return Err(Error::InvalidPersistence(0));
        }
        let j = self.pfqi.iterations;
        if j == 0 {
            return Err(Error::Config("pfqi.J must be at least 1".into()));
        }
        if self.select.candidates.is_empty() {
            return Err(Error::Config("select.K must not be empty".into()));
        }
        for &k in self.select.candidates.iter().chain(&self.eval.cross) {
            if k == 0 {
                return Err(Error::InvalidPersistence(0));
            }
        }
        for &k in &self.select.candidates {
            if j % k != 0 {
                return Err(Error::IterationsNotMultiple {
                    iterations: j,
                    persistence: k,
                });
            }
        }
        let mut sorted = self.select.candidates.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.select.candidates.len() {
            return Err(Error::Config("select.K contains duplicates".into()));
        }
        if self.experiment.seeds == 0 {
            return Err(Error::Config("experiment.seeds must be at least 1".into()));
        }
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be at least 1".into()));
        }
        if self.pfqi.snapshot_every == Some(0) {
            return Err(Error::Config("pfqi.snapshot_every must be positive".into()));
        }
        self.pfqi.regressor_spec()?;
        drop(env);
        Ok(())
    }

    /// Candidate persistences in increasing order.
    pub fn candidates(&self) -> Vec<usize> {
        let mut k = self.select.candidates.clone();
        k.sort_unstable();
        k
    }

    /// Base-environment persistence at which a policy trained at `k` acts.
    /// Data from the `k_sampling`-persistent environment already spans
    /// `k_sampling` base steps per transition.
    pub fn execution_persistence(&self, k: usize) -> usize {
        match self.collect.mode {
            CollectMode::Base => k,
            CollectMode::PersistentEnv => k * self.collect.k_sampling,
        }
    }

    /// Base-environment persistences evaluated for a policy trained at `k`.
    pub fn eval_persistences(&self, k: usize) -> Vec<usize> {
        let mut out = vec![self.execution_persistence(k)];
        out.extend(self.eval.cross.iter().copied());
        out.sort_unstable();
        out.dedup();
        out
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).unwrap_or_default();
        hex_digest(&Sha256::digest(&json))
    }
}
