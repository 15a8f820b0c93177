//! Persistent Fitted Q-Iteration.
//!
//! Iteration `j` regresses on optimal-mode targets `R + γ max_a Q(S', a)`
//! when `j mod k = 0` and on persistent-mode targets `R + γ Q(S', A)`
//! otherwise, so every block of `k` iterations applies one empirical `T*`
//! followed by `k - 1` empirical `T^δ`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{fmt_f64, Dataset, DiscretePolicy};
use crate::qfunction::QFunction;
use crate::regress::{FeatureMatrix, FittedQ, RegressorSpec};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    Optimal,
    Persistent,
}

impl TargetMode {
    /// Mode used at iteration `j` for persistence `k`.
    pub fn at(j: usize, k: usize) -> Self {
        if j % k == 0 {
            Self::Optimal
        } else {
            Self::Persistent
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Persistent => "persistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfqiConfig {
    pub persistence: usize,
    pub iterations: usize,
    #[serde(default)]
    pub regressor: RegressorSpec,
    pub discount: f64,
    /// Observer cadence in iterations; `None` means every `persistence`.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Also run `k` further iterations and keep `Q^(J+k)`.
    #[serde(default)]
    pub with_continuation: bool,
}

impl PfqiConfig {
    pub fn new(persistence: usize, iterations: usize, discount: f64) -> Self {
        Self {
            persistence,
            iterations,
            regressor: RegressorSpec::default(),
            discount,
            snapshot_every: None,
            seed: 0,
            with_continuation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.persistence == 0 {
            return Err(Error::InvalidPersistence(0));
        }
        if self.iterations == 0 {
            return Err(Error::Config("PFQI needs at least one iteration".into()));
        }
        if self.iterations % self.persistence != 0 {
            return Err(Error::IterationsNotMultiple {
                iterations: self.iterations,
                persistence: self.persistence,
            });
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(format!("discount {} outside [0, 1)", self.discount)));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::Config("snapshot_every must be positive".into()));
        }
        self.regressor.validate()
    }

    pub fn snapshot_cadence(&self) -> usize {
        self.snapshot_every.unwrap_or(self.persistence)
    }
}

/// Closed-form count of Q evaluations spent computing targets over `J`
/// iterations: `(J/k)·n·|A| + (J(k-1)/k)·n`.
pub fn predicted_op_count(iterations: usize, n: usize, n_actions: usize, k: usize) -> Result<u64> {
    if k == 0 {
        return Err(Error::InvalidPersistence(0));
    }
    if iterations % k != 0 {
        return Err(Error::IterationsNotMultiple {
            iterations,
            persistence: k,
        });
    }
    let (j, n, a, k) = (iterations as u64, n as u64, n_actions as u64, k as u64);
    Ok((j / k) * n * a + (j * (k - 1) / k) * n)
}

/// Counts every evaluated `(state, action)` pair.
struct CountingQ<'a, Q: ?Sized> {
    inner: &'a Q,
    calls: AtomicU64,
}

impl<Q: QFunction + ?Sized> QFunction for CountingQ<'_, Q> {
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    fn value(&self, state: &[f64], action: usize) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.value(state, action)
    }

    fn value_rows(&self, rows: &[&[f64]], action: usize) -> Vec<f64> {
        self.calls.fetch_add(rows.len() as u64, Ordering::Relaxed);
        self.inner.value_rows(rows, action)
    }
}

/// Dataset laid out for repeated target computation.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: FeatureMatrix,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: FeatureMatrix,
    pub terminal: Vec<bool>,
    pub n_actions: usize,
}

impl Batch {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Empty("dataset has no transitions".into()));
        }
        let dim = dataset.state_dim();
        let n = dataset.n_samples();
        let mut batch = Self {
            states: FeatureMatrix::with_capacity(dim, n),
            actions: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            next_states: FeatureMatrix::with_capacity(dim, n),
            terminal: Vec::with_capacity(n),
            n_actions: dataset.n_actions(),
        };
        for t in dataset.transitions() {
            batch.states.push(&t.state)?;
            batch.next_states.push(&t.next_state)?;
            batch.actions.push(t.action);
            batch.rewards.push(t.reward);
            batch.terminal.push(t.terminal);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

const CHUNK: usize = 256;

/// Empirical Bellman targets. Returns the targets and the number of Q
/// evaluations performed. Terminal transitions still evaluate `q` at the
/// next state but the bootstrap term is dropped, so the count depends only
/// on the mode and the batch size.
pub fn compute_targets<Q: QFunction + ?Sized>(q: &Q, batch: &Batch, mode: TargetMode, gamma: f64) -> (Vec<f64>, u64) {
    let counting = CountingQ {
        inner: q,
        calls: AtomicU64::new(0),
    };
    let n_actions = q.n_actions();
    let chunks: Vec<Vec<f64>> = (0..batch.len())
        .step_by(CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + CHUNK).min(batch.len());
            let rows: Vec<&[f64]> = (start..end).map(|i| batch.next_states.row(i)).collect();
            let bootstrap = match mode {
                TargetMode::Optimal => {
                    let mut best = vec![f64::NEG_INFINITY; rows.len()];
                    for a in 0..n_actions {
                        for (b, v) in best.iter_mut().zip(counting.value_rows(&rows, a)) {
                            *b = b.max(v);
                        }
                    }
                    best
                }
                TargetMode::Persistent => {
                    let mut out = vec![0.0; rows.len()];
                    for a in 0..n_actions {
                        let idx: Vec<usize> = (0..rows.len()).filter(|&i| batch.actions[start + i] == a).collect();
                        if idx.is_empty() {
                            continue;
                        }
                        let sel: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
                        for (&i, v) in idx.iter().zip(counting.value_rows(&sel, a)) {
                            out[i] = v;
                        }
                    }
                    out
                }
            };
            (start..end)
                .zip(bootstrap)
                .map(|(i, b)| {
                    if batch.terminal[i] {
                        batch.rewards[i]
                    } else {
                        batch.rewards[i] + gamma * b
                    }
                })
                .collect()
        })
        .collect();
    (chunks.concat(), counting.calls.into_inner())
}

/// Summary of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iter: usize,
    pub mode: TargetMode,
    pub y_mean: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub target_seconds: f64,
    pub fit_seconds: f64,
    pub eval_count: u64,
}

/// Output of one PFQI training.
#[derive(Debug, Clone)]
pub struct PersistenceRun {
    pub config: PfqiConfig,
    pub dataset_hash: String,
    pub n_samples: usize,
    pub final_q: FittedQ,
    /// `Q^(J+k)` when requested.
    pub continuation_q: Option<FittedQ>,
    /// `(iteration, Q^(iteration))` at the snapshot cadence (only filled by
    /// [`run_pfqi`]).
    pub snapshots: Vec<(usize, FittedQ)>,
    /// Iterations `0..J` followed by the continuation iterations.
    pub stats: Vec<IterationStats>,
    /// Q evaluations over the first `J` iterations.
    pub op_count: u64,
    pub wall_seconds: f64,
}

impl PersistenceRun {
    /// Total target-computation time over the first `J` iterations.
    pub fn phase1_seconds(&self) -> f64 {
        self.stats[..self.config.iterations].iter().map(|s| s.target_seconds).sum()
    }

    /// Greedy policy of the final iterate.
    pub fn policy(&self) -> DiscretePolicy {
        greedy_policy(self.final_q.clone())
    }

    /// Write `config.json`, `metrics.csv`, `model.json` and, if present,
    /// `continuation.json`. Timing columns are zero unless `timing` is set,
    /// which keeps the files byte-reproducible.
    pub fn write(&self, dir: &Path, timing: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = RunMeta {
            config: self.config.clone(),
            dataset_hash: self.dataset_hash.clone(),
            n_samples: self.n_samples,
            op_count: self.op_count,
            predicted_op_count: predicted_op_count(
                self.config.iterations,
                self.n_samples,
                self.final_q.n_actions(),
                self.config.persistence,
            )?,
        };
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        let mut csv = String::from("iter,mode,y_mean,y_min,y_max,fit_seconds,eval_count\n");
        for s in &self.stats {
            let secs = if timing { s.target_seconds + s.fit_seconds } else { 0.0 };
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                s.iter,
                s.mode.as_str(),
                fmt_f64(s.y_mean),
                fmt_f64(s.y_min),
                fmt_f64(s.y_max),
                fmt_f64(secs),
                s.eval_count
            );
        }
        fs::write(dir.join("metrics.csv"), csv)?;
        fs::write(dir.join("model.json"), self.final_q.to_json()?)?;
        if let Some(q) = &self.continuation_q {
            fs::write(dir.join("continuation.json"), q.to_json()?)?;
        }
        Ok(())
    }
}

/// Run metadata stored in `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: PfqiConfig,
    pub dataset_hash: String,
    pub n_samples: usize,
    pub op_count: u64,
    pub predicted_op_count: u64,
}

/// A run read back from disk.
#[derive(Debug, Clone)]
pub struct StoredRun {
    pub meta: RunMeta,
    pub final_q: FittedQ,
    pub continuation_q: Option<FittedQ>,
}

impl StoredRun {
    pub fn read(dir: &Path) -> Result<Self> {
        let missing = |what: &str| Error::Missing(format!("{what} in {}", dir.display()));
        let meta: RunMeta = serde_json::from_str(
            &fs::read_to_string(dir.join("config.json")).map_err(|_| missing("config.json"))?,
        )?;
        let final_q =
            FittedQ::from_json(&fs::read_to_string(dir.join("model.json")).map_err(|_| missing("model.json"))?)?;
        let cont = dir.join("continuation.json");
        let continuation_q = if cont.exists() {
            Some(FittedQ::from_json(&fs::read_to_string(cont)?)?)
        } else {
            None
        };
        Ok(Self {
            meta,
            final_q,
            continuation_q,
        })
    }
}

/// Phase 3: `π(s) = argmax_a Q(s, a)`, lowest index on ties.
pub fn greedy_policy<Q: QFunction + 'static>(q: Q) -> DiscretePolicy {
    DiscretePolicy::greedy(q)
}

/// Train PFQI and keep snapshots at the configured cadence.
pub fn run_pfqi(dataset: &Dataset, cfg: &PfqiConfig) -> Result<PersistenceRun> {
    let mut snapshots = Vec::new();
    let cadence = cfg.snapshot_cadence();
    let mut run = run_pfqi_with(dataset, cfg, |j, q| {
        if j % cadence == 0 && j <= cfg.iterations {
            snapshots.push((j, q.clone()));
        }
    })?;
    run.snapshots = snapshots;
    Ok(run)
}

/// Train PFQI, calling `observer(j, Q^(j))` for `j = 1, 2, …` after every
/// fit (continuation iterations included). No snapshots are stored.
pub fn run_pfqi_with<F>(dataset: &Dataset, cfg: &PfqiConfig, mut observer: F) -> Result<PersistenceRun>
where
    F: FnMut(usize, &FittedQ),
{
    cfg.validate()?;
    let manifest_gamma = dataset.discount();
    if (manifest_gamma - cfg.discount).abs() > 1e-12 {
        return Err(Error::DatasetMismatch(format!(
            "config discount {} differs from dataset discount {manifest_gamma}",
            cfg.discount
        )));
    }
    let start = Instant::now();
    let batch = Batch::from_dataset(dataset)?;
    let k = cfg.persistence;
    let total = cfg.iterations + if cfg.with_continuation { k } else { 0 };
    let mut q = FittedQ::zero(batch.states.dim(), batch.n_actions);
    let mut stats = Vec::with_capacity(total);
    let mut op_count = 0;
    let mut final_q = None;
    for j in 0..total {
        let mode = TargetMode::at(j, k);
        let t0 = Instant::now();
        let (y, evals) = compute_targets(&q, &batch, mode, cfg.discount);
        let target_seconds = t0.elapsed().as_secs_f64();
        if j < cfg.iterations {
            op_count += evals;
        }
        let t1 = Instant::now();
        q = FittedQ::fit(
            &cfg.regressor,
            &batch.states,
            &batch.actions,
            &y,
            batch.n_actions,
            seed::derive(cfg.seed, "pfqi-iter", j as u64),
        )?;
        let fit_seconds = t1.elapsed().as_secs_f64();
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &v in &y {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        stats.push(IterationStats {
            iter: j,
            mode,
            y_mean: sum / y.len() as f64,
            y_min: lo,
            y_max: hi,
            target_seconds,
            fit_seconds,
            eval_count: evals,
        });
        observer(j + 1, &q);
        if j + 1 == cfg.iterations {
            final_q = Some(q.clone());
        }
    }
    let final_q = final_q.unwrap_or_else(|| q.clone());
    Ok(PersistenceRun {
        config: cfg.clone(),
        dataset_hash: dataset.fingerprint(),
        n_samples: batch.len(),
        continuation_q: cfg.with_continuation.then_some(q),
        final_q,
        snapshots: Vec::new(),
        stats,
        op_count,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
