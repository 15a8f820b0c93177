//! Experiment orchestration behind the command-line tool: dataset
//! collection, persistence sweeps, Monte-Carlo evaluation (including
//! cross-persistence), selection and report emission.
//!
//! Output layout under `experiment.output`:
//!
//! ```text
//! experiment.json                  config and its hash
//! data/seed-NNN.{csv,json}         one dataset per seed
//! runs/seed-NNN/k-NNN/             PFQI run artifacts (+ curves.csv)
//! train.json
//! eval/{episodes.csv,summary.csv,eval.json}
//! select/{seed-NNN.csv,seed-NNN.json,summary.csv,select.json}
//! report/{table1.csv,table1_undiscounted.csv,cross.csv,curves.csv,report.json}
//! ```

mod config;
mod verify;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{CollectSection, EnvSection, EvalSection, ExperimentConfig, ExperimentSection, PfqiSection, SelectSection};
pub use verify::{cmd_verify, VerifyReport, VerifySuite};

use crate::env::{collect_dataset, Environment};
use crate::error::{Error, Result};
use crate::mdp::{fmt_f64, persistent_rollout, Dataset, DiscretePolicy};
use crate::pfqi::{run_pfqi_with, PfqiConfig, StoredRun};
use crate::regress::FittedQ;
use crate::select::{performance_loss, selection_entry, SelectionReport};
use crate::seed;

/// Paths of every artifact of an experiment.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset_csv(&self, seed: usize) -> PathBuf {
        self.root.join("data").join(format!("seed-{seed:03}.csv"))
    }

    pub fn run_dir(&self, seed: usize, k: usize) -> PathBuf {
        self.root.join("runs").join(format!("seed-{seed:03}")).join(format!("k-{k:03}"))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn select_dir(&self) -> PathBuf {
        self.root.join("select")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Seed streams fanned out from the master seed.
pub mod streams {
    use crate::seed::derive;

    pub fn collect(master: u64, seed: usize) -> u64 {
        derive(master, "collect", seed as u64)
    }

    pub fn train(master: u64, seed: usize, k: usize) -> u64 {
        derive(derive(master, "train", seed as u64), "persistence", k as u64)
    }

    /// Shared by every `(k, k')` of a seed so policies face the same
    /// episode starts.
    pub fn eval(master: u64, seed: usize) -> u64 {
        derive(master, "eval", seed as u64)
    }

    pub fn curve(master: u64, seed: usize) -> u64 {
        derive(master, "curve", seed as u64)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, hint: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|_| Error::Missing(format!("{} ({hint})", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ExperimentRecord {
    config_hash: String,
    config: ExperimentConfig,
}

fn record_experiment(cfg: &ExperimentConfig) -> Result<Layout> {
    let layout = Layout::new(&cfg.experiment.output);
    write_json(
        &layout.root.join("experiment.json"),
        &ExperimentRecord {
            config_hash: cfg.hash(),
            config: cfg.clone(),
        },
    )?;
    Ok(layout)
}

// ---------------------------------------------------------------- collect

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub seed: usize,
    pub path: PathBuf,
    pub n_samples: usize,
    pub n_trajectories: usize,
    pub n_terminal: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub config_hash: String,
    pub datasets: Vec<DatasetInfo>,
}

/// Collect one dataset per seed with the uniform policy at `k_sampling`.
pub fn cmd_collect(cfg: &ExperimentConfig) -> Result<CollectSummary> {
    cfg.validate()?;
    let layout = record_experiment(cfg)?;
    let budget = cfg.collect.budget()?;
    let datasets = (0..cfg.experiment.seeds)
        .into_par_iter()
        .map(|s| {
            let mut env = cfg.env.build()?;
            let policy = DiscretePolicy::Uniform {
                n_actions: env.n_actions(),
            };
            let data = collect_dataset(
                &mut env,
                &policy,
                cfg.collect.k_sampling,
                budget,
                streams::collect(cfg.experiment.master_seed, s),
                cfg.collect.mode,
            )?;
            let csv = layout.dataset_csv(s);
            let stem = csv.file_stem().and_then(|x| x.to_str()).unwrap_or("dataset").to_string();
            data.write(csv.parent().unwrap_or(Path::new(".")), &stem)?;
            Ok(DatasetInfo {
                seed: s,
                path: csv,
                n_samples: data.n_samples(),
                n_trajectories: data.trajectories().len(),
                n_terminal: data.trajectories().iter().filter(|t| t.ends_terminal()).count(),
                fingerprint: data.fingerprint(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = CollectSummary {
        config_hash: cfg.hash(),
        datasets,
    };
    write_json(&layout.root.join("collect.json"), &summary)?;
    Ok(summary)
}

pub fn load_dataset(cfg: &ExperimentConfig, seed: usize) -> Result<Dataset> {
    let path = Layout::new(&cfg.experiment.output).dataset_csv(seed);
    if !path.exists() {
        return Err(Error::Missing(format!("{} (run `collect` first)", path.display())));
    }
    Dataset::read(&path)
}

// ------------------------------------------------------------------ train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub iter: usize,
    pub j_hat: f64,
    pub residual: f64,
    pub index: f64,
    pub mc_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: usize,
    pub k: usize,
    pub op_count: u64,
    pub predicted_op_count: u64,
    /// Target-computation time over the first `J` iterations (zero unless
    /// timing is enabled).
    pub phase1_seconds: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub runs: Vec<RunInfo>,
}

impl TrainSummary {
    pub fn run(&self, seed: usize, k: usize) -> Option<&RunInfo> {
        self.runs.iter().find(|r| r.seed == seed && r.k == k)
    }
}

/// Mean discounted and undiscounted returns of `policy` executed at
/// persistence `k` over `episodes` episodes seeded from `seed`.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    policy: &DiscretePolicy,
    k: usize,
    episodes: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let gamma = env.discount();
    let horizon = env.spec().horizon;
    let mut discounted = Vec::with_capacity(episodes);
    let mut undiscounted = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let traj = persistent_rollout(env, policy, k, horizon, seed::derive(seed, "episode", e as u64))?;
        discounted.push(traj.discounted_return(gamma));
        undiscounted.push(traj.undiscounted_return());
    }
    Ok((discounted, undiscounted))
}

struct CurveTracker<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a Dataset,
    env: Box<dyn Environment>,
    k: usize,
    cadence: usize,
    eval_seed: u64,
    pending: BTreeMap<usize, FittedQ>,
    points: Vec<CurvePoint>,
    error: Option<Error>,
}

impl CurveTracker<'_> {
    fn observe(&mut self, j: usize, q: &FittedQ) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.try_observe(j, q) {
            self.error = Some(e);
        }
    }

    fn try_observe(&mut self, j: usize, q: &FittedQ) -> Result<()> {
        if j >= self.k {
            if let Some(prev) = self.pending.remove(&(j - self.k)) {
                let entry = selection_entry(self.k, &prev, q, self.data, self.data.discount())?;
                let policy = DiscretePolicy::greedy(prev);
                let exec_k = self.cfg.execution_persistence(self.k);
                let (disc, _) = evaluate_policy(
                    &mut *self.env,
                    &policy,
                    exec_k,
                    self.cfg.experiment.curve_episodes,
                    self.eval_seed,
                )?;
                self.points.push(CurvePoint {
                    k: self.k,
                    iter: j - self.k,
                    j_hat: entry.j_hat,
                    residual: entry.residual,
                    index: entry.index,
                    mc_return: mean_std(&disc).0,
                });
            }
        }
        if j % self.cadence == 0 && j <= self.cfg.pfqi.iterations {
            self.pending.insert(j, q.clone());
        }
        Ok(())
    }
}

fn curves_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("k,iter,j_hat,residual,index,mc_return\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.k,
            p.iter,
            fmt_f64(p.j_hat),
            fmt_f64(p.residual),
            fmt_f64(p.index),
            fmt_f64(p.mc_return)
        );
    }
    out
}

fn train_one(cfg: &ExperimentConfig, data: &Dataset, s: usize, k: usize) -> Result<RunInfo> {
    let layout = Layout::new(&cfg.experiment.output);
    let mut pcfg = PfqiConfig::new(k, cfg.pfqi.iterations, data.discount());
    pcfg.regressor = cfg.pfqi.regressor_spec()?;
    pcfg.snapshot_every = cfg.pfqi.snapshot_every;
    pcfg.seed = streams::train(cfg.experiment.master_seed, s, k);
    pcfg.with_continuation = true;
    let dir = layout.run_dir(s, k);
    let run = if cfg.experiment.curve_episodes > 0 {
        let mut tracker = CurveTracker {
            cfg,
            data,
            env: cfg.env.build()?,
            k,
            cadence: pcfg.snapshot_cadence(),
            eval_seed: streams::curve(cfg.experiment.master_seed, s),
            pending: BTreeMap::new(),
            points: Vec::new(),
            error: None,
        };
        // the initial iterate Q^(0) = 0 is part of the curve
        tracker.observe(0, &FittedQ::zero(data.state_dim(), data.n_actions()));
        let run = run_pfqi_with(data, &pcfg, |j, q| tracker.observe(j, q))?;
        if let Some(e) = tracker.error {
            return Err(e);
        }
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("curves.csv"), curves_csv(&tracker.points))?;
        run
    } else {
        run_pfqi_with(data, &pcfg, |_, _| {})?
    };
    run.write(&dir, cfg.experiment.timing)?;
    let timing = cfg.experiment.timing;
    Ok(RunInfo {
        seed: s,
        k,
        op_count: run.op_count,
        predicted_op_count: crate::pfqi::predicted_op_count(
            cfg.pfqi.iterations,
            run.n_samples,
            data.n_actions(),
            k,
        )?,
        phase1_seconds: if timing { run.phase1_seconds() } else { 0.0 },
        wall_seconds: if timing { run.wall_seconds } else { 0.0 },
    })
}

/// Train PFQI for every `(seed, k)` (plus the `k`-iteration continuation
/// needed by selection).
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let layout = record_experiment(cfg)?;
    let datasets = (0..cfg.experiment.seeds)
        .map(|s| load_dataset(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.experiment.seeds)
        .flat_map(|s| cfg.candidates().into_iter().map(move |k| (s, k)))
        .collect();
    let runs = jobs
        .into_par_iter()
        .map(|(s, k)| train_one(cfg, &datasets[s], s, k))
        .collect::<Result<Vec<_>>>()?;
    let summary = TrainSummary {
        config_hash: cfg.hash(),
        runs,
    };
    write_json(&layout.root.join("train.json"), &summary)?;
    Ok(summary)
}

fn load_run(cfg: &ExperimentConfig, s: usize, k: usize) -> Result<StoredRun> {
    let dir = Layout::new(&cfg.experiment.output).run_dir(s, k);
    if !dir.exists() {
        return Err(Error::Missing(format!("{} (run `train` first)", dir.display())));
    }
    StoredRun::read(&dir)
}

// --------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub seed: usize,
    /// Training persistence.
    pub k: usize,
    /// Execution persistence in the base environment.
    pub k_eval: usize,
    pub discounted: Vec<f64>,
    pub undiscounted: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub undiscounted_mean: f64,
    pub undiscounted_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEntry {
    pub k: usize,
    pub k_eval: usize,
    /// Mean and sample std over seeds of the per-seed mean returns.
    pub mean: f64,
    pub std: f64,
    pub undiscounted_mean: f64,
    pub undiscounted_std: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub env: String,
    pub discount: f64,
    pub episodes: usize,
    pub entries: Vec<EvalEntry>,
    pub aggregate: Vec<AggregateEntry>,
}

impl EvalReport {
    /// Recompute the aggregate table from the per-episode returns.
    pub fn aggregate_from_entries(entries: &[EvalEntry]) -> Vec<AggregateEntry> {
        let mut groups: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for e in entries {
            let g = groups.entry((e.k, e.k_eval)).or_default();
            g.0.push(mean_std(&e.discounted).0);
            g.1.push(mean_std(&e.undiscounted).0);
        }
        groups
            .into_iter()
            .map(|((k, k_eval), (d, u))| {
                let (mean, std) = mean_std(&d);
                let (undiscounted_mean, undiscounted_std) = mean_std(&u);
                AggregateEntry {
                    k,
                    k_eval,
                    mean,
                    std,
                    undiscounted_mean,
                    undiscounted_std,
                    n_seeds: d.len(),
                }
            })
            .collect()
    }

    pub fn aggregate(&self, k: usize, k_eval: usize) -> Option<&AggregateEntry> {
        self.aggregate.iter().find(|a| a.k == k && a.k_eval == k_eval)
    }

    pub fn entry(&self, seed: usize, k: usize, k_eval: usize) -> Option<&EvalEntry> {
        self.entries
            .iter()
            .find(|e| e.seed == seed && e.k == k && e.k_eval == k_eval)
    }
}

/// Roll out every trained greedy policy at its own persistence and at each
/// cross-evaluation persistence; returns are discounted with the base `γ`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let layout = record_experiment(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.experiment.seeds)
        .flat_map(|s| cfg.candidates().into_iter().map(move |k| (s, k)))
        .collect();
    let per_run = jobs
        .into_par_iter()
        .map(|(s, k)| -> Result<Vec<EvalEntry>> {
            let run = load_run(cfg, s, k)?;
            let policy = DiscretePolicy::greedy(run.final_q);
            let mut env = cfg.env.build()?;
            let mut out = Vec::new();
            for k_eval in cfg.eval_persistences(k) {
                let (discounted, undiscounted) = evaluate_policy(
                    &mut *env,
                    &policy,
                    k_eval,
                    cfg.eval.episodes,
                    streams::eval(cfg.experiment.master_seed, s),
                )?;
                let (mean, std) = mean_std(&discounted);
                let (undiscounted_mean, undiscounted_std) = mean_std(&undiscounted);
                out.push(EvalEntry {
                    seed: s,
                    k,
                    k_eval,
                    discounted,
                    undiscounted,
                    mean,
                    std,
                    undiscounted_mean,
                    undiscounted_std,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let entries: Vec<EvalEntry> = per_run.into_iter().flatten().collect();
    let env = cfg.env.build()?;
    let report = EvalReport {
        config_hash: cfg.hash(),
        env: env.spec().name.clone(),
        discount: env.discount(),
        episodes: cfg.eval.episodes,
        aggregate: EvalReport::aggregate_from_entries(&entries),
        entries,
    };
    let dir = layout.eval_dir();
    fs::create_dir_all(&dir)?;
    let mut episodes = String::from("seed,k,k_eval,episode,discounted,undiscounted\n");
    let mut summary = String::from("seed,k,k_eval,mean,std,undiscounted_mean,undiscounted_std\n");
    for e in &report.entries {
        for (i, (d, u)) in e.discounted.iter().zip(&e.undiscounted).enumerate() {
            let _ = writeln!(episodes, "{},{},{},{i},{},{}", e.seed, e.k, e.k_eval, fmt_f64(*d), fmt_f64(*u));
        }
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            e.seed,
            e.k,
            e.k_eval,
            fmt_f64(e.mean),
            fmt_f64(e.std),
            fmt_f64(e.undiscounted_mean),
            fmt_f64(e.undiscounted_std)
        );
    }
    fs::write(dir.join("episodes.csv"), episodes)?;
    fs::write(dir.join("summary.csv"), summary)?;
    write_json(&dir.join("eval.json"), &report)?;
    Ok(report)
}

// ----------------------------------------------------------------- select

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSelection {
    pub seed: usize,
    pub report: SelectionReport,
    /// Mean discounted return of each `k` executed at its own persistence.
    pub evals: BTreeMap<usize, f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectSummary {
    pub config_hash: String,
    pub seeds: Vec<SeedSelection>,
    /// How often each candidate was chosen.
    pub chosen_counts: BTreeMap<usize, usize>,
    pub mean_loss: f64,
    pub std_loss: f64,
}

/// Persistence selection per seed and the resulting performance loss
/// (needs `train` and `evaluate` outputs).
pub fn cmd_select(cfg: &ExperimentConfig) -> Result<SelectSummary> {
    cfg.validate()?;
    let layout = record_experiment(cfg)?;
    let eval: EvalReport = read_json(&layout.eval_dir().join("eval.json"), "run `evaluate` first")?;
    let mut seeds = Vec::with_capacity(cfg.experiment.seeds);
    for s in 0..cfg.experiment.seeds {
        let data = load_dataset(cfg, s)?;
        let hash = data.fingerprint();
        let mut entries = Vec::new();
        let mut evals = BTreeMap::new();
        for k in cfg.candidates() {
            let run = load_run(cfg, s, k)?;
            if run.meta.dataset_hash != hash {
                return Err(Error::DatasetMismatch(format!(
                    "run seed {s}, k={k} was trained on another dataset"
                )));
            }
            let cont = run
                .continuation_q
                .as_ref()
                .ok_or_else(|| Error::Missing(format!("continuation Q for seed {s}, k={k}")))?;
            entries.push(selection_entry(k, &run.final_q, cont, &data, data.discount())?);
            let e = eval
                .entry(s, k, cfg.execution_persistence(k))
                .ok_or_else(|| Error::Missing(format!("evaluation for seed {s}, k={k}")))?;
            evals.insert(k, e.mean);
        }
        let report = SelectionReport::from_entries(entries)?;
        let loss = performance_loss(&evals, report.chosen)?;
        let dir = layout.select_dir();
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(format!("seed-{s:03}.csv")), report.to_csv())?;
        fs::write(dir.join(format!("seed-{s:03}.json")), report.to_json()?)?;
        seeds.push(SeedSelection {
            seed: s,
            report,
            evals,
            loss,
        });
    }
    let mut chosen_counts: BTreeMap<usize, usize> = cfg.candidates().into_iter().map(|k| (k, 0)).collect();
    for s in &seeds {
        *chosen_counts.entry(s.report.chosen).or_default() += 1;
    }
    let losses: Vec<f64> = seeds.iter().map(|s| s.loss).collect();
    let (mean_loss, std_loss) = mean_std(&losses);
    let summary = SelectSummary {
        config_hash: cfg.hash(),
        seeds,
        chosen_counts,
        mean_loss,
        std_loss,
    };
    let mut csv = String::from("seed,chosen,loss\n");
    for s in &summary.seeds {
        let _ = writeln!(csv, "{},{},{}", s.seed, s.report.chosen, fmt_f64(s.loss));
    }
    fs::write(layout.select_dir().join("summary.csv"), csv)?;
    write_json(&layout.select_dir().join("select.json"), &summary)?;
    Ok(summary)
}

// ----------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub env: String,
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub table1: Vec<Table1Row>,
    pub table1_undiscounted: Vec<Table1Row>,
    pub cross: Vec<AggregateEntry>,
    pub curves: Vec<CurvePoint>,
    pub selection: Option<SelectSummary>,
}

fn read_curves(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Flatten evaluation, selection and curve outputs into per-persistence
/// summary tables and learning-curve CSV files.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let layout = record_experiment(cfg)?;
    let eval: EvalReport = read_json(&layout.eval_dir().join("eval.json"), "run `evaluate` first")?;
    let own: Vec<&AggregateEntry> = cfg
        .candidates()
        .into_iter()
        .filter_map(|k| eval.aggregate(k, cfg.execution_persistence(k)))
        .collect();
    let row = |a: &AggregateEntry, undiscounted: bool| Table1Row {
        env: eval.env.clone(),
        k: a.k,
        mean: if undiscounted { a.undiscounted_mean } else { a.mean },
        std: if undiscounted { a.undiscounted_std } else { a.std },
        n_seeds: a.n_seeds,
    };
    let table1: Vec<Table1Row> = own.iter().map(|a| row(a, false)).collect();
    let table1_undiscounted: Vec<Table1Row> = own.iter().map(|a| row(a, true)).collect();

    // curves averaged over seeds, per (k, iter)
    let mut sums: BTreeMap<(usize, usize), (usize, [f64; 4])> = BTreeMap::new();
    for s in 0..cfg.experiment.seeds {
        for k in cfg.candidates() {
            let path = layout.run_dir(s, k).join("curves.csv");
            if !path.exists() {
                continue;
            }
            for p in read_curves(&path)? {
                let e = sums.entry((p.k, p.iter)).or_insert((0, [0.0; 4]));
                e.0 += 1;
                for (acc, v) in e.1.iter_mut().zip([p.j_hat, p.residual, p.index, p.mc_return]) {
                    *acc += v;
                }
            }
        }
    }
    let curves: Vec<CurvePoint> = sums
        .into_iter()
        .map(|((k, iter), (n, [a, b, c, d]))| {
            let n = n as f64;
            CurvePoint {
                k,
                iter,
                j_hat: a / n,
                residual: b / n,
                index: c / n,
                mc_return: d / n,
            }
        })
        .collect();
    let select_path = layout.select_dir().join("select.json");
    let selection: Option<SelectSummary> = if select_path.exists() {
        Some(read_json(&select_path, "selection summary")?)
    } else {
        None
    };

    let dir = layout.report_dir();
    fs::create_dir_all(&dir)?;
    let table_csv = |rows: &[Table1Row]| {
        let mut out = String::from("env,k,mean,std,n_seeds\n");
        for r in rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.env, r.k, fmt_f64(r.mean), fmt_f64(r.std), r.n_seeds);
        }
        out
    };
    fs::write(dir.join("table1.csv"), table_csv(&table1))?;
    fs::write(dir.join("table1_undiscounted.csv"), table_csv(&table1_undiscounted))?;
    let mut cross = String::from("env,k,k_eval,mean,std,n_seeds\n");
    for a in &eval.aggregate {
        let _ = writeln!(
            cross,
            "{},{},{},{},{},{}",
            eval.env,
            a.k,
            a.k_eval,
            fmt_f64(a.mean),
            fmt_f64(a.std),
            a.n_seeds
        );
    }
    fs::write(dir.join("cross.csv"), cross)?;
    fs::write(dir.join("curves.csv"), curves_csv(&curves))?;
    let report = Report {
        config_hash: cfg.hash(),
        table1,
        table1_undiscounted,
        cross: eval.aggregate.clone(),
        curves,
        selection,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

/// `collect`, `train`, `evaluate`, `select` and `report` in sequence.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Report> {
    cmd_collect(cfg)?;
    cmd_train(cfg)?;
    cmd_evaluate(cfg)?;
    cmd_select(cfg)?;
    cmd_report(cfg)
}
