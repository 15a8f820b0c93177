//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `EXPECTED_FAILURES` are reported with their measured
//! values but do not fail the run; any other failure does.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use actpersist::exact::{counterexample_mdp, solve_q, solve_q_persistent, PersistentMethod, SolveMode, S_MINUS};
use actpersist::harness::{cmd_verify, run_all, ExperimentConfig, Report, VerifyReport, VerifySuite};
use actpersist::mdp::{Dataset, DatasetManifest, TabularMdp, Trajectory, Transition};
use actpersist::pfqi::{predicted_op_count, run_pfqi, PfqiConfig};
use actpersist::regress::RegressorSpec;
use actpersist::{seed, QFunction};
use rand::Rng;
use tempfile::TempDir;

const EXPECTED_FAILURES: &[u32] = &[7, 9];

const VERIFY_SEED: u64 = 20_240_601;
const COUNTEREXAMPLE_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-6;
const CARTPOLE_COLLAPSE_RATIO: f64 = 0.2;
const SELECT_MIN_FRACTION: f64 = 0.8;
const MIN_SEEDS: usize = 10;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::read(&configs_dir().join(format!("{name}.toml"))).unwrap();
    cfg.experiment.output = out.to_path_buf();
    cfg
}

fn verify_line(r: &VerifyReport, expected_checks: usize) -> Outcome {
    outcome(
        r.passed && r.n_checks == expected_checks,
        format!(
            "{} checks ({} expected), {} failures, max excess {:.3e}",
            r.n_checks, expected_checks, r.n_failures, r.max_excess
        ),
    )
}

fn c1_counterexample() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for r in [0.5, 1.0, 2.0] {
        for g in [0.5, 0.9, 0.99] {
            let m = counterexample_mdp(r, g);
            let expected = g * r / (1.0 - g);
            let v = solve_q(&m, SolveMode::Optimal, 1e-12).unwrap().state_values()[S_MINUS];
            worst = worst.max((v - expected).abs());
            for k in 2..=6 {
                let vk = solve_q_persistent(&m, k, SolveMode::Optimal, 1e-12, PersistentMethod::Explicit)
                    .unwrap()
                    .state_values()[S_MINUS];
                worst = worst.max((v - vk - 2.0 * expected).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= COUNTEREXAMPLE_TOL && secs < 1.0,
        format!("max deviation {worst:.2e} (tol {COUNTEREXAMPLE_TOL:e}), {secs:.3}s (< 1s)"),
    )
}

fn timed_verify(suite: VerifySuite, expected_checks: usize, budget: f64) -> Outcome {
    let start = Instant::now();
    let r = cmd_verify(suite, VERIFY_SEED).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let line = verify_line(&r, expected_checks);
    outcome(line.passed && secs < budget, format!("{}, {secs:.2}s (< {budget}s)", line.detail))
}

fn deterministic_mdp(seed_: u64) -> TabularMdp {
    let mut rng = seed::rng(seed_);
    let (ns, na) = (rng.gen_range(2..=8), rng.gen_range(1..=4));
    let mut p = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na];
    for sa in 0..ns * na {
        p[sa * ns + rng.gen_range(0..ns)] = 1.0;
        r[sa] = rng.gen_range(-1.0..1.0);
    }
    TabularMdp::new(ns, na, p, r, 0.9, None).unwrap()
}

fn covering_dataset(m: &TabularMdp) -> Dataset {
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut trajectories = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            let next = m.row(s, a).iter().position(|&p| p == 1.0).unwrap();
            let t = Transition {
                state: vec![s as f64],
                action: a,
                next_state: vec![next as f64],
                reward: m.reward(s, a),
                terminal: false,
            };
            trajectories.push(Trajectory::new(vec![t]).unwrap());
        }
    }
    let manifest = DatasetManifest {
        env_name: "tabular".into(),
        sampling_persistence: 1,
        collected_in_persistent_env: false,
        seed: 0,
        n_samples: ns * na,
        n_trajectories: ns * na,
        discount: m.discount(),
        state_dim: 1,
        n_actions: na,
        action_set: (0..na).map(|a| vec![a as f64]).collect(),
    };
    Dataset::new(trajectories, manifest).unwrap()
}

fn c4_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut instances = vec![counterexample_mdp(1.0, 0.9)];
    instances.extend((0..6).map(|i| deterministic_mdp(seed::derive(VERIFY_SEED, "oracle", i))));
    for m in &instances {
        let data = covering_dataset(m);
        for k in 1..=4 {
            let mut cfg = PfqiConfig::new(k, 360, m.discount());
            cfg.regressor = RegressorSpec::Table;
            let run = run_pfqi(&data, &cfg).unwrap();
            let exact = solve_q_persistent(m, k, SolveMode::Optimal, 1e-13, PersistentMethod::Composition).unwrap();
            for s in 0..m.n_states() {
                for a in 0..m.n_actions() {
                    worst = worst.max((run.final_q.value(&[s as f64], a) - exact.get(s, a)).abs());
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= ORACLE_TOL && secs < 10.0,
        format!(
            "{} instances, k=1..4, sup error {worst:.2e} (tol {ORACLE_TOL:e}), {secs:.2}s (< 10s)",
            instances.len()
        ),
    )
}

fn c5_opcount() -> Outcome {
    let r = cmd_verify(VerifySuite::Opcount, VERIFY_SEED).unwrap();
    let k4 = predicted_op_count(512, 400, 2, 4).unwrap();
    let line = verify_line(&r, 52);
    outcome(
        line.passed && k4 == 256_000,
        format!("{}, formula at (512,400,2,4) = {k4}", line.detail),
    )
}

fn table(report: &Report) -> BTreeMap<usize, f64> {
    report.table1.iter().map(|r| (r.k, r.mean)).collect()
}

fn c7_cartpole(report: &Report) -> Outcome {
    let t = table(report);
    let n = report.table1.iter().map(|r| r.n_seeds).min().unwrap_or(0);
    let (m1, m4) = (t[&1], t[&4]);
    let collapse = [8, 16].iter().all(|k| t[k] < CARTPOLE_COLLAPSE_RATIO * m4);
    outcome(
        n >= MIN_SEEDS && m4 > m1 && collapse,
        format!(
            "{n} seeds; means k=1 {:.1}, 2 {:.1}, 4 {:.1}, 8 {:.1}, 16 {:.1}; need k4>k1 and k8,k16 < {:.1}",
            m1,
            t[&2],
            m4,
            t[&8],
            t[&16],
            CARTPOLE_COLLAPSE_RATIO * m4
        ),
    )
}

fn c8_mountaincar(report: &Report) -> Outcome {
    let t = table(report);
    let n = report.table1.iter().map(|r| r.n_seeds).min().unwrap_or(0);
    let m1 = t[&1];
    let best = [4, 8, 16, 32]
        .iter()
        .map(|k| (*k, t[k]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    outcome(
        n >= MIN_SEEDS && best.1 > m1,
        format!(
            "{n} seeds; k=1 {m1:.2}; best mid k={} {:.2}; all {:?}",
            best.0,
            best.1,
            t.iter().map(|(k, v)| format!("{k}:{v:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn tabular_losses(root: &Path) -> (usize, f64) {
    let mut runs = 0;
    let mut worst: f64 = 0.0;
    for (r, g) in [(0.5, 0.5), (1.0, 0.9), (2.0, 0.8)] {
        let out = root.join(format!("tabular-{r}-{g}"));
        let mut cfg = load_config("counterexample", &out);
        cfg.env.magnitude = Some(r);
        cfg.env.original_discount = Some(g);
        let report = run_all(&cfg).unwrap();
        for s in &report.selection.unwrap().seeds {
            runs += 1;
            worst = worst.max(s.loss);
        }
    }
    (runs, worst)
}

fn c9_selection(report: &Report, scratch: &Path) -> Outcome {
    let sel = report.selection.as_ref().unwrap();
    let n = sel.seeds.len();
    let fours = sel.chosen_counts.get(&4).copied().unwrap_or(0);
    let (runs, worst) = tabular_losses(scratch);
    let fraction = fours as f64 / n as f64;
    outcome(
        n >= MIN_SEEDS && fraction >= SELECT_MIN_FRACTION && worst == 0.0,
        format!(
            "cartpole chose 4 in {fours}/{n} seeds (need >= {:.0}%), counts {:?}; tabular loss max {worst} over {runs} runs",
            SELECT_MIN_FRACTION * 100.0,
            sel.chosen_counts
        ),
    )
}

fn c10_cross(report: &Report) -> Outcome {
    let mean = |k: usize, ke: usize| report.cross.iter().find(|a| a.k == k && a.k_eval == ke).map(|a| a.mean);
    let mut hits = Vec::new();
    let mut parts = Vec::new();
    for k in [8, 16] {
        if let (Some(own), Some(e1), Some(e2)) = (mean(k, k), mean(k, 1), mean(k, 2)) {
            parts.push(format!("k={k}: at k'=k {own:.1}, k'=1 {e1:.1}, k'=2 {e2:.1}"));
            if e1 > own && e2 > own {
                hits.push(k);
            }
        }
    }
    outcome(!hits.is_empty(), format!("{}; improved k {:?}", parts.join("; "), hits))
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn c11_determinism(scratch: &Path) -> Outcome {
    let mut files = 0;
    let mut mismatched = Vec::new();
    for name in ["counterexample", "cartpole"] {
        let out = scratch.join(format!("repeat-{name}"));
        let mut cfg = load_config(name, &out);
        if name == "cartpole" {
            cfg.experiment.seeds = 2;
            cfg.pfqi.iterations = 16;
            cfg.pfqi.n_estimators = 10;
            cfg.select.candidates = vec![1, 2, 4];
            cfg.experiment.curve_episodes = 2;
            cfg.pfqi.snapshot_every = Some(8);
        }
        run_all(&cfg).unwrap();
        let first = snapshot(&out);
        fs::remove_dir_all(&out).unwrap();
        run_all(&cfg).unwrap();
        let second = snapshot(&out);
        files += first.len();
        if first != second {
            mismatched.push(name);
        }
    }
    let v1 = serde_json::to_string(&cmd_verify(VerifySuite::Duality, VERIFY_SEED).unwrap()).unwrap();
    let v2 = serde_json::to_string(&cmd_verify(VerifySuite::Duality, VERIFY_SEED).unwrap()).unwrap();
    if v1 != v2 {
        mismatched.push("verify");
    }
    outcome(
        mismatched.is_empty() && files > 0,
        format!("{files} artifacts compared across two runs, mismatches {mismatched:?}"),
    )
}

fn main() {
    let scratch = TempDir::new().unwrap();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let tag = match (o.passed, EXPECTED_FAILURES.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id:>2} {tag:<15} {name}: {} [{:.1}s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((id, name, o));
    };

    record(1, "counterexample tightness", &mut c1_counterexample);
    record(2, "duality", &mut || timed_verify(VerifySuite::Duality, 300, 10.0));
    record(3, "loss bound", &mut || timed_verify(VerifySuite::Bound, 600, 30.0));
    record(4, "oracle equivalence", &mut c4_oracle);
    record(5, "op count", &mut c5_opcount);
    record(6, "contraction", &mut || timed_verify(VerifySuite::Contraction, 900, 60.0));

    let cp_start = Instant::now();
    let cartpole = run_all(&load_config("cartpole", &scratch.path().join("cartpole"))).unwrap();
    let cp_secs = cp_start.elapsed().as_secs_f64();
    record(7, "cartpole trend", &mut || {
        let o = c7_cartpole(&cartpole);
        outcome(o.passed && cp_secs <= 1800.0, format!("{}; protocol {cp_secs:.0}s (<= 1800s)", o.detail))
    });
    let mountaincar = run_all(&load_config("mountaincar", &scratch.path().join("mountaincar"))).unwrap();
    record(8, "mountaincar trend", &mut || c8_mountaincar(&mountaincar));
    record(9, "persistence selection", &mut || c9_selection(&cartpole, scratch.path()));
    record(10, "cross persistence", &mut || c10_cross(&cartpole));
    record(11, "determinism", &mut || c11_determinism(scratch.path()));

    let unexpected: Vec<u32> = results
        .iter()
        .filter(|(id, _, o)| !o.passed && !EXPECTED_FAILURES.contains(id))
        .map(|(id, _, _)| *id)
        .collect();
    let passed = results.iter().filter(|(_, _, o)| o.passed).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
