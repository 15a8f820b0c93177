//! Self-generating numeric checks of the exact machinery.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exact::{
    apply_expectation, apply_optimal, apply_persistent, apply_persistent_composition, counterexample_mdp,
    persistence_loss_bound, solve_q, solve_q_persistent, PersistentMethod, SolveMode, TabularQ, S_MINUS,
};
use crate::mdp::{Dataset, DatasetManifest, TabularMdp, TabularPolicy, Trajectory, Transition};
use crate::pfqi::{predicted_op_count, run_pfqi, PfqiConfig};
use crate::regress::RegressorSpec;
use crate::seed;

const MAX_DUMPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifySuite {
    Contraction,
    Duality,
    Bound,
    Counterexample,
    Opcount,
}

impl VerifySuite {
    pub const ALL: [Self; 5] = [
        Self::Contraction,
        Self::Duality,
        Self::Bound,
        Self::Counterexample,
        Self::Opcount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Contraction => "contraction",
            Self::Duality => "duality",
            Self::Bound => "bound",
            Self::Counterexample => "counterexample",
            Self::Opcount => "opcount",
        }
    }
}

impl fmt::Display for VerifySuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerifySuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown verify suite `{s}`")))
    }
}

/// Outcome of one suite. `max_excess` is the largest amount by which any
/// check exceeded its allowance (≤ 0 when everything passed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: VerifySuite,
    pub seed: u64,
    pub passed: bool,
    pub n_checks: usize,
    pub n_failures: usize,
    pub max_excess: f64,
    pub failures: Vec<Value>,
}

struct Checker {
    n_checks: usize,
    n_failures: usize,
    max_excess: f64,
    failures: Vec<Value>,
}

impl Checker {
    fn new() -> Self {
        Self {
            n_checks: 0,
            n_failures: 0,
            max_excess: f64::NEG_INFINITY,
            failures: Vec::new(),
        }
    }

    /// Record `value ≤ allowance`; the dump is built only on failure.
    fn le(&mut self, value: f64, allowance: f64, dump: impl FnOnce() -> Value) {
        self.n_checks += 1;
        let excess = value - allowance;
        if excess > self.max_excess || excess.is_nan() {
            self.max_excess = if excess.is_nan() { f64::INFINITY } else { excess };
        }
        if !(excess <= 0.0) {
            self.n_failures += 1;
            if self.failures.len() < MAX_DUMPS {
                let mut d = dump();
                if let Value::Object(m) = &mut d {
                    m.insert("value".into(), json!(value));
                    m.insert("allowance".into(), json!(allowance));
                }
                self.failures.push(d);
            }
        }
    }

    fn finish(self, suite: VerifySuite, seed: u64) -> VerifyReport {
        VerifyReport {
            suite,
            seed,
            passed: self.n_failures == 0,
            n_checks: self.n_checks,
            n_failures: self.n_failures,
            max_excess: if self.n_checks == 0 { 0.0 } else { self.max_excess },
            failures: self.failures,
        }
    }
}

fn random_q<R: Rng>(rng: &mut R, ns: usize, na: usize, scale: f64) -> TabularQ {
    let values = (0..ns * na).map(|_| rng.gen_range(-scale..scale)).collect();
    TabularQ::from_values(ns, na, values).expect("sizes match")
}

fn random_instance<R: Rng>(rng: &mut R, max_gamma: f64) -> TabularMdp {
    let ns = rng.gen_range(2..=10);
    let na = rng.gen_range(1..=4);
    let gamma = rng.gen_range(0.3..max_gamma);
    TabularMdp::random(rng, ns, na, gamma)
}

/// `‖Tq₁ − Tq₂‖_∞ ≤ c‖q₁ − q₂‖_∞` for `T^π`, `T*`, `T^δ` (`c = γ`) and the
/// k-persistent compositions (`c = γ^k`, `k ∈ {2,3,5}`).
fn contraction(seed: u64) -> Result<VerifyReport> {
    let mut c = Checker::new();
    for trial in 0..100u64 {
        let mut rng = seed::rng(seed::derive(seed, "contraction", trial));
        let m = random_instance(&mut rng, 0.99);
        let (ns, na, g) = (m.n_states(), m.n_actions(), m.discount());
        let pi = TabularPolicy::random(&mut rng, ns, na);
        let q1 = random_q(&mut rng, ns, na, 10.0);
        let q2 = random_q(&mut rng, ns, na, 10.0);
        let d = q1.sup_distance(&q2);
        let slack = 1e-12 * (1.0 + d);
        let ops: [(&str, TabularQ, TabularQ, f64); 3] = [
            ("expectation", apply_expectation(&m, &pi, &q1)?, apply_expectation(&m, &pi, &q2)?, g),
            ("optimal", apply_optimal(&m, &q1)?, apply_optimal(&m, &q2)?, g),
            ("persistent", apply_persistent(&m, &q1)?, apply_persistent(&m, &q2)?, g),
        ];
        for (name, t1, t2, factor) in ops {
            c.le(t1.sup_distance(&t2), factor * d + slack, || {
                json!({"trial": trial, "operator": name, "gamma": g, "mdp": m.to_doc()})
            });
        }
        for k in [2usize, 3, 5] {
            let gk = g.powi(k as i32);
            for (name, mode) in [("optimal", SolveMode::Optimal), ("expectation", SolveMode::Expectation(&pi))] {
                let t1 = apply_persistent_composition(&m, mode, &q1, k)?;
                let t2 = apply_persistent_composition(&m, mode, &q2, k)?;
                c.le(t1.sup_distance(&t2), gk * d + slack, || {
                    json!({"trial": trial, "operator": format!("persistent-{name}"), "k": k, "gamma": g, "mdp": m.to_doc()})
                });
            }
        }
    }
    Ok(c.finish(VerifySuite::Contraction, seed))
}

/// Composition and explicit k-persistent MDP fixed points agree, and
/// `Q*_k ≤ Q*`.
fn duality(seed: u64) -> Result<VerifyReport> {
    let mut c = Checker::new();
    for trial in 0..20u64 {
        let mut rng = seed::rng(seed::derive(seed, "duality", trial));
        let m = random_instance(&mut rng, 0.95);
        let pi = TabularPolicy::random(&mut rng, m.n_states(), m.n_actions());
        let q_star = solve_q(&m, SolveMode::Optimal, 1e-11)?;
        for k in 1..=5 {
            for (name, mode) in [("optimal", SolveMode::Optimal), ("expectation", SolveMode::Expectation(&pi))] {
                let a = solve_q_persistent(&m, k, mode, 1e-11, PersistentMethod::Composition)?;
                let b = solve_q_persistent(&m, k, mode, 1e-11, PersistentMethod::Explicit)?;
                c.le(a.sup_distance(&b), 1e-8, || {
                    json!({"trial": trial, "k": k, "mode": name, "mdp": m.to_doc()})
                });
                if name == "optimal" {
                    let excess = a
                        .values()
                        .iter()
                        .zip(q_star.values())
                        .fold(f64::NEG_INFINITY, |acc, (qk, q)| acc.max(qk - q));
                    c.le(excess, 1e-8, || {
                        json!({"trial": trial, "k": k, "check": "Q*_k <= Q*", "mdp": m.to_doc()})
                    });
                }
            }
        }
    }
    Ok(c.finish(VerifySuite::Duality, seed))
}

/// The performance-loss bound on random `(MDP, policy, ρ)` triples, and its
/// tightness at zero for constant-action policies started on their own action.
fn bound(seed: u64) -> Result<VerifyReport> {
    let mut c = Checker::new();
    for trial in 0..50u64 {
        let mut rng = seed::rng(seed::derive(seed, "bound", trial));
        let m = random_instance(&mut rng, 0.95);
        let (ns, na) = (m.n_states(), m.n_actions());
        let pi = TabularPolicy::random(&mut rng, ns, na);
        let mut rho: Vec<f64> = (0..ns * na).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = rho.iter().sum();
        rho.iter_mut().for_each(|r| *r /= total);
        let c_action = trial as usize % na;
        let constant = TabularPolicy::deterministic(&vec![c_action; ns], na)?;
        let mut rho_c: Vec<f64> = (0..ns * na)
            .map(|i| if i % na == c_action { rng.gen_range(0.1..1.0) } else { 0.0 })
            .collect();
        let total_c: f64 = rho_c.iter().sum();
        rho_c.iter_mut().for_each(|r| *r /= total_c);
        for k in [2usize, 3, 4] {
            for p in [1.0, 2.0] {
                let r = persistence_loss_bound(&m, &pi, Some(&rho), k, p)?;
                c.le(r.lhs, r.rhs + 1e-8, || {
                    json!({"trial": trial, "k": k, "p": p, "lhs": r.lhs, "rhs": r.rhs, "mdp": m.to_doc()})
                });
                let z = persistence_loss_bound(&m, &constant, Some(&rho_c), k, p)?;
                c.le(z.lhs.abs().max(z.rhs.abs()), 1e-9, || {
                    json!({"trial": trial, "k": k, "p": p, "check": "constant policy", "lhs": z.lhs, "rhs": z.rhs})
                });
            }
        }
    }
    Ok(c.finish(VerifySuite::Bound, seed))
}

/// `V*(s⁻) − V*_k(s⁻) = 2γR/(1−γ)` and `V*(s⁻) = γR/(1−γ)` on the
/// counterexample MDP.
fn counterexample(seed: u64) -> Result<VerifyReport> {
    let mut c = Checker::new();
    for r in [0.5, 1.0, 2.0] {
        for g in [0.5, 0.9, 0.99] {
            let m = counterexample_mdp(r, g);
            let v = solve_q(&m, SolveMode::Optimal, 1e-12)?.state_values()[S_MINUS];
            let expected = g * r / (1.0 - g);
            c.le((v - expected).abs(), 1e-9, || json!({"R": r, "gamma": g, "k": 1, "v_star": v}));
            for k in 2..=6 {
                let vk = solve_q_persistent(&m, k, SolveMode::Optimal, 1e-12, PersistentMethod::Explicit)?
                    .state_values()[S_MINUS];
                c.le((v - vk - 2.0 * expected).abs(), 1e-9, || {
                    json!({"R": r, "gamma": g, "k": k, "v_star": v, "v_star_k": vk})
                });
            }
        }
    }
    Ok(c.finish(VerifySuite::Counterexample, seed))
}

fn synthetic_dataset(seed: u64, n: usize, n_actions: usize) -> Result<Dataset> {
    let mut rng = seed::rng(seed);
    let mut trajectories = Vec::new();
    let mut current: Vec<Transition> = Vec::new();
    let mut state = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    for i in 0..n {
        let next: Vec<f64> = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let terminal = rng.gen_bool(0.05) || i + 1 == n;
        current.push(Transition {
            state: std::mem::replace(&mut state, next.clone()),
            action: rng.gen_range(0..n_actions),
            next_state: next,
            reward: rng.gen_range(-1.0..1.0),
            terminal,
        });
        if terminal {
            trajectories.push(Trajectory::new(std::mem::take(&mut current))?);
            state = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        }
    }
    let manifest = DatasetManifest {
        env_name: "synthetic".into(),
        sampling_persistence: 1,
        collected_in_persistent_env: false,
        seed,
        n_samples: n,
        n_trajectories: trajectories.len(),
        discount: 0.9,
        state_dim: 2,
        n_actions,
        action_set: (0..n_actions).map(|a| vec![a as f64]).collect(),
    };
    Dataset::new(trajectories, manifest)
}

/// Instrumented target-computation counts equal the closed form.
fn opcount(seed: u64) -> Result<VerifyReport> {
    let mut c = Checker::new();
    let mut grid: Vec<(usize, usize, usize, usize)> = [1, 2, 4, 8].iter().map(|&k| (512, 400, 2, k)).collect();
    for n in [1, 13] {
        for a in [1, 3, 5] {
            for k in [1, 2, 3, 4, 6, 8, 12, 24] {
                grid.push((24, n, a, k));
            }
        }
    }
    for (i, &(j, n, a, k)) in grid.iter().enumerate() {
        let data = synthetic_dataset(seed::derive(seed, "opcount", i as u64), n, a)?;
        let mut cfg = PfqiConfig::new(k, j, 0.9);
        cfg.regressor = RegressorSpec::Table;
        let run = run_pfqi(&data, &cfg)?;
        let expected = predicted_op_count(j, n, a, k)?;
        let diff = (run.op_count as f64 - expected as f64).abs();
        c.le(diff, 0.0, || {
            json!({"J": j, "n": n, "n_actions": a, "k": k, "instrumented": run.op_count, "formula": expected})
        });
    }
    Ok(c.finish(VerifySuite::Opcount, seed))
}

/// Run one verification suite with instances derived from `seed`.
pub fn cmd_verify(suite: VerifySuite, seed: u64) -> Result<VerifyReport> {
    match suite {
        VerifySuite::Contraction => contraction(seed),
        VerifySuite::Duality => duality(seed),
        VerifySuite::Bound => bound(seed),
        VerifySuite::Counterexample => counterexample(seed),
        VerifySuite::Opcount => opcount(seed),
    }
}
