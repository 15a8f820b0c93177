//! Exact Bellman operators and fixed-point solvers on tabular MDPs.

mod bound;
mod counterexample;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{state_index, TabularMdp, TabularPolicy};
use crate::qfunction::{argmax, QFunction};

pub use bound::{eta_truncated, persistence_loss_bound, BoundReport};
pub use counterexample::{counterexample_mdp, S1, S2, S3, S_MINUS};

/// Default solver tolerance on `‖q − q_fix‖_∞`.
pub const DEFAULT_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 50_000_000;

/// Dense action-value table `Q[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularQ {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl TabularQ {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "{} values for a {n_states}x{n_actions} table",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("non-finite Q value".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `V(s) = max_a Q(s, a)`.
    pub fn state_values(&self) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Greedy actions, lowest index on ties.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| argmax(self.row(s))).collect()
    }

    /// `Σ_a π(a|s) Q(s, a)`.
    pub fn policy_values(&self, pi: &TabularPolicy) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.row(s).iter().zip(pi.row(s)).map(|(q, p)| q * p).sum())
            .collect()
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

impl QFunction for TabularQ {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Looks up `state[0]` as a state index; unknown indices evaluate to 0.
    fn value(&self, state: &[f64], action: usize) -> f64 {
        state_index(state, self.n_states).map_or(0.0, |s| self.get(s, action))
    }
}

fn check_dims(m: &TabularMdp, q: &TabularQ) -> Result<()> {
    if m.n_states() != q.n_states || m.n_actions() != q.n_actions {
        return Err(Error::Dimension(format!(
            "Q is {}x{} but the MDP is {}x{}",
            q.n_states,
            q.n_actions,
            m.n_states(),
            m.n_actions()
        )));
    }
    Ok(())
}

fn check_policy(m: &TabularMdp, pi: &TabularPolicy) -> Result<()> {
    if m.n_states() != pi.n_states() || m.n_actions() != pi.n_actions() {
        return Err(Error::Dimension("policy and MDP sizes differ".into()));
    }
    Ok(())
}

/// Backup `r(s,a) + γ Σ_{s'} P(s'|s,a) next(s', a)` where `next` is a
/// per-(state, action) bootstrap table.
fn backup<F: Fn(usize, usize) -> f64>(m: &TabularMdp, next: F) -> TabularQ {
    let (ns, na) = (m.n_states(), m.n_actions());
    let gamma = m.discount();
    let mut values = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let future: f64 = m
                .row(s, a)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(s2, &p)| p * next(s2, a))
                .sum();
            values.push(m.reward(s, a) + gamma * future);
        }
    }
    TabularQ {
        n_states: ns,
        n_actions: na,
        values,
    }
}

/// `(T^π q)(s,a) = r(s,a) + γ Σ P(s'|s,a) Σ_{a'} π(a'|s') q(s',a')`.
pub fn apply_expectation(m: &TabularMdp, pi: &TabularPolicy, q: &TabularQ) -> Result<TabularQ> {
    check_dims(m, q)?;
    check_policy(m, pi)?;
    let v = q.policy_values(pi);
    Ok(backup(m, |s2, _| v[s2]))
}

/// `(T* q)(s,a) = r(s,a) + γ Σ P(s'|s,a) max_{a'} q(s',a')`.
pub fn apply_optimal(m: &TabularMdp, q: &TabularQ) -> Result<TabularQ> {
    check_dims(m, q)?;
    let v = q.state_values();
    Ok(backup(m, |s2, _| v[s2]))
}

/// `(T^δ q)(s,a) = r(s,a) + γ Σ P(s'|s,a) q(s',a)`: the next value is read
/// at the same action.
pub fn apply_persistent(m: &TabularMdp, q: &TabularQ) -> Result<TabularQ> {
    check_dims(m, q)?;
    Ok(backup(m, |s2, a| q.get(s2, a)))
}

/// Which Bellman operator a solver iterates.
#[derive(Debug, Clone, Copy)]
pub enum SolveMode<'a> {
    Expectation(&'a TabularPolicy),
    Optimal,
}

/// Route used to reach the k-persistent fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PersistentMethod {
    /// Iterate `(T^δ)^{k−1} ∘ T` in the base MDP.
    Composition,
    /// Build the k-persistent MDP and solve it directly.
    Explicit,
}

fn apply_mode(m: &TabularMdp, mode: SolveMode<'_>, q: &TabularQ) -> Result<TabularQ> {
    match mode {
        SolveMode::Expectation(pi) => apply_expectation(m, pi, q),
        SolveMode::Optimal => apply_optimal(m, q),
    }
}

/// `(T^δ)^{k−1} T q` where `T` is the operator selected by `mode`.
pub fn apply_persistent_composition(m: &TabularMdp, mode: SolveMode<'_>, q: &TabularQ, k: usize) -> Result<TabularQ> {
    if k == 0 {
        return Err(Error::InvalidPersistence(0));
    }
    let mut out = apply_mode(m, mode, q)?;
    for _ in 1..k {
        out = apply_persistent(m, &out)?;
    }
    Ok(out)
}

/// Iterate a `c`-contraction from zero until `‖Tq − q‖_∞ ≤ tol·(1−c)/c`,
/// which bounds the distance to the fixed point by `tol`.
fn iterate_to_fixed_point<F>(n_states: usize, n_actions: usize, contraction: f64, tol: f64, op: F) -> Result<TabularQ>
where
    F: Fn(&TabularQ) -> Result<TabularQ>,
{
    if !(tol > 0.0) {
        return Err(Error::Config(format!("solver tolerance must be positive, got {tol}")));
    }
    let mut q = TabularQ::zeros(n_states, n_actions);
    if contraction == 0.0 {
        return op(&q);
    }
    let threshold = tol * (1.0 - contraction) / contraction;
    for _ in 0..MAX_SWEEPS {
        let next = op(&q)?;
        let residual = next.sup_distance(&q);
        q = next;
        if residual <= threshold {
            break;
        }
    }
    Ok(q)
}

/// Fixed point of `T^π` or `T*` by value iteration.
pub fn solve_q(m: &TabularMdp, mode: SolveMode<'_>, tol: f64) -> Result<TabularQ> {
    if let SolveMode::Expectation(pi) = mode {
        check_policy(m, pi)?;
    }
    iterate_to_fixed_point(m.n_states(), m.n_actions(), m.discount(), tol, |q| apply_mode(m, mode, q))
}

/// Fixed point of the k-persistent operator (`Q^π_k` or `Q*_k`).
pub fn solve_q_persistent(
    m: &TabularMdp,
    k: usize,
    mode: SolveMode<'_>,
    tol: f64,
    method: PersistentMethod,
) -> Result<TabularQ> {
    if k == 0 {
        return Err(Error::InvalidPersistence(0));
    }
    if k == 1 {
        return solve_q(m, mode, tol);
    }
    match method {
        PersistentMethod::Explicit => solve_q(&m.persistent(k)?, mode, tol),
        PersistentMethod::Composition => {
            if let SolveMode::Expectation(pi) = mode {
                check_policy(m, pi)?;
            }
            let contraction = m.discount().powi(k as i32);
            iterate_to_fixed_point(m.n_states(), m.n_actions(), contraction, tol, |q| {
                apply_persistent_composition(m, mode, q, k)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn single(r: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![r], gamma, None).unwrap()
    }

    #[test]
    fn one_state_expectation() {
        let m = single(1.0, 0.5);
        let pi = TabularPolicy::uniform(1, 1);
        let q0 = TabularQ::zeros(1, 1);
        assert_eq!(apply_expectation(&m, &pi, &q0).unwrap().values(), &[1.0]);
        let q2 = TabularQ::filled(1, 1, 2.0);
        assert_eq!(apply_expectation(&m, &pi, &q2).unwrap().values(), &[2.0]);
        assert_eq!(apply_persistent(&m, &q2).unwrap(), apply_expectation(&m, &pi, &q2).unwrap());
    }

    #[test]
    fn optimal_on_zero_is_reward() {
        let mut rng = seed::rng(0);
        let m = TabularMdp::random(&mut rng, 5, 3, 0.9);
        let q = apply_optimal(&m, &TabularQ::zeros(5, 3)).unwrap();
        assert_eq!(q.values(), m.rewards());
    }

    #[test]
    fn two_action_geometric_fixed_point() {
        let m = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 1.0], 0.9, None).unwrap();
        let q = solve_q(&m, SolveMode::Optimal, 1e-12).unwrap();
        assert!((q.get(0, 0) - 9.0).abs() < 1e-9);
        assert!((q.get(0, 1) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn solve_single_state() {
        let q = solve_q(&single(1.0, 0.9), SolveMode::Optimal, 1e-10).unwrap();
        assert!((q.get(0, 0) - 10.0).abs() <= 1e-10);
    }

    #[test]
    fn dimension_and_tolerance_errors() {
        let m = single(1.0, 0.9);
        assert!(apply_optimal(&m, &TabularQ::zeros(2, 1)).is_err());
        assert!(solve_q(&m, SolveMode::Optimal, 0.0).is_err());
        assert!(solve_q_persistent(&m, 0, SolveMode::Optimal, 1e-8, PersistentMethod::Explicit).is_err());
        let pi = TabularPolicy::uniform(2, 1);
        assert!(apply_expectation(&m, &pi, &TabularQ::zeros(1, 1)).is_err());
    }

    #[test]
    fn k_one_persistent_equals_base_solver() {
        let mut rng = seed::rng(4);
        let m = TabularMdp::random(&mut rng, 4, 2, 0.8);
        let base = solve_q(&m, SolveMode::Optimal, 1e-10).unwrap();
        for method in [PersistentMethod::Composition, PersistentMethod::Explicit] {
            assert_eq!(solve_q_persistent(&m, 1, SolveMode::Optimal, 1e-10, method).unwrap(), base);
        }
    }

    #[test]
    fn greedy_ties_and_scaling() {
        let q = TabularQ::from_values(2, 3, vec![1.0, 1.0, 0.0, -1.0, 2.0, 2.0]).unwrap();
        assert_eq!(q.greedy_actions(), vec![0, 1]);
        assert_eq!(q.scale(3.5).greedy_actions(), vec![0, 1]);
        assert_eq!(q.value(&[1.0], 1), 2.0);
    }
}
