use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::qfunction::{argmax, QFunction};

const ROW_TOL: f64 = 1e-12;

/// Stochastic (or deterministic) policy table `π[s][a]` for exact computations.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::InvalidPolicy(format!(
                "{} probabilities for {n_states}x{n_actions}",
                probs.len()
            )));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} is not a distribution")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::ActionOutOfRange { action: a, n_actions });
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Random policy table with full-support rows.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> Self {
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states {
            let row: Vec<f64> = (0..n_actions).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = row.iter().sum();
            probs.extend(row.into_iter().map(|p| p / total));
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Some state plays a single action with probability one everywhere.
    pub fn constant_action(&self) -> Option<usize> {
        (0..self.n_actions).find(|&a| (0..self.n_states).all(|s| self.prob(s, a) == 1.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, &p) in self.row(s).iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // numerical slack: fall back to the last action with mass
        self.row(s).iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Policy over environment observations with a finite action set.
#[derive(Clone)]
pub enum DiscretePolicy {
    /// Indexed by `state[0]` interpreted as a state index.
    Tabular(TabularPolicy),
    Uniform { n_actions: usize },
    /// `argmax_a Q(s, a)`, lowest action index on ties.
    Greedy(Arc<dyn QFunction>),
}

impl fmt::Debug for DiscretePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tabular(t) => f.debug_tuple("Tabular").field(t).finish(),
            Self::Uniform { n_actions } => f.debug_struct("Uniform").field("n_actions", n_actions).finish(),
            Self::Greedy(q) => f.debug_struct("Greedy").field("n_actions", &q.n_actions()).finish(),
        }
    }
}

impl DiscretePolicy {
    pub fn greedy<Q: QFunction + 'static>(q: Q) -> Self {
        Self::Greedy(Arc::new(q))
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Self::Tabular(t) => t.n_actions(),
            Self::Uniform { n_actions } => *n_actions,
            Self::Greedy(q) => q.n_actions(),
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<usize> {
        match self {
            Self::Tabular(t) => {
                let s = state_index(state, t.n_states())?;
                Ok(t.sample(s, rng))
            }
            Self::Uniform { n_actions } => Ok(rng.gen_range(0..*n_actions)),
            Self::Greedy(q) => Ok(argmax(&q.values(state))),
        }
    }
}

/// Interpret a one-dimensional observation as a tabular state index.
pub fn state_index(state: &[f64], n_states: usize) -> Result<usize> {
    match state {
        [x] if *x >= 0.0 && x.fract() == 0.0 && (*x as usize) < n_states => Ok(*x as usize),
        _ => Err(Error::Dimension(format!(
            "observation {state:?} is not a state index below {n_states}"
        ))),
    }
}

/// Executes a policy at persistence `k`: the inner policy is queried only
/// when `t mod k = 0`, otherwise the held action is replayed.
#[derive(Debug, Clone)]
pub struct PersistentExecutor {
    inner: DiscretePolicy,
    persistence: usize,
    step_counter: usize,
    held_action: Option<usize>,
}

impl PersistentExecutor {
    pub fn new(inner: DiscretePolicy, persistence: usize) -> Result<Self> {
        if persistence == 0 {
            return Err(Error::InvalidPersistence(0));
        }
        Ok(Self {
            inner,
            persistence,
            step_counter: 0,
            held_action: None,
        })
    }

    /// Episode start: the counter restarts and any held action is dropped.
    pub fn reset(&mut self) {
        self.step_counter = 0;
        self.held_action = None;
    }

    pub fn persistence(&self) -> usize {
        self.persistence
    }

    pub fn step_counter(&self) -> usize {
        self.step_counter
    }

    pub fn act<R: Rng + ?Sized>(&mut self, state: &[f64], rng: &mut R) -> Result<usize> {
        let action = match self.held_action {
            Some(a) if self.step_counter % self.persistence != 0 => a,
            _ => self.inner.act(state, rng)?,
        };
        self.held_action = Some(action);
        self.step_counter += 1;
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qfunction::ZeroQ;
    use crate::seed;

    #[test]
    fn rejects_bad_rows() {
        assert!(TabularPolicy::new(1, 2, vec![0.5, 0.4]).is_err());
        assert!(TabularPolicy::deterministic(&[2], 2).is_err());
        let p = TabularPolicy::deterministic(&[1, 1], 2).unwrap();
        assert_eq!(p.constant_action(), Some(1));
        assert_eq!(TabularPolicy::uniform(2, 2).constant_action(), None);
    }

    #[test]
    fn executor_queries_only_on_multiples_of_k() {
        let mut exec = PersistentExecutor::new(DiscretePolicy::Uniform { n_actions: 5 }, 3).unwrap();
        let mut rng = seed::rng(1);
        let actions: Vec<usize> = (0..9).map(|_| exec.act(&[0.0], &mut rng).unwrap()).collect();
        for t in 0..9 {
            assert_eq!(actions[t], actions[3 * (t / 3)]);
        }
        exec.reset();
        assert_eq!(exec.step_counter(), 0);
        assert!(PersistentExecutor::new(DiscretePolicy::Uniform { n_actions: 2 }, 0).is_err());
    }

    #[test]
    fn greedy_over_constant_q_plays_action_zero() {
        let pol = DiscretePolicy::greedy(ZeroQ { n_actions: 3 });
        let mut rng = seed::rng(0);
        assert_eq!(pol.act(&[1.0, 2.0], &mut rng).unwrap(), 0);
    }

    #[test]
    fn tabular_sampling_frequencies() {
        let p = TabularPolicy::new(1, 3, vec![0.2, 0.5, 0.3]).unwrap();
        let mut rng = seed::rng(5);
        let mut counts = [0usize; 3];
        for _ in 0..20_000 {
            counts[p.sample(0, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip([0.2, 0.5, 0.3]) {
            let freq = *c as f64 / 20_000.0;
            assert!((freq - p).abs() < 4.0 * (p * (1.0 - p) / 20_000.0f64).sqrt());
        }
    }
}
