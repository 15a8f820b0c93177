use rand::Rng;

use super::{EnvSpec, Environment, Step};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::seed::{self, Rng as SeedRng};

/// Sampled environment over a [`TabularMdp`]. Observations are the state
/// index as a one-element vector; rewards are the expected rewards.
pub struct TabularEnv {
    spec: EnvSpec,
    mdp: TabularMdp,
    initial_state: Option<usize>,
    state: usize,
    rng: SeedRng,
}

impl TabularEnv {
    /// `initial_state = None` draws the start state uniformly.
    pub fn new(name: &str, mdp: TabularMdp, initial_state: Option<usize>, horizon: usize) -> Result<Self> {
        if let Some(s) = initial_state {
            if s >= mdp.n_states() {
                return Err(Error::InvalidEnvConfig(format!(
                    "initial state {s} out of range for {} states",
                    mdp.n_states()
                )));
            }
        }
        let mut spec = EnvSpec::rescaled(
            name,
            1,
            (0..mdp.n_actions()).map(|a| vec![a as f64]).collect(),
            1.0,
            1,
            horizon,
            mdp.discount(),
            "expected reward r(s,a)",
        );
        spec.discount = mdp.discount();
        Ok(Self {
            spec,
            mdp,
            initial_state,
            state: 0,
            rng: seed::rng(0),
        })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl Environment for TabularEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = seed::rng(seed);
        self.state = match self.initial_state {
            Some(s) => s,
            None => self.rng.gen_range(0..self.mdp.n_states()),
        };
        vec![self.state as f64]
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if action >= self.mdp.n_actions() {
            return Err(Error::ActionOutOfRange {
                action,
                n_actions: self.mdp.n_actions(),
            });
        }
        let reward = self.mdp.reward(self.state, action);
        let row = self.mdp.row(self.state, action);
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut next = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (s2, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = s2;
                break;
            }
        }
        self.state = next;
        Ok(Step {
            next_state: vec![next as f64],
            reward,
            terminal: false,
        })
    }
}
