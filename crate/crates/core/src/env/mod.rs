//! Classic-control simulators and tabular environments.
//!
//! Every simulator runs its canonical integrator at the base timestep
//! `Δt₀ = Δt_original / m`; horizon and discount are rescaled so that the
//! effective horizon is unchanged (`H = m·H_original`, `γ = γ_original^{1/m}`).

mod acrobot;
mod cartpole;
mod collect;
mod mountain_car;
mod pendulum;
mod tabular;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use collect::{collect_dataset, Budget, CollectMode, SamplingPolicy};
pub use mountain_car::MountainCar;
pub use pendulum::Pendulum;
pub use tabular::TabularEnv;

/// Static description of an environment and its time discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    /// Primitive action vector for each action index.
    pub action_set: Vec<Vec<f64>>,
    pub original_timestep: f64,
    pub base_timestep: f64,
    pub discretization_factor: usize,
    pub original_horizon: usize,
    pub horizon: usize,
    pub original_discount: f64,
    pub discount: f64,
    pub reward: String,
}

impl EnvSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn rescaled(
        name: &str,
        state_dim: usize,
        action_set: Vec<Vec<f64>>,
        original_timestep: f64,
        factor: usize,
        original_horizon: usize,
        original_discount: f64,
        reward: &str,
    ) -> Self {
        Self {
            name: name.to_string(),
            state_dim,
            action_set,
            original_timestep,
            base_timestep: original_timestep / factor as f64,
            discretization_factor: factor,
            original_horizon,
            horizon: factor * original_horizon,
            original_discount,
            discount: original_discount.powf(1.0 / factor as f64),
            reward: reward.to_string(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.action_set.len()
    }

    /// First component of each primitive action vector.
    pub fn scalar_action(&self, action: usize) -> Result<f64> {
        self.action_set
            .get(action)
            .map(|v| v[0])
            .ok_or(Error::ActionOutOfRange {
                action,
                n_actions: self.action_set.len(),
            })
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Environment-absorbing termination (not horizon truncation).
    pub terminal: bool,
}

/// A resettable, seed-reproducible simulator with a finite action set.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Start a new episode; the seed fixes the initial state and any
    /// stochasticity of the episode.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advance one base step. Stepping after a terminal step is an error.
    fn step(&mut self, action: usize) -> Result<Step>;

    fn n_actions(&self) -> usize {
        self.spec().n_actions()
    }

    fn discount(&self) -> f64 {
        self.spec().discount
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn spec(&self) -> &EnvSpec {
        (**self).spec()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        (**self).reset(seed)
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        (**self).step(action)
    }
}

impl<E: Environment + ?Sized> Environment for &mut E {
    fn spec(&self) -> &EnvSpec {
        (**self).spec()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        (**self).reset(seed)
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        (**self).step(action)
    }
}

/// Partial specification overriding environment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    /// Discretization factor `m`; must be a positive integer.
    #[serde(default)]
    pub factor: Option<f64>,
    #[serde(default)]
    pub original_horizon: Option<usize>,
    #[serde(default)]
    pub original_discount: Option<f64>,
    /// Reward magnitude `R` of the counterexample MDP.
    #[serde(default)]
    pub magnitude: Option<f64>,
    /// Path of a `tabular-file` JSON document.
    #[serde(default)]
    pub path: Option<String>,
    /// Fixed initial state for tabular environments.
    #[serde(default)]
    pub initial_state: Option<usize>,
    /// Mountain car only: keep the canonical unit-step update and rescale
    /// just the horizon and discount.
    #[serde(default)]
    pub unit_step: Option<bool>,
}

impl EnvOverrides {
    fn factor_or(&self, default: usize) -> Result<usize> {
        match self.factor {
            None => Ok(default),
            Some(m) if m >= 1.0 && m.fract() == 0.0 && m.is_finite() => Ok(m as usize),
            Some(m) => Err(Error::InvalidEnvConfig(format!(
                "discretization factor must be an integer >= 1, got {m}"
            ))),
        }
    }

    fn discount_or(&self, default: f64) -> Result<f64> {
        let g = self.original_discount.unwrap_or(default);
        if (0.0..1.0).contains(&g) {
            Ok(g)
        } else {
            Err(Error::InvalidEnvConfig(format!("discount {g} outside [0,1)")))
        }
    }
}

/// Names accepted by [`make_env`].
pub const ENV_NAMES: [&str; 6] = [
    "cartpole",
    "mountaincar",
    "pendulum",
    "acrobot",
    "counterexample",
    "tabular-file",
];

/// Build an environment by name.
///
/// `counterexample(R,gamma)` is accepted as an inline form of the
/// counterexample environment with its two parameters.
pub fn make_env(name: &str, overrides: &EnvOverrides) -> Result<Box<dyn Environment>> {
    let (base, args) = parse_call(name)?;
    match base.as_str() {
        "cartpole" => Ok(Box::new(CartPole::new(
            overrides.factor_or(4)?,
            overrides.original_horizon.unwrap_or(128),
            overrides.discount_or(0.99)?,
        ))),
        "mountaincar" => {
            let env = MountainCar::new(
                overrides.factor_or(2)?,
                overrides.original_horizon.unwrap_or(128),
                overrides.discount_or(0.99)?,
            );
            Ok(Box::new(if overrides.unit_step == Some(true) { env.unit_step() } else { env }))
        }
        "pendulum" => Ok(Box::new(Pendulum::new(
            overrides.factor_or(1)?,
            overrides.original_horizon.unwrap_or(256),
            overrides.discount_or(0.99)?,
        ))),
        "acrobot" => Ok(Box::new(Acrobot::new(
            overrides.factor_or(4)?,
            overrides.original_horizon.unwrap_or(128),
            overrides.discount_or(0.99)?,
        ))),
        "counterexample" => {
            let (magnitude, gamma) = match args.as_slice() {
                [] => (overrides.magnitude.unwrap_or(1.0), overrides.discount_or(0.9)?),
                [r, g] => (*r, *g),
                _ => {
                    return Err(Error::InvalidEnvConfig(
                        "counterexample takes two arguments (R,gamma)".into(),
                    ))
                }
            };
            if !(magnitude > 0.0) || !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::InvalidEnvConfig(format!(
                    "counterexample needs R > 0 and gamma in (0,1), got R={magnitude}, gamma={gamma}"
                )));
            }
            let mdp = crate::exact::counterexample_mdp(magnitude, gamma);
            let horizon = overrides.original_horizon.unwrap_or(100);
            Ok(Box::new(TabularEnv::new(
                "counterexample",
                mdp,
                Some(overrides.initial_state.unwrap_or(0)),
                horizon,
            )?))
        }
        "tabular-file" => {
            let path = overrides
                .path
                .as_deref()
                .ok_or_else(|| Error::InvalidEnvConfig("tabular-file requires a path".into()))?;
            let mdp = TabularMdp::from_json(&std::fs::read_to_string(path)?)?;
            let horizon = overrides.original_horizon.unwrap_or(100);
            Ok(Box::new(TabularEnv::new("tabular-file", mdp, overrides.initial_state, horizon)?))
        }
        _ => Err(Error::UnknownEnv(name.to_string())),
    }
}

fn parse_call(name: &str) -> Result<(String, Vec<f64>)> {
    let name = name.trim();
    match name.find('(') {
        None => Ok((name.to_string(), Vec::new())),
        Some(open) => {
            let inner = name[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::UnknownEnv(name.to_string()))?;
            let args = inner
                .split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|_| Error::UnknownEnv(name.to_string())))
                .collect::<Result<Vec<_>>>()?;
            Ok((name[..open].trim().to_string(), args))
        }
    }
}
