use rand::Rng;

use super::{EnvSpec, Environment, Step};
use crate::error::{Error, Result};
use crate::seed;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
// half the pole length
const LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
const FORCE_MAG: f64 = 10.0;
const ORIGINAL_TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

/// Cart-pole balancing with the classic explicit Euler update.
///
/// State `(x, ẋ, θ, θ̇)`; +1 reward per step alive, termination when the
/// pole or the cart leaves the admissible region.
pub struct CartPole {
    spec: EnvSpec,
    state: [f64; 4],
    done: bool,
}

impl CartPole {
    pub fn new(factor: usize, original_horizon: usize, original_discount: f64) -> Self {
        let spec = EnvSpec::rescaled(
            "cartpole",
            4,
            vec![vec![-1.0], vec![1.0]],
            ORIGINAL_TAU,
            factor,
            original_horizon,
            original_discount,
            "+1 per step until the pole falls or the cart leaves the track",
        );
        Self {
            spec,
            state: [0.0; 4],
            done: true,
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Overwrite the physical state (testing and scripted starts).
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.done = false;
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        for v in self.state.iter_mut() {
            *v = rng.gen_range(-0.05..0.05);
        }
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::StepAfterTerminal);
        }
        let force = FORCE_MAG * self.spec.scalar_action(action)?;
        let tau = self.spec.base_timestep;
        let [x, x_dot, theta, theta_dot] = self.state;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        self.state = [
            x + tau * x_dot,
            x_dot + tau * x_acc,
            theta + tau * theta_dot,
            theta_dot + tau * theta_acc,
        ];
        let terminal = self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > THETA_THRESHOLD;
        self.done = terminal;
        Ok(Step {
            next_state: self.state.to_vec(),
            reward: 1.0,
            terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_seed_deterministic() {
        let mut a = CartPole::new(4, 128, 0.99);
        let mut b = CartPole::new(4, 128, 0.99);
        assert_eq!(a.reset(11), b.reset(11));
        assert_ne!(a.reset(11), a.reset(12));
    }

    #[test]
    fn factor_one_matches_reference_update() {
        // one hand-computed Euler step from rest at θ = 0.1 with force +10
        let mut env = CartPole::new(1, 128, 0.99);
        env.set_state([0.0, 0.0, 0.1, 0.0]);
        let step = env.step(1).unwrap();
        let (s, c) = 0.1f64.sin_cos();
        let temp = 10.0 / 1.1;
        let th_acc = (9.8 * s - c * temp) / (0.5 * (4.0 / 3.0 - 0.1 * c * c / 1.1));
        let x_acc = temp - 0.05 * th_acc * c / 1.1;
        assert_eq!(step.next_state, vec![0.0, 0.02 * x_acc, 0.1, 0.02 * th_acc]);
        assert_eq!(step.reward, 1.0);
        assert!(!step.terminal);
    }

    #[test]
    fn falls_and_then_refuses_to_step() {
        let mut env = CartPole::new(4, 128, 0.99);
        env.reset(0);
        let mut steps = 0;
        loop {
            steps += 1;
            if env.step(1).unwrap().terminal {
                break;
            }
        }
        assert!(steps > 10);
        assert!(matches!(env.step(0), Err(Error::StepAfterTerminal)));
        assert!(matches!(CartPole::new(1, 1, 0.9).step(0), Err(Error::StepAfterTerminal)));
    }
}
