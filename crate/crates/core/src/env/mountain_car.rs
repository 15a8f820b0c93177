use rand::Rng;

use super::{EnvSpec, Environment, Step};
use crate::error::{Error, Result};
use crate::seed;

const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GOAL_POSITION: f64 = 0.5;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

/// Under-powered car in a valley. State `(position, velocity)`, −1 reward
/// per step until the goal on the right hill is reached.
///
/// The canonical update uses a unit timestep; with factor `m` both the
/// velocity and position increments are scaled by `Δt₀ = 1/m`, unless
/// [`MountainCar::unit_step`] keeps the canonical unit step (only the horizon
/// and discount are rescaled then).
pub struct MountainCar {
    spec: EnvSpec,
    state: [f64; 2],
    done: bool,
}

impl MountainCar {
    pub fn new(factor: usize, original_horizon: usize, original_discount: f64) -> Self {
        let spec = EnvSpec::rescaled(
            "mountaincar",
            2,
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            1.0,
            factor,
            original_horizon,
            original_discount,
            "-1 per step until the goal is reached",
        );
        Self {
            spec,
            state: [0.0; 2],
            done: true,
        }
    }

    /// Keep the canonical unit-step update regardless of the factor.
    pub fn unit_step(mut self) -> Self {
        self.spec.base_timestep = self.spec.original_timestep;
        self
    }

    pub fn set_state(&mut self, state: [f64; 2]) {
        self.state = state;
        self.done = false;
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        self.state = [rng.gen_range(-0.6..-0.4), 0.0];
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::StepAfterTerminal);
        }
        let push = self.spec.scalar_action(action)?;
        let dt = self.spec.base_timestep;
        let [mut position, mut velocity] = self.state;
        velocity += (push * FORCE - (3.0 * position).cos() * GRAVITY) * dt;
        velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
        position += velocity * dt;
        position = position.clamp(MIN_POSITION, MAX_POSITION);
        if position == MIN_POSITION && velocity < 0.0 {
            velocity = 0.0;
        }
        let terminal = position >= GOAL_POSITION;
        self.state = [position, velocity];
        self.done = terminal;
        Ok(Step {
            next_state: self.state.to_vec(),
            reward: -1.0,
            terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_one_matches_reference_update() {
        let mut env = MountainCar::new(1, 128, 0.99);
        env.set_state([-0.5, 0.01]);
        let s = env.step(2).unwrap();
        let v = 0.01 + 0.001 - (-1.5f64).cos() * 0.0025;
        approx::assert_abs_diff_eq!(s.next_state[0], -0.5 + v, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(s.next_state[1], v, epsilon = 1e-15);
        assert_eq!(s.reward, -1.0);
    }

    #[test]
    fn unit_step_keeps_canonical_update() {
        let mut scaled = MountainCar::new(2, 128, 0.99);
        let mut unit = MountainCar::new(2, 128, 0.99).unit_step();
        let mut reference = MountainCar::new(1, 128, 0.99);
        assert_eq!(unit.spec().horizon, 256);
        assert_eq!(unit.spec().base_timestep, 1.0);
        for env in [&mut scaled, &mut unit, &mut reference] {
            env.set_state([-0.5, 0.01]);
        }
        let r = reference.step(2).unwrap();
        assert_eq!(unit.step(2).unwrap().next_state, r.next_state);
        assert_ne!(scaled.step(2).unwrap().next_state, r.next_state);
    }

    #[test]
    fn left_wall_stops_the_car() {
        let mut env = MountainCar::new(1, 128, 0.99);
        env.set_state([-1.19, -0.07]);
        let s = env.step(0).unwrap();
        assert_eq!(s.next_state, vec![MIN_POSITION, 0.0]);
    }

    #[test]
    fn bang_bang_controller_reaches_goal() {
        let mut env = MountainCar::new(2, 128, 0.99);
        let mut state = env.reset(3);
        let mut reached = false;
        for _ in 0..env.spec().horizon {
            let action = if state[1] >= 0.0 { 2 } else { 0 };
            let s = env.step(action).unwrap();
            state = s.next_state;
            if s.terminal {
                reached = true;
                break;
            }
        }
        assert!(reached);
    }
}
