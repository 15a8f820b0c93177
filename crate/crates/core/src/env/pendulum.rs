use std::f64::consts::PI;

use rand::Rng;

use super::{EnvSpec, Environment, Step};
use crate::error::Result;
use crate::seed;

const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;
const G: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;

/// Torque-limited pendulum swing-up. State `(θ, θ̇)` with θ = 0 upright,
/// θ wrapped into `[-π, π)`; reward is the negative quadratic cost.
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    speed_limit: bool,
}

pub(crate) fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new(factor: usize, original_horizon: usize, original_discount: f64) -> Self {
        let spec = EnvSpec::rescaled(
            "pendulum",
            2,
            vec![vec![-2.0], vec![0.0], vec![2.0]],
            0.05,
            factor,
            original_horizon,
            original_discount,
            "-(θ² + 0.1·θ̇² + 0.001·u²)",
        );
        Self {
            spec,
            theta: 0.0,
            theta_dot: 0.0,
            speed_limit: true,
        }
    }

    /// Disable the angular speed clip (energy-conservation checks).
    pub fn without_speed_limit(mut self) -> Self {
        self.speed_limit = false;
        self
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
    }

    /// Conserved quantity of the torque-free dynamics `θ̈ = 3g/(2l)·sin θ`.
    pub fn energy(&self) -> f64 {
        0.5 * self.theta_dot * self.theta_dot + 3.0 * G / (2.0 * LENGTH) * self.theta.cos()
    }

    fn observe(&self) -> Vec<f64> {
        vec![wrap_angle(self.theta), self.theta_dot]
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        self.theta = rng.gen_range(-PI..PI);
        self.theta_dot = rng.gen_range(-1.0..1.0);
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let u = self.spec.scalar_action(action)?.clamp(-MAX_TORQUE, MAX_TORQUE);
        let dt = self.spec.base_timestep;
        let th = wrap_angle(self.theta);
        let cost = th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u;
        let mut new_dot = self.theta_dot
            + (3.0 * G / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u) * dt;
        if self.speed_limit {
            new_dot = new_dot.clamp(-MAX_SPEED, MAX_SPEED);
        }
        self.theta += new_dot * dt;
        self.theta_dot = new_dot;
        Ok(Step {
            next_state: self.observe(),
            reward: -cost,
            terminal: false,
        })
    }
}
