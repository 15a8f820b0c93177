use std::f64::consts::PI;

use rand::Rng;

use super::pendulum::wrap_angle;
use super::{EnvSpec, Environment, Step};
use crate::error::{Error, Result};
use crate::seed;

const L1: f64 = 1.0;
const M1: f64 = 1.0;
const M2: f64 = 1.0;
const LC1: f64 = 0.5;
const LC2: f64 = 0.5;
const MOI: f64 = 1.0;
const G: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;

/// Two-link underactuated swing-up ("book" dynamics, one RK4 step per
/// base timestep). State `(θ₁, θ₂, θ̇₁, θ̇₂)`; −1 per step until the tip
/// rises one link length above the pivot.
pub struct Acrobot {
    spec: EnvSpec,
    state: [f64; 4],
    done: bool,
}

fn derivatives(s: [f64; 4], torque: f64) -> [f64; 4] {
    let [theta1, theta2, dtheta1, dtheta2] = s;
    let d1 = M1 * LC1 * LC1 + M2 * (L1 * L1 + LC2 * LC2 + 2.0 * L1 * LC2 * theta2.cos()) + 2.0 * MOI;
    let d2 = M2 * (LC2 * LC2 + L1 * LC2 * theta2.cos()) + MOI;
    let phi2 = M2 * LC2 * G * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -M2 * L1 * LC2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * M2 * L1 * LC2 * dtheta2 * dtheta1 * theta2.sin()
        + (M1 * LC1 + M2 * L1) * G * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - M2 * L1 * LC2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (M2 * LC2 * LC2 + MOI - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4(s: [f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]];
    let k1 = derivatives(s, torque);
    let k2 = derivatives(add(s, k1, dt / 2.0), torque);
    let k3 = derivatives(add(s, k2, dt / 2.0), torque);
    let k4 = derivatives(add(s, k3, dt), torque);
    let mut out = s;
    for i in 0..4 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

impl Acrobot {
    pub fn new(factor: usize, original_horizon: usize, original_discount: f64) -> Self {
        let spec = EnvSpec::rescaled(
            "acrobot",
            4,
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            0.2,
            factor,
            original_horizon,
            original_discount,
            "-1 per step until the tip is above the target height, 0 on reaching it",
        );
        Self {
            spec,
            state: [0.0; 4],
            done: true,
        }
    }

    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.done = false;
    }

    fn tip_height(s: &[f64; 4]) -> f64 {
        -s[0].cos() - (s[0] + s[1]).cos()
    }
}

impl Environment for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        for v in self.state.iter_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::StepAfterTerminal);
        }
        let torque = self.spec.scalar_action(action)?;
        let mut ns = rk4(self.state, torque, self.spec.base_timestep);
        ns[0] = wrap_angle(ns[0]);
        ns[1] = wrap_angle(ns[1]);
        ns[2] = ns[2].clamp(-MAX_VEL_1, MAX_VEL_1);
        ns[3] = ns[3].clamp(-MAX_VEL_2, MAX_VEL_2);
        self.state = ns;
        let terminal = Self::tip_height(&ns) > 1.0;
        self.done = terminal;
        Ok(Step {
            next_state: ns.to_vec(),
            reward: if terminal { 0.0 } else { -1.0 },
            terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hanging_at_rest_stays_at_rest() {
        let mut env = Acrobot::new(1, 128, 0.99);
        env.set_state([0.0; 4]);
        let s = env.step(1).unwrap();
        assert!(s.next_state.iter().all(|x| x.abs() < 1e-12));
        assert_eq!(s.reward, -1.0);
    }

    #[test]
    fn rk4_energy_is_nearly_conserved_without_torque() {
        let energy = |s: [f64; 4]| {
            let [t1, t2, d1, d2] = s;
            let kinetic = 0.5 * (M1 * LC1 * LC1 + MOI) * d1 * d1
                + 0.5 * M2 * (L1 * L1 * d1 * d1 + LC2 * LC2 * (d1 + d2).powi(2) + 2.0 * L1 * LC2 * d1 * (d1 + d2) * t2.cos())
                + 0.5 * MOI * (d1 + d2).powi(2);
            let potential = -M1 * G * LC1 * t1.cos() - M2 * G * (L1 * t1.cos() + LC2 * (t1 + t2).cos());
            kinetic + potential
        };
        let mut s = [1.0, 0.5, 0.0, 0.0];
        let e0 = energy(s);
        for _ in 0..200 {
            s = rk4(s, 0.0, 0.05);
        }
        assert!((energy(s) - e0).abs() / e0.abs() < 1e-3);
    }

    #[test]
    fn seeded_resets_repeat() {
        let mut env = Acrobot::new(4, 128, 0.99);
        let a = env.reset(9);
        let b = env.reset(9);
        assert_eq!(a, b);
    }
}
