use crate::mdp::TabularMdp;

pub const S_MINUS: usize = 0;
pub const S1: usize = 1;
pub const S2: usize = 2;
pub const S3: usize = 3;

/// Four-state MDP on which persistence loses exactly `2γR/(1−γ)` at `s⁻`.
///
/// Actions `a₁ = 0`, `a₂ = 1`. From `s⁻`, `a₁` moves to `s₁` and `a₂` to the
/// absorbing `s₃`, both with reward 0. From `s₁`, `a₂` earns `R` and moves
/// to the absorbing `s₂`; `a₁` earns `−R` and moves to `s₃`. `s₂` pays `R`
/// and `s₃` pays `−R` forever under any action.
pub fn counterexample_mdp(magnitude: f64, gamma: f64) -> TabularMdp {
    let (ns, na) = (4, 2);
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    let mut set = |s: usize, a: usize, next: usize, r: f64| {
        transition[(s * na + a) * ns + next] = 1.0;
        reward[s * na + a] = r;
    };
    set(S_MINUS, 0, S1, 0.0);
    set(S_MINUS, 1, S3, 0.0);
    set(S1, 0, S3, -magnitude);
    set(S1, 1, S2, magnitude);
    for a in 0..na {
        set(S2, a, S2, magnitude);
        set(S3, a, S3, -magnitude);
    }
    TabularMdp::new(ns, na, transition, reward, gamma, Some(magnitude)).expect("counterexample MDP is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{apply_persistent, solve_q, solve_q_persistent, PersistentMethod, SolveMode, TabularQ};

    #[test]
    fn two_persistent_step_from_s_minus() {
        let (r, g) = (1.5, 0.8);
        let m2 = counterexample_mdp(r, g).persistent(2).unwrap();
        for a in 0..2 {
            assert_eq!(m2.row(S_MINUS, a), &[0.0, 0.0, 0.0, 1.0]);
        }
        assert!((m2.reward(S_MINUS, 0) - (0.0 + g * -r)).abs() < 1e-15);
    }

    #[test]
    fn persistent_operator_first_hop_reward() {
        let m = counterexample_mdp(1.0, 0.9);
        let q = apply_persistent(&m, &TabularQ::zeros(4, 2)).unwrap();
        assert_eq!(q.get(S_MINUS, 0), 0.0);
    }

    #[test]
    fn closed_form_values() {
        let (r, g) = (1.0, 0.5);
        let m = counterexample_mdp(r, g);
        let q = solve_q(&m, SolveMode::Optimal, 1e-12).unwrap();
        assert!((q.state_values()[S_MINUS] - 1.0).abs() < 1e-9);
        assert_eq!(q.greedy_actions()[S_MINUS], 0);
        assert_eq!(q.greedy_actions()[S1], 1);
        let q2 = solve_q_persistent(&m, 2, SolveMode::Optimal, 1e-12, PersistentMethod::Composition).unwrap();
        assert!((q2.state_values()[S_MINUS] + g * r / (1.0 - g)).abs() < 1e-9);
    }
}
