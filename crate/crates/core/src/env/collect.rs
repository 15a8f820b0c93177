use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::{Error, Result};
use crate::mdp::{persistent_rollout, Dataset, DatasetManifest, DiscretePolicy, PersistentEnv, Trajectory};
use crate::seed;

/// Behaviour policy used for collection.
pub type SamplingPolicy = DiscretePolicy;

/// Where the sampling persistence is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollectMode {
    /// Base-MDP tuples; every repetition of a persisted action is recorded.
    #[default]
    Base,
    /// Aggregated k-step tuples of the k-persistent environment.
    PersistentEnv,
}

/// How much data to gather.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Trajectories(usize),
    /// Episodes are collected until exactly this many transitions exist;
    /// the last episode is truncated (not terminal) if needed.
    Samples(usize),
}

/// Collect a batch dataset with a behaviour policy executed at persistence
/// `k_sampling`. Episode `i` uses a seed derived from `seed` and `i`.
pub fn collect_dataset<E: Environment>(
    env: &mut E,
    policy: &SamplingPolicy,
    k_sampling: usize,
    budget: Budget,
    seed: u64,
    mode: CollectMode,
) -> Result<Dataset> {
    if k_sampling == 0 {
        return Err(Error::InvalidPersistence(0));
    }
    match budget {
        Budget::Trajectories(0) | Budget::Samples(0) => {
            return Err(Error::Config("collection budget must be at least 1".into()))
        }
        _ => {}
    }
    match mode {
        CollectMode::Base => {
            let trajectories = gather(env, policy, k_sampling, budget, seed)?;
            finish(env, trajectories, k_sampling, false, seed)
        }
        CollectMode::PersistentEnv => {
            let mut wrapped = PersistentEnv::new(&mut *env, k_sampling)?;
            let trajectories = gather(&mut wrapped, policy, 1, budget, seed)?;
            finish(&wrapped, trajectories, k_sampling, true, seed)
        }
    }
}

fn gather<E: Environment>(
    env: &mut E,
    policy: &SamplingPolicy,
    k: usize,
    budget: Budget,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let horizon = env.spec().horizon;
    let mut trajectories = Vec::new();
    let mut total = 0;
    loop {
        let done = match budget {
            Budget::Trajectories(n) => trajectories.len() >= n,
            Budget::Samples(n) => total >= n,
        };
        if done {
            break;
        }
        let episode_seed = seed::derive(seed, "collect-episode", trajectories.len() as u64);
        let mut traj = persistent_rollout(env, policy, k, horizon, episode_seed)?;
        if let Budget::Samples(n) = budget {
            if total + traj.len() > n {
                let mut kept = traj.transitions()[..n - total].to_vec();
                if let Some(last) = kept.last_mut() {
                    last.terminal = false;
                }
                traj = Trajectory::new(kept)?;
            }
        }
        total += traj.len();
        trajectories.push(traj);
    }
    Ok(trajectories)
}

fn finish<E: Environment>(
    env: &E,
    trajectories: Vec<Trajectory>,
    k_sampling: usize,
    persistent_env: bool,
    seed: u64,
) -> Result<Dataset> {
    let spec = env.spec();
    let manifest = DatasetManifest {
        env_name: spec.name.clone(),
        sampling_persistence: k_sampling,
        collected_in_persistent_env: persistent_env,
        seed,
        n_samples: trajectories.iter().map(Trajectory::len).sum(),
        n_trajectories: trajectories.len(),
        discount: spec.discount,
        state_dim: spec.state_dim,
        n_actions: spec.n_actions(),
        action_set: spec.action_set.clone(),
    };
    Dataset::new(trajectories, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CartPole, MountainCar};

    fn uniform(n: usize) -> DiscretePolicy {
        DiscretePolicy::Uniform { n_actions: n }
    }

    #[test]
    fn cartpole_sample_budget_is_exact() {
        let mut env = CartPole::new(4, 128, 0.99);
        let ds = collect_dataset(&mut env, &uniform(2), 1, Budget::Samples(400), 3, CollectMode::Base).unwrap();
        assert_eq!(ds.n_samples(), 400);
        assert_eq!(ds.manifest().sampling_persistence, 1);
        assert!(ds.n_samples() == ds.transitions().count());
        let again = collect_dataset(&mut env, &uniform(2), 1, Budget::Samples(400), 3, CollectMode::Base).unwrap();
        assert_eq!(ds.to_csv_string(), again.to_csv_string());
    }

    #[test]
    fn sampling_persistence_repeats_actions() {
        let mut env = MountainCar::new(2, 128, 0.99);
        let ds = collect_dataset(&mut env, &uniform(3), 8, Budget::Trajectories(3), 1, CollectMode::Base).unwrap();
        for traj in ds.trajectories() {
            let a = traj.actions();
            for t in 0..a.len() {
                assert_eq!(a[t], a[8 * (t / 8)]);
            }
        }
    }

    #[test]
    fn persistent_env_mode_records_aggregated_tuples() {
        let mut env = CartPole::new(4, 128, 0.99);
        let ds = collect_dataset(&mut env, &uniform(2), 4, Budget::Trajectories(2), 5, CollectMode::PersistentEnv)
            .unwrap();
        assert!(ds.manifest().collected_in_persistent_env);
        assert!((ds.discount() - env.discount().powi(4)).abs() < 1e-15);
        // all non-final aggregated rewards are the 4-step discounted sum of ones
        let g = env.discount();
        let full = 1.0 + g + g * g + g * g * g;
        for traj in ds.trajectories() {
            for tr in &traj.transitions()[..traj.len() - 1] {
                assert!((tr.reward - full).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_budget_rejected() {
        let mut env = CartPole::new(4, 128, 0.99);
        assert!(collect_dataset(&mut env, &uniform(2), 1, Budget::Trajectories(0), 0, CollectMode::Base).is_err());
    }
}
