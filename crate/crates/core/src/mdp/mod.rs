//! MDPs, policies, trajectories and the two views of action persistence.

mod data;
mod policy;
mod rollout;
mod tabular;

pub use data::{Dataset, DatasetManifest, Trajectory, Transition};
#[allow(unused_imports)]
pub(crate) use data::{fmt_f64, hex_digest};
pub use policy::{state_index, DiscretePolicy, PersistentExecutor, TabularPolicy};
pub use rollout::{persistent_rollout, PersistentEnv};
pub use tabular::{TabularMdp, TabularMdpDoc};

/// The k-persistent MDP of `m` (policy view ↔ environment view duality).
pub fn build_persistent_tabular(m: &TabularMdp, k: usize) -> crate::Result<TabularMdp> {
    m.persistent(k)
}

/// Wrap an environment so that each step persists the action `k` times.
pub fn wrap_persistent_env<E: crate::env::Environment>(env: E, k: usize) -> crate::Result<PersistentEnv<E>> {
    PersistentEnv::new(env, k)
}
