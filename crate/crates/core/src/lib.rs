//! Action persistence for batch reinforcement learning.
//!
//! The crate covers the k-persistent MDP (policy and environment views),
//! exact persistent Bellman operators with a numeric evaluator of the
//! persistence performance-loss bound, Persistent Fitted Q-Iteration on top
//! of a from-scratch extremely-randomized-trees regressor, the
//! persistence-selection index, classic-control simulators, and the
//! experiment harness behind the `actpersist` command-line tool.

pub mod env;
pub mod error;
pub mod exact;
pub mod harness;
pub mod mdp;
pub mod pfqi;
pub mod qfunction;
pub mod regress;
pub mod seed;
pub mod select;

pub use error::{Error, Result};
pub use qfunction::QFunction;
