//! Centralized multi-agent policy gradients over asynchronously terminating
//! options.
//!
//! Agents pick temporally-extended options that finish at different low-level
//! steps. Whenever at least one agent needs a new option, the joint categorical
//! option distribution is conditioned on the ongoing options of the remaining
//! agents and only the deciding agents sample. Training is on-policy PPO over
//! the resulting option-level trajectories, with SMDP-style discounting across
//! the variable gaps between decision points.

pub mod checkpoint;
pub mod config;
pub mod envs;
pub mod nn;
pub mod options;
pub mod policy;
pub mod rollout;
pub mod trainer;

pub use envs::Env;
pub use options::ExecutionStrategy;
pub use policy::PolicyMode;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("conditioning on measure-zero event (marginal mass {mass:.3e})")]
    MeasureZero { mass: f64 },
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
