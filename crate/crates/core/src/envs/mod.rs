//! Cooperative Dec-POMDP environments: grid-based Water Filling and Tool
//! Delivery, plus a scripted fixed-duration environment for testing.

mod scripted;
mod tooldelivery;
mod water;

pub use scripted::ScriptedEnv;
pub use tooldelivery::{
    TdParams, ToolDelivery, ToolStatus, FB_NOOP, FB_PASS0, FB_SEARCH0, FETCHBOT, NUM_STAGES,
    NUM_TOOLS, TB_GET, TB_GO_DESK, TB_GO_TR, TB_GO_WS, TB_NOOP, TURTLEBOT0, TURTLEBOT1,
};
pub use water::{wf_reward, WaterFilling, WfParams};

use crate::options::OptionDef;

/// Whether agents act through the task's option tables or through one-step
/// options wrapping each primitive action (the end2end baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ActionLevel {
    Options,
    Primitive,
}

/// A multi-agent environment with per-agent option tables.
///
/// One instance per rollout worker; instances own their RNG and share nothing.
pub trait Env: Send {
    /// Per-agent local state visible to option predicates and inner policies.
    type Local;

    fn num_agents(&self) -> usize;

    /// Reinitializes the episode deterministically from `seed`.
    fn reset(&mut self, seed: u64);

    /// Applies one joint primitive action; returns (shared reward, done).
    /// Panics on an invalid action id.
    fn step(&mut self, actions: &[usize]) -> (f64, bool);

    fn local_state(&self, agent: usize) -> Self::Local;

    /// Local feature-vector observation.
    fn observe(&self, agent: usize) -> Vec<f64>;

    fn obs_dim(&self, agent: usize) -> usize;

    fn options(&self, agent: usize) -> &[OptionDef<Self::Local>];

    /// Primitive action that leaves the agent idle for one step.
    fn noop_action(&self, agent: usize) -> usize;

    /// Low-level step budget per episode.
    fn horizon(&self) -> usize;

    /// Concatenation of all per-agent observations.
    fn observe_joint(&self) -> Vec<f64> {
        let mut joint = Vec::with_capacity(self.joint_obs_dim());
        for agent in 0..self.num_agents() {
            joint.extend(self.observe(agent));
        }
        joint
    }

    fn joint_obs_dim(&self) -> usize {
        (0..self.num_agents()).map(|a| self.obs_dim(a)).sum()
    }

    fn option_counts(&self) -> Vec<usize> {
        (0..self.num_agents())
            .map(|a| self.options(a).len())
            .collect()
    }
}

/// Environment identifier plus parameters, as stored in configs/checkpoints.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum EnvConfig {
    WaterFilling(WfParams),
    ToolDelivery(TdParams),
}

impl EnvConfig {
    pub fn id(&self) -> &'static str {
        match self {
            EnvConfig::WaterFilling(_) => "water_filling",
            EnvConfig::ToolDelivery(_) => "tool_delivery",
        }
    }

    pub fn default_for(id: &str) -> Option<Self> {
        match id {
            "water_filling" => Some(EnvConfig::WaterFilling(WfParams::default())),
            "tool_delivery" => Some(EnvConfig::ToolDelivery(TdParams::default())),
            _ => None,
        }
    }
}
