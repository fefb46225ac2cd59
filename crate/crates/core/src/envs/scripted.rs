//! Fixed-duration option environment for tests and benchmarks: agent `i`'s
//! option `j` lasts exactly `durations[i][j]` low-level steps, and the shared
//! reward at step `k` comes from a seeded stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActionLevel, Env};
use crate::options::OptionDef;

pub struct ScriptedEnv {
    durations: Vec<Vec<u32>>,
    horizon: usize,
    rewards: Vec<f64>,
    step_count: usize,
    option_tables: Vec<Vec<OptionDef<()>>>,
}

impl ScriptedEnv {
    /// `durations[i][j]` is the fixed length of agent i's option j. With
    /// `ActionLevel::Primitive` every option lasts one step instead.
    pub fn new(durations: Vec<Vec<u32>>, horizon: usize, level: ActionLevel) -> Self {
        let option_tables = durations
            .iter()
            .map(|agent_durs| {
                agent_durs
                    .iter()
                    .enumerate()
                    .map(|(j, &dur)| {
                        let dur = match level {
                            ActionLevel::Options => dur,
                            ActionLevel::Primitive => 1,
                        };
                        OptionDef {
                            id: j,
                            name: format!("Opt{j}(len {dur})"),
                            initiation: std::sync::Arc::new(|_| true),
                            termination: std::sync::Arc::new(move |_, progress| progress >= dur),
                            inner_policy: std::sync::Arc::new(|_| 0),
                            max_duration: dur,
                        }
                    })
                    .collect()
            })
            .collect();
        let mut env = ScriptedEnv {
            durations,
            horizon,
            rewards: Vec::new(),
            step_count: 0,
            option_tables,
        };
        env.reset(0);
        env
    }

    pub fn durations(&self) -> &[Vec<u32>] {
        &self.durations
    }
}

impl Env for ScriptedEnv {
    type Local = ();

    fn num_agents(&self) -> usize {
        self.durations.len()
    }

    fn reset(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.rewards = (0..self.horizon).map(|_| rng.gen_range(-1.0..1.0)).collect();
        self.step_count = 0;
    }

    fn step(&mut self, actions: &[usize]) -> (f64, bool) {
        assert_eq!(actions.len(), self.num_agents());
        let r = self.rewards.get(self.step_count).copied().unwrap_or(0.0);
        self.step_count += 1;
        (r, false)
    }

    fn local_state(&self, _agent: usize) {}

    fn observe(&self, _agent: usize) -> Vec<f64> {
        vec![self.step_count as f64 / self.horizon as f64]
    }

    fn obs_dim(&self, _agent: usize) -> usize {
        1
    }

    fn options(&self, agent: usize) -> &[OptionDef<()>] {
        &self.option_tables[agent]
    }

    fn noop_action(&self, _agent: usize) -> usize {
        0
    }

    fn horizon(&self) -> usize {
        self.horizon
    }
}
