//! Water Filling: a fast scouting drone and a slow filling vehicle keep three
//! jars from running dry on a grid. Water levels decay by truncated Gaussian
//! draws every low-level step; the shared reward strongly punishes empty jars.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ActionLevel, Env};
use crate::options::OptionDef;

pub const DRONE: usize = 0;
pub const VEHICLE: usize = 1;

// Primitive actions. Fill actions are vehicle-only.
pub const ACT_UP: usize = 0;
pub const ACT_DOWN: usize = 1;
pub const ACT_LEFT: usize = 2;
pub const ACT_RIGHT: usize = 3;
pub const ACT_NOOP: usize = 4;
pub const ACT_FILL0: usize = 5;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WfParams {
    pub width: i64,
    pub height: i64,
    pub jars: [(i64, i64); 3],
    pub w_max: f64,
    /// Per-episode decay mean is drawn uniformly from this range (x w_max).
    pub decay_mean_min: f64,
    pub decay_mean_max: f64,
    /// Decay std = factor * mean; zero makes the decay deterministic.
    pub decay_std_factor: f64,
    pub drone_speed: i64,
    pub vehicle_speed: i64,
    pub horizon: usize,
}

impl Default for WfParams {
    fn default() -> Self {
        WfParams {
            width: 12,
            height: 12,
            jars: [(1, 1), (10, 2), (5, 10)],
            w_max: 1.0,
            decay_mean_min: 0.005,
            decay_mean_max: 0.02,
            decay_std_factor: 0.3,
            drone_speed: 4,
            vehicle_speed: 1,
            horizon: 400,
        }
    }
}

/// Shared step reward over the true water levels.
pub fn wf_reward(levels: &[f64; 3]) -> f64 {
    levels.iter().map(|w| -1.0 / (w + 0.001) + 1.0).sum()
}

/// What an agent's option predicates and inner policy can see.
#[derive(Debug, Clone, PartialEq)]
pub struct WfLocal {
    pub pos: (i64, i64),
    pub jars: [(i64, i64); 3],
    /// Chebyshev distance at which navigation counts as arrived (the drone
    /// moves several cells per step and cannot always land exactly).
    pub nav_tolerance: i64,
    /// Jar filled by this agent during the last step, if any.
    pub last_filled: Option<usize>,
}

impl WfLocal {
    fn arrived(&self, jar: usize) -> bool {
        chebyshev(self.pos, self.jars[jar]) <= self.nav_tolerance
    }
}

fn chebyshev(a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// Greedy shortest-path step toward `target`: move along x before y.
fn greedy_move(pos: (i64, i64), target: (i64, i64), tolerance: i64) -> usize {
    let dx = target.0 - pos.0;
    let dy = target.1 - pos.1;
    if dx.abs() > tolerance {
        if dx > 0 {
            ACT_RIGHT
        } else {
            ACT_LEFT
        }
    } else if dy.abs() > tolerance {
        if dy > 0 {
            ACT_DOWN
        } else {
            ACT_UP
        }
    } else {
        ACT_NOOP
    }
}

pub struct WaterFilling {
    params: WfParams,
    level: ActionLevel,
    rng: ChaCha8Rng,
    positions: [(i64, i64); 2],
    levels: [f64; 3],
    known_levels: [f64; 3],
    staleness: usize,
    decay_mean: [f64; 3],
    last_filled: Option<usize>,
    step_count: usize,
    option_tables: Vec<Vec<OptionDef<WfLocal>>>,
}

impl WaterFilling {
    pub fn new(params: WfParams, level: ActionLevel) -> Self {
        let option_tables = match level {
            ActionLevel::Options => vec![drone_options(&params), vehicle_options(&params)],
            ActionLevel::Primitive => vec![
                primitive_options(&[ACT_UP, ACT_DOWN, ACT_LEFT, ACT_RIGHT, ACT_NOOP]),
                primitive_options(&[
                    ACT_UP, ACT_DOWN, ACT_LEFT, ACT_RIGHT, ACT_NOOP, ACT_FILL0,
                    ACT_FILL0 + 1,
                    ACT_FILL0 + 2,
                ]),
            ],
        };
        let mut env = WaterFilling {
            params,
            level,
            rng: ChaCha8Rng::seed_from_u64(0),
            positions: [(0, 0); 2],
            levels: [0.0; 3],
            known_levels: [0.0; 3],
            staleness: 0,
            decay_mean: [0.0; 3],
            last_filled: None,
            step_count: 0,
            option_tables,
        };
        env.reset(0);
        env
    }

    pub fn params(&self) -> &WfParams {
        &self.params
    }

    pub fn action_level(&self) -> ActionLevel {
        self.level
    }

    pub fn levels(&self) -> &[f64; 3] {
        &self.levels
    }

    pub fn positions(&self) -> &[(i64, i64); 2] {
        &self.positions
    }

    pub fn set_levels_for_test(&mut self, levels: [f64; 3]) {
        self.levels = levels;
    }

    /// Low-level steps since the drone last refreshed the shared levels.
    pub fn staleness(&self) -> usize {
        self.staleness
    }

    fn speed(&self, agent: usize) -> i64 {
        if agent == DRONE {
            self.params.drone_speed
        } else {
            self.params.vehicle_speed
        }
    }

    fn clamp(&self, pos: (i64, i64)) -> (i64, i64) {
        (
            pos.0.clamp(0, self.params.width - 1),
            pos.1.clamp(0, self.params.height - 1),
        )
    }
}

impl Env for WaterFilling {
    type Local = WfLocal;

    fn num_agents(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.positions = [
            (self.params.width / 2, self.params.height / 2),
            (self.params.width / 2, self.params.height / 2 - 1),
        ];
        self.levels = [self.params.w_max; 3];
        self.known_levels = [self.params.w_max; 3];
        self.staleness = 0;
        let span = self.params.decay_mean_max - self.params.decay_mean_min;
        for c in 0..3 {
            let u: f64 = self.rng.gen();
            self.decay_mean[c] = (self.params.decay_mean_min + u * span) * self.params.w_max;
        }
        self.last_filled = None;
        self.step_count = 0;
    }

    fn step(&mut self, actions: &[usize]) -> (f64, bool) {
        assert_eq!(actions.len(), 2, "expected 2 actions");
        self.last_filled = None;
        for agent in [DRONE, VEHICLE] {
            let action = actions[agent];
            let speed = self.speed(agent);
            let (x, y) = self.positions[agent];
            match action {
                ACT_UP => self.positions[agent] = self.clamp((x, y - speed)),
                ACT_DOWN => self.positions[agent] = self.clamp((x, y + speed)),
                ACT_LEFT => self.positions[agent] = self.clamp((x - speed, y)),
                ACT_RIGHT => self.positions[agent] = self.clamp((x + speed, y)),
                ACT_NOOP => {}
                a if (ACT_FILL0..ACT_FILL0 + 3).contains(&a) && agent == VEHICLE => {
                    let jar = a - ACT_FILL0;
                    if self.positions[agent] == self.params.jars[jar] {
                        self.levels[jar] = self.params.w_max;
                        self.last_filled = Some(jar);
                    }
                }
                a => panic!("invalid action id {a} for agent {agent}"),
            }
        }
        // Random decay, truncated at zero.
        for c in 0..3 {
            let mean = self.decay_mean[c];
            let std = self.params.decay_std_factor * mean;
            let drop = if std > 0.0 {
                Normal::new(mean, std).unwrap().sample(&mut self.rng).max(0.0)
            } else {
                mean
            };
            self.levels[c] = (self.levels[c] - drop).clamp(0.0, self.params.w_max);
        }
        // Scouting: an agent at or next to a jar refreshes the shared memory.
        let mut refreshed = false;
        for agent in [DRONE, VEHICLE] {
            for c in 0..3 {
                if chebyshev(self.positions[agent], self.params.jars[c]) <= 2 {
                    self.known_levels[c] = self.levels[c];
                    refreshed = true;
                }
            }
        }
        self.staleness = if refreshed { 0 } else { self.staleness + 1 };
        self.step_count += 1;
        (wf_reward(&self.levels), false)
    }

    fn local_state(&self, agent: usize) -> WfLocal {
        WfLocal {
            pos: self.positions[agent],
            jars: self.params.jars,
            nav_tolerance: if agent == DRONE { 2 } else { 0 },
            last_filled: if agent == VEHICLE {
                self.last_filled
            } else {
                None
            },
        }
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        let (x, y) = self.positions[agent];
        vec![
            x as f64 / self.params.width as f64,
            y as f64 / self.params.height as f64,
            self.known_levels[0] / self.params.w_max,
            self.known_levels[1] / self.params.w_max,
            self.known_levels[2] / self.params.w_max,
            (self.staleness as f64 / 100.0).min(1.0),
        ]
    }

    fn obs_dim(&self, _agent: usize) -> usize {
        6
    }

    fn options(&self, agent: usize) -> &[OptionDef<WfLocal>] {
        &self.option_tables[agent]
    }

    fn noop_action(&self, _agent: usize) -> usize {
        ACT_NOOP
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }
}

fn duration_cap(params: &WfParams) -> u32 {
    (params.width + params.height + 5) as u32
}

fn primitive_options(actions: &[usize]) -> Vec<OptionDef<WfLocal>> {
    actions
        .iter()
        .enumerate()
        .map(|(id, &a)| OptionDef::one_step(id, &format!("Prim{a}"), a))
        .collect()
}

fn nav_to(id: usize, jar: usize, cap: u32) -> OptionDef<WfLocal> {
    OptionDef {
        id,
        name: format!("NavTo({jar})"),
        initiation: Arc::new(|_| true),
        termination: Arc::new(move |s: &WfLocal, _| s.arrived(jar)),
        inner_policy: Arc::new(move |s: &WfLocal| {
            greedy_move(s.pos, s.jars[jar], s.nav_tolerance)
        }),
        max_duration: cap,
    }
}

fn drone_options(params: &WfParams) -> Vec<OptionDef<WfLocal>> {
    let cap = duration_cap(params);
    let mut opts = vec![
        OptionDef::one_step(0, "Up", ACT_UP),
        OptionDef::one_step(1, "Down", ACT_DOWN),
        OptionDef::one_step(2, "Left", ACT_LEFT),
        OptionDef::one_step(3, "Right", ACT_RIGHT),
    ];
    for jar in 0..3 {
        opts.push(nav_to(4 + jar, jar, cap));
    }
    opts
}

fn vehicle_options(params: &WfParams) -> Vec<OptionDef<WfLocal>> {
    let cap = duration_cap(params);
    let mut opts = vec![
        OptionDef::one_step(0, "Up", ACT_UP),
        OptionDef::one_step(1, "Down", ACT_DOWN),
        OptionDef::one_step(2, "Left", ACT_LEFT),
        OptionDef::one_step(3, "Right", ACT_RIGHT),
    ];
    for jar in 0..3 {
        opts.push(OptionDef::one_step(4 + jar, &format!("Fill({jar})"), ACT_FILL0 + jar));
    }
    for jar in 0..3 {
        opts.push(nav_to(7 + jar, jar, cap));
    }
    for jar in 0..3 {
        opts.push(OptionDef {
            id: 10 + jar,
            name: format!("NavToFill({jar})"),
            initiation: Arc::new(|_| true),
            termination: Arc::new(move |s: &WfLocal, _| s.last_filled == Some(jar)),
            inner_policy: Arc::new(move |s: &WfLocal| {
                if s.pos == s.jars[jar] {
                    ACT_FILL0 + jar
                } else {
                    greedy_move(s.pos, s.jars[jar], 0)
                }
            }),
            max_duration: cap + 5,
        });
    }
    opts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::options::{check_termination, OngoingOption};

    fn deterministic_params() -> WfParams {
        WfParams {
            decay_std_factor: 0.0,
            decay_mean_min: 0.01,
            decay_mean_max: 0.01,
            ..WfParams::default()
        }
    }

    #[test]
    fn reward_matches_direct_evaluation() {
        // All levels 1.0.
        let r = wf_reward(&[1.0, 1.0, 1.0]);
        assert!((r - 3.0 * (-1.0 / 1.001 + 1.0)).abs() < 1e-12);
        assert!((r - 0.002997).abs() < 1e-6);
        // All levels 0: worst case.
        assert!((wf_reward(&[0.0, 0.0, 0.0]) - (-2997.0)).abs() < 1e-9);
        // Mixed.
        let r = wf_reward(&[0.0, 1.0, 1.0]);
        let expect = (-1.0 / 0.001 + 1.0) + 2.0 * (-1.0 / 1.001 + 1.0);
        assert!((r - expect).abs() < 1e-12);
    }

    #[test]
    fn reward_monotone_in_each_level() {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0x9E3779B97F4A7C15);
        for _ in 0..200 {
            let base: [f64; 3] = [
                (rng.next_u64() % 1000) as f64 / 1000.0,
                (rng.next_u64() % 1000) as f64 / 1000.0,
                (rng.next_u64() % 1000) as f64 / 1000.0,
            ];
            for c in 0..3 {
                let mut higher = base;
                higher[c] = (higher[c] + 0.1).min(1.0);
                if higher[c] > base[c] {
                    assert!(wf_reward(&higher) > wf_reward(&base));
                }
            }
        }
    }

    use rand::RngCore;

    #[test]
    fn option_table_sizes() {
        let env = WaterFilling::new(WfParams::default(), ActionLevel::Options);
        assert_eq!(env.options(DRONE).len(), 7);
        assert_eq!(env.options(VEHICLE).len(), 13);
    }

    #[test]
    fn fill_resets_level_before_decay() {
        let mut env = WaterFilling::new(deterministic_params(), ActionLevel::Options);
        env.reset(1);
        // Drive the vehicle onto jar 0 by teleport-free navigation.
        let jar = env.params().jars[0];
        while env.positions()[VEHICLE] != jar {
            let local = env.local_state(VEHICLE);
            let a = greedy_move(local.pos, jar, 0);
            env.step(&[ACT_NOOP, a]);
        }
        env.step(&[ACT_NOOP, ACT_FILL0]);
        // Level is w_max minus exactly one deterministic decay step.
        let expect = env.params().w_max - env.decay_mean[0];
        assert!((env.levels()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn moves_clamp_at_boundary() {
        let mut env = WaterFilling::new(deterministic_params(), ActionLevel::Options);
        env.reset(0);
        for _ in 0..10 {
            env.step(&[ACT_LEFT, ACT_NOOP]);
        }
        assert_eq!(env.positions()[DRONE].0, 0);
    }

    #[test]
    fn zero_variance_decay_is_exact() {
        let mut env = WaterFilling::new(deterministic_params(), ActionLevel::Options);
        env.reset(3);
        let mean = env.decay_mean;
        env.step(&[ACT_NOOP, ACT_NOOP]);
        for c in 0..3 {
            assert!((env.levels()[c] - (1.0 - mean[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn levels_stay_in_range() {
        let mut env = WaterFilling::new(WfParams::default(), ActionLevel::Options);
        env.reset(7);
        for _ in 0..500 {
            env.step(&[ACT_NOOP, ACT_NOOP]);
            for &l in env.levels() {
                assert!((0.0..=1.0).contains(&l));
            }
        }
    }

    #[test]
    fn nav_to_terminates_on_arrival_and_mid_path_does_not() {
        let env = WaterFilling::new(WfParams::default(), ActionLevel::Options);
        let def = &env.options(VEHICLE)[7]; // NavTo(0)
        let at_jar = WfLocal {
            pos: env.params().jars[0],
            jars: env.params().jars,
            nav_tolerance: 0,
            last_filled: None,
        };
        let oo = OngoingOption::start(7, 0);
        assert!(check_termination(def, &at_jar, &oo));
        let mid = WfLocal {
            pos: (6, 6),
            ..at_jar.clone()
        };
        assert!(!check_termination(def, &mid, &oo));
        // Duration cap forces termination anywhere.
        let capped = OngoingOption {
            option_id: 7,
            start_step: 0,
            progress: def.max_duration,
        };
        assert!(check_termination(def, &mid, &capped));
    }

    #[test]
    fn nav_to_already_at_goal_makes_no_move() {
        let env = WaterFilling::new(WfParams::default(), ActionLevel::Options);
        let def = &env.options(DRONE)[4]; // NavTo(0)
        let local = WfLocal {
            pos: env.params().jars[0],
            jars: env.params().jars,
            nav_tolerance: 2,
            last_filled: None,
        };
        assert_eq!((def.inner_policy)(&local), ACT_NOOP);
    }

    #[test]
    fn drone_moves_four_cells_per_step() {
        let mut env = WaterFilling::new(deterministic_params(), ActionLevel::Options);
        env.reset(0);
        let before = env.positions()[DRONE];
        env.step(&[ACT_RIGHT, ACT_NOOP]);
        assert_eq!(env.positions()[DRONE].0, (before.0 + 4).min(11));
        // Vehicle only one.
        let vb = env.positions()[VEHICLE];
        env.step(&[ACT_NOOP, ACT_RIGHT]);
        assert_eq!(env.positions()[VEHICLE].0, vb.0 + 1);
    }

    #[test]
    fn scouting_refreshes_known_levels_and_staleness() {
        let mut env = WaterFilling::new(deterministic_params(), ActionLevel::Options);
        env.reset(0);
        // Start position is away from all jars; staleness grows.
        env.step(&[ACT_NOOP, ACT_NOOP]);
        assert_eq!(env.staleness(), 1);
        // Drive the drone next to jar 2 at (5, 10).
        while chebyshev(env.positions()[DRONE], env.params().jars[2]) > 2 {
            let a = greedy_move(env.positions()[DRONE], env.params().jars[2], 2);
            env.step(&[a, ACT_NOOP]);
        }
        assert_eq!(env.staleness(), 0);
        let obs = env.observe(DRONE);
        assert!((obs[4] - env.levels()[2]).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "invalid action id")]
    fn invalid_action_panics() {
        let mut env = WaterFilling::new(WfParams::default(), ActionLevel::Options);
        env.step(&[99, ACT_NOOP]);
    }

    #[test]
    fn deterministic_given_seed_and_actions() {
        let run = || {
            let mut env = WaterFilling::new(WfParams::default(), ActionLevel::Options);
            env.reset(11);
            let mut rewards = Vec::new();
            for i in 0..50 {
                let (r, _) = env.step(&[i % 4, (i + 1) % 4]);
                rewards.push(r);
            }
            rewards
        };
        assert_eq!(run(), run());
    }
}
