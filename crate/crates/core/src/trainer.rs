//! Outer training loop: on-policy collection, GAE over decision points, and a
//! PPO-clipped surrogate on conditional log-probabilities (vanilla policy
//! gradient available behind a config flag). Centralized mode trains one joint
//! policy and critic over the joint observation; partially centralized mode
//! trains per-agent nets over local observations, where each agent's net still
//! outputs a full joint distribution and continuing agents contribute exactly
//! zero gradient (their selection probability is pinned at 1).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::Env;
use crate::nn::{optimizer_step, Activation, AdamState, Gradient, ParamSet};
use crate::options::{DecisionSet, ExecutionStrategy};
use crate::policy::{
    agent_marginal_entropy_grad, agent_marginal_log_prob_grad, conditional_entropy_grad,
    conditional_log_prob_grad, ConditionAssignment, JointCategorical, PolicyMode,
};
use crate::rollout::{
    collect_batch, collect_episode, compute_gae, AdvantageBatch, BatchSpec, DecisionOutput,
    DecisionRecord, GaeInput, OptionPolicy, OptionTrajectory,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Clipped-ratio surrogate with multiple epochs per batch.
    PpoClip,
    /// Plain advantage-weighted log-probability gradient.
    VanillaPg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: ExecutionStrategy,
    pub mode: PolicyMode,
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    /// Low-level env steps collected per iteration (fair across strategies).
    pub steps_per_iter: usize,
    pub iterations: usize,
    pub workers: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: ExecutionStrategy::AsyncContinue,
            mode: PolicyMode::Centralized,
            algorithm: Algorithm::PpoClip,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatches: 1,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lr: 3e-4,
            hidden: vec![64, 64],
            steps_per_iter: 4000,
            iterations: 100,
            workers: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.clip <= 0.0 {
            return Err(Error::Config(format!(
                "clip ratio must be positive, got {}",
                self.clip
            )));
        }
        if self.epochs == 0 || self.minibatches == 0 {
            return Err(Error::Config(
                "epochs and minibatches must be at least 1".into(),
            ));
        }
        if self.steps_per_iter == 0 {
            return Err(Error::Config("steps_per_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Policy and value networks; one pair in centralized mode, one pair per agent
/// in partially centralized mode. Every policy head outputs logits over the
/// full joint option space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNets {
    pub mode: PolicyMode,
    pub option_counts: Vec<usize>,
    pub policy: Vec<ParamSet>,
    pub value: Vec<ParamSet>,
}

impl PolicyNets {
    pub fn new(
        mode: PolicyMode,
        option_counts: Vec<usize>,
        joint_obs_dim: usize,
        local_obs_dims: &[usize],
        hidden: &[usize],
        seed: u64,
    ) -> Self {
        let joint_cells: usize = option_counts.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545F4914F6CDD1D) ^ 0xA11CE);
        let build = |input: usize, output: usize, last_gain: f64, rng: &mut ChaCha8Rng| {
            let proto = ParamSet::mlp(input, hidden, output, Activation::Tanh);
            ParamSet::init(proto.shapes().to_vec(), Activation::Tanh, last_gain, rng)
        };
        let (policy, value) = match mode {
            PolicyMode::Centralized => (
                vec![build(joint_obs_dim, joint_cells, 0.01, &mut rng)],
                vec![build(joint_obs_dim, 1, 1.0, &mut rng)],
            ),
            PolicyMode::PartiallyCentralized => {
                let policy = local_obs_dims
                    .iter()
                    .map(|&d| build(d, joint_cells, 0.01, &mut rng))
                    .collect();
                let value = local_obs_dims
                    .iter()
                    .map(|&d| build(d, 1, 1.0, &mut rng))
                    .collect();
                (policy, value)
            }
        };
        PolicyNets {
            mode,
            option_counts,
            policy,
            value,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.option_counts.len()
    }

    fn free_agents(&self, fixed: &ConditionAssignment) -> Vec<usize> {
        (0..self.num_agents())
            .filter(|a| fixed.get(*a).is_none())
            .collect()
    }

    /// Agent `agent`'s option distribution under its own joint head,
    /// conditioned on `fixed` with the other free agents summed out.
    fn agent_conditional_marginal(
        &self,
        agent: usize,
        local_obs: &[f64],
        fixed: &ConditionAssignment,
    ) -> Result<JointCategorical> {
        let logits = self.policy[agent].forward(local_obs)?;
        let joint = JointCategorical::from_logits(logits, self.option_counts.clone())?;
        let cond = joint.condition(fixed)?;
        let free = self.free_agents(fixed);
        let pos = free
            .iter()
            .position(|&a| a == agent)
            .expect("agent must not be fixed");
        cond.marginal(&[pos])
    }
}

fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

impl OptionPolicy for PolicyNets {
    fn decide(
        &self,
        joint_obs: &[f64],
        local_obs: &[Vec<f64>],
        decision: &DecisionSet,
        fixed: &ConditionAssignment,
        rng: &mut ChaCha8Rng,
        greedy: bool,
    ) -> Result<DecisionOutput> {
        let n = self.num_agents();
        let mut joint_option = vec![0usize; n];
        for (a, o) in fixed.iter() {
            joint_option[a] = o;
        }
        match self.mode {
            PolicyMode::Centralized => {
                let logits = self.policy[0].forward(joint_obs)?;
                let joint = JointCategorical::from_logits(logits, self.option_counts.clone())?;
                let cond = joint.condition(fixed)?;
                let free_choice = if greedy {
                    cond.multi_index(argmax(cond.logits()))
                } else {
                    cond.sample(rng)
                };
                let log_prob = cond.log_prob(&free_choice)?;
                let entropy = cond.entropy();
                let free = self.free_agents(fixed);
                for (j, &a) in free.iter().enumerate() {
                    joint_option[a] = free_choice[j];
                }
                let v = self.value[0].forward(joint_obs)?[0];
                Ok(DecisionOutput {
                    joint_option,
                    log_prob,
                    agent_log_probs: vec![0.0; n],
                    value: v,
                    agent_values: vec![v; n],
                    entropy,
                })
            }
            PolicyMode::PartiallyCentralized => {
                let mut agent_log_probs = vec![0.0; n];
                let mut log_prob = 0.0;
                let mut entropy_sum = 0.0;
                for &a in &decision.deciding {
                    let m = self.agent_conditional_marginal(a, &local_obs[a], fixed)?;
                    let choice = if greedy {
                        argmax(m.logits())
                    } else {
                        m.sample(rng)[0]
                    };
                    let lp = m.log_prob(&[choice])?;
                    joint_option[a] = choice;
                    agent_log_probs[a] = lp;
                    log_prob += lp;
                    entropy_sum += m.entropy();
                }
                let agent_values: Vec<f64> = (0..n)
                    .map(|a| Ok(self.value[a].forward(&local_obs[a])?[0]))
                    .collect::<Result<_>>()?;
                let value = agent_values.iter().sum::<f64>() / n as f64;
                Ok(DecisionOutput {
                    joint_option,
                    log_prob,
                    agent_log_probs,
                    value,
                    agent_values,
                    entropy: entropy_sum / decision.deciding.len() as f64,
                })
            }
        }
    }

    fn value(&self, joint_obs: &[f64], local_obs: &[Vec<f64>]) -> (f64, Vec<f64>) {
        match self.mode {
            PolicyMode::Centralized => {
                let v = self.value[0]
                    .forward(joint_obs)
                    .map(|o| o[0])
                    .unwrap_or(0.0);
                (v, vec![v; self.num_agents()])
            }
            PolicyMode::PartiallyCentralized => {
                let vs: Vec<f64> = (0..self.num_agents())
                    .map(|a| {
                        self.value[a]
                            .forward(&local_obs[a])
                            .map(|o| o[0])
                            .unwrap_or(0.0)
                    })
                    .collect();
                let mean = vs.iter().sum::<f64>() / vs.len() as f64;
                (mean, vs)
            }
        }
    }
}

/// Adam states mirroring `PolicyNets`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimStates {
    pub policy: Vec<AdamState>,
    pub value: Vec<AdamState>,
}

impl OptimStates {
    pub fn new(nets: &PolicyNets, lr: f64) -> Self {
        OptimStates {
            policy: nets.policy.iter().map(|p| AdamState::new(p.len(), lr)).collect(),
            value: nets.value.iter().map(|p| AdamState::new(p.len(), lr)).collect(),
        }
    }
}

/// Per-iteration training metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Cumulative low-level env steps.
    pub env_steps: usize,
    /// Cumulative decision points.
    pub decision_points: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_log_prob: f64,
    pub batch_steps: usize,
    pub batch_decision_points: usize,
}

/// Writes the metrics CSV (`iteration,env_steps,decision_points,mean_reward,
/// policy_loss,value_loss,entropy`).
pub fn write_metrics_csv<W: std::io::Write>(
    writer: &mut W,
    metrics: &[IterationMetrics],
) -> std::io::Result<()> {
    writeln!(
        writer,
        "iteration,env_steps,decision_points,mean_reward,policy_loss,value_loss,entropy"
    )?;
    for m in metrics {
        writeln!(
            writer,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            m.iteration,
            m.env_steps,
            m.decision_points,
            m.mean_reward,
            m.policy_loss,
            m.value_loss,
            m.entropy
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_log_prob: f64,
}

struct StatAccum {
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    log_prob: f64,
    policy_n: usize,
    value_n: usize,
}

impl StatAccum {
    fn new() -> Self {
        StatAccum {
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            log_prob: 0.0,
            policy_n: 0,
            value_n: 0,
        }
    }

    fn finish(&self) -> UpdateStats {
        let pn = self.policy_n.max(1) as f64;
        let vn = self.value_n.max(1) as f64;
        UpdateStats {
            policy_loss: self.policy_loss / pn,
            value_loss: self.value_loss / vn,
            entropy: self.entropy / pn,
            mean_log_prob: self.log_prob / pn,
        }
    }
}

/// Surrogate gradient coefficient with respect to the new log-probability.
/// For PPO-clip the gradient of the min() objective is `ratio * adv` while
/// the unclipped branch is active and exactly zero once clipping saturates.
fn surrogate_coef(algorithm: Algorithm, clip: f64, new_lp: f64, stored_lp: f64, adv: f64) -> f64 {
    match algorithm {
        Algorithm::VanillaPg => adv,
        Algorithm::PpoClip => {
            let ratio = (new_lp - stored_lp).exp();
            let saturated =
                (ratio > 1.0 + clip && adv > 0.0) || (ratio < 1.0 - clip && adv < 0.0);
            if saturated {
                0.0
            } else {
                ratio * adv
            }
        }
    }
}

fn surrogate_loss(algorithm: Algorithm, clip: f64, new_lp: f64, stored_lp: f64, adv: f64) -> f64 {
    match algorithm {
        Algorithm::VanillaPg => -new_lp * adv,
        Algorithm::PpoClip => {
            let ratio = (new_lp - stored_lp).exp();
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
            -(ratio * adv).min(clipped * adv)
        }
    }
}

fn chunk_indices(n: usize, minibatches: usize) -> Vec<Vec<usize>> {
    let size = n.div_ceil(minibatches.max(1)).max(1);
    (0..n)
        .collect::<Vec<_>>()
        .chunks(size)
        .map(|c| c.to_vec())
        .collect()
}

/// One PPO (or vanilla PG) update over a collected batch. On a non-finite
/// loss or gradient the parameters and optimizer states are rolled back and
/// the iteration is skipped with a warning.
pub fn ppo_update(
    nets: &mut PolicyNets,
    optim: &mut OptimStates,
    trajectories: &[OptionTrajectory],
    cfg: &TrainConfig,
) -> Result<UpdateStats> {
    let records: Vec<&DecisionRecord> = trajectories
        .iter()
        .flat_map(|t| t.records.iter())
        .collect();
    if records.is_empty() {
        return Ok(UpdateStats::default());
    }
    let nets_snapshot = nets.clone();
    let optim_snapshot = optim.clone();
    let result = match nets.mode {
        PolicyMode::Centralized => update_centralized(nets, optim, trajectories, &records, cfg),
        PolicyMode::PartiallyCentralized => {
            update_partial(nets, optim, trajectories, &records, cfg)
        }
    };
    match result {
        Ok(stats) => Ok(stats),
        Err(err) => {
            log::warn!("update aborted, keeping previous parameters: {err}");
            *nets = nets_snapshot;
            *optim = optim_snapshot;
            Ok(UpdateStats::default())
        }
    }
}

fn update_centralized(
    nets: &mut PolicyNets,
    optim: &mut OptimStates,
    trajectories: &[OptionTrajectory],
    records: &[&DecisionRecord],
    cfg: &TrainConfig,
) -> Result<UpdateStats> {
    let mut pairs = Vec::with_capacity(records.len());
    for traj in trajectories {
        let items: Vec<GaeInput> = traj
            .records
            .iter()
            .map(|r| GaeInput {
                segment_reward: r.segment_reward,
                gap: r.gap,
                value: r.value,
            })
            .collect();
        pairs.extend(compute_gae(
            &items,
            traj.bootstrap_value,
            cfg.gamma,
            cfg.lambda,
        ));
    }
    let batch = AdvantageBatch::from_pairs(pairs);
    let counts = nets.option_counts.clone();
    let mut stats = StatAccum::new();

    for epoch in 0..cfg.epochs {
        for chunk in chunk_indices(records.len(), cfg.minibatches) {
            let mut pgrad = Gradient::zeros(nets.policy[0].len());
            let mut vgrad = Gradient::zeros(nets.value[0].len());
            for &i in &chunk {
                let rec = records[i];
                let adv = batch.normalized[i];
                let ret = batch.returns[i];
                let logits = nets.policy[0].forward(&rec.joint_obs)?;
                let free_choice: Vec<usize> = rec
                    .decision
                    .deciding
                    .iter()
                    .map(|&a| rec.joint_option[a])
                    .collect();
                let (new_lp, dlp) =
                    conditional_log_prob_grad(&logits, &counts, &rec.fixed, &free_choice)?;
                let coef = surrogate_coef(cfg.algorithm, cfg.clip, new_lp, rec.log_prob, adv);
                let (ent, dent) = conditional_entropy_grad(&logits, &counts, &rec.fixed)?;
                let mut dlogits = vec![0.0; logits.len()];
                for j in 0..logits.len() {
                    dlogits[j] = -coef * dlp[j] - cfg.entropy_coef * dent[j];
                }
                pgrad.add_scaled(&nets.policy[0].backward(&rec.joint_obs, &dlogits)?, 1.0);
                let v = nets.value[0].forward(&rec.joint_obs)?[0];
                let dv = cfg.value_coef * 2.0 * (v - ret);
                vgrad.add_scaled(&nets.value[0].backward(&rec.joint_obs, &[dv])?, 1.0);
                if epoch == 0 {
                    stats.policy_loss +=
                        surrogate_loss(cfg.algorithm, cfg.clip, new_lp, rec.log_prob, adv);
                    stats.value_loss += (v - ret).powi(2);
                    stats.entropy += ent;
                    stats.log_prob += new_lp;
                    stats.policy_n += 1;
                    stats.value_n += 1;
                }
            }
            pgrad.scale(1.0 / chunk.len() as f64);
            vgrad.scale(1.0 / chunk.len() as f64);
            optimizer_step(&mut nets.policy[0], &pgrad, &mut optim.policy[0])?;
            optimizer_step(&mut nets.value[0], &vgrad, &mut optim.value[0])?;
        }
        if cfg.algorithm == Algorithm::VanillaPg {
            break;
        }
    }
    Ok(stats.finish())
}

fn update_partial(
    nets: &mut PolicyNets,
    optim: &mut OptimStates,
    trajectories: &[OptionTrajectory],
    records: &[&DecisionRecord],
    cfg: &TrainConfig,
) -> Result<UpdateStats> {
    let n = nets.num_agents();
    // Per-agent advantage streams from per-agent critics.
    let mut per_agent: Vec<AdvantageBatch> = Vec::with_capacity(n);
    for a in 0..n {
        let mut pairs = Vec::with_capacity(records.len());
        for traj in trajectories {
            let items: Vec<GaeInput> = traj
                .records
                .iter()
                .map(|r| GaeInput {
                    segment_reward: r.segment_reward,
                    gap: r.gap,
                    value: r.agent_values[a],
                })
                .collect();
            pairs.extend(compute_gae(
                &items,
                traj.agent_bootstrap[a],
                cfg.gamma,
                cfg.lambda,
            ));
        }
        per_agent.push(AdvantageBatch::from_pairs(pairs));
    }
    let counts = nets.option_counts.clone();
    let mut stats = StatAccum::new();

    for epoch in 0..cfg.epochs {
        for chunk in chunk_indices(records.len(), cfg.minibatches) {
            let mut pgrads: Vec<Gradient> =
                nets.policy.iter().map(|p| Gradient::zeros(p.len())).collect();
            let mut vgrads: Vec<Gradient> =
                nets.value.iter().map(|p| Gradient::zeros(p.len())).collect();
            // Records with a policy-gradient contribution per agent, for
            // correct per-agent averaging.
            let mut pcounts = vec![0usize; n];
            for &i in &chunk {
                let rec = records[i];
                for a in 0..n {
                    // Continuing agents: probability pinned at 1, no policy
                    // gradient (the critic still trains at every record).
                    let deciding = rec.decision.deciding.contains(&a);
                    if deciding {
                        let adv = per_agent[a].normalized[i];
                        let logits = nets.policy[a].forward(&rec.local_obs[a])?;
                        let (new_lp, dlp) = agent_marginal_log_prob_grad(
                            &logits,
                            &counts,
                            &rec.fixed,
                            a,
                            rec.joint_option[a],
                        )?;
                        let coef = surrogate_coef(
                            cfg.algorithm,
                            cfg.clip,
                            new_lp,
                            rec.agent_log_probs[a],
                            adv,
                        );
                        let (ent, dent) =
                            agent_marginal_entropy_grad(&logits, &counts, &rec.fixed, a)?;
                        let mut dlogits = vec![0.0; logits.len()];
                        for j in 0..logits.len() {
                            dlogits[j] = -coef * dlp[j] - cfg.entropy_coef * dent[j];
                        }
                        pgrads[a].add_scaled(
                            &nets.policy[a].backward(&rec.local_obs[a], &dlogits)?,
                            1.0,
                        );
                        pcounts[a] += 1;
                        if epoch == 0 {
                            stats.policy_loss += surrogate_loss(
                                cfg.algorithm,
                                cfg.clip,
                                new_lp,
                                rec.agent_log_probs[a],
                                adv,
                            );
                            stats.entropy += ent;
                            stats.log_prob += new_lp;
                            stats.policy_n += 1;
                        }
                    }
                    let ret = per_agent[a].returns[i];
                    let v = nets.value[a].forward(&rec.local_obs[a])?[0];
                    let dv = cfg.value_coef * 2.0 * (v - ret);
                    vgrads[a].add_scaled(&nets.value[a].backward(&rec.local_obs[a], &[dv])?, 1.0);
                    if epoch == 0 {
                        stats.value_loss += (v - ret).powi(2);
                        stats.value_n += 1;
                    }
                }
            }
            for a in 0..n {
                if pcounts[a] > 0 {
                    pgrads[a].scale(1.0 / pcounts[a] as f64);
                    optimizer_step(&mut nets.policy[a], &pgrads[a], &mut optim.policy[a])?;
                }
                vgrads[a].scale(1.0 / chunk.len() as f64);
                optimizer_step(&mut nets.value[a], &vgrads[a], &mut optim.value[a])?;
            }
        }
        if cfg.algorithm == Algorithm::VanillaPg {
            break;
        }
    }
    Ok(stats.finish())
}

/// Result of one training run.
pub struct TrainResult {
    pub nets: PolicyNets,
    pub optim: OptimStates,
    pub metrics: Vec<IterationMetrics>,
}

/// Builds fresh networks for an environment produced by `factory`.
pub fn init_nets<E: Env, F: Fn() -> E>(factory: &F, cfg: &TrainConfig) -> PolicyNets {
    let probe = factory();
    let local_dims: Vec<usize> = (0..probe.num_agents()).map(|a| probe.obs_dim(a)).collect();
    PolicyNets::new(
        cfg.mode,
        probe.option_counts(),
        probe.joint_obs_dim(),
        &local_dims,
        &cfg.hidden,
        cfg.seed,
    )
}

fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    seed.wrapping_add(1)
        .wrapping_add((iteration as u64).wrapping_mul(0x100000001B3))
}

/// Full training loop: collect, GAE, update, emit metrics; deterministic
/// given the config (including seed).
pub fn train<E, F>(factory: &F, cfg: &TrainConfig) -> Result<TrainResult>
where
    E: Env,
    F: Fn() -> E + Sync,
{
    cfg.validate()?;
    let mut nets = init_nets(factory, cfg);
    let mut optim = OptimStates::new(&nets, cfg.lr);
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut env_steps = 0usize;
    let mut decision_points = 0usize;
    for iteration in 0..cfg.iterations {
        let spec = BatchSpec {
            strategy: cfg.strategy,
            gamma: cfg.gamma,
            min_steps: cfg.steps_per_iter,
            workers: cfg.workers,
            base_seed: iteration_seed(cfg.seed, iteration),
        };
        let trajectories = collect_batch(factory, &nets, &spec).map_err(|e| {
            Error::Invalid {
                what: "training iteration",
                detail: format!("iteration {iteration} collection failed: {e}"),
            }
        })?;
        let batch_steps: usize = trajectories.iter().map(|t| t.low_level_steps).sum();
        let batch_decision_points: usize = trajectories.iter().map(|t| t.records.len()).sum();
        env_steps += batch_steps;
        decision_points += batch_decision_points;
        let mean_reward = trajectories.iter().map(|t| t.total_reward).sum::<f64>()
            / trajectories.len() as f64;
        let stats = ppo_update(&mut nets, &mut optim, &trajectories, cfg).map_err(|e| {
            Error::Invalid {
                what: "training iteration",
                detail: format!("iteration {iteration} update failed: {e}"),
            }
        })?;
        metrics.push(IterationMetrics {
            iteration,
            env_steps,
            decision_points,
            mean_reward,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            mean_log_prob: stats.mean_log_prob,
            batch_steps,
            batch_decision_points,
        });
    }
    Ok(TrainResult {
        nets,
        optim,
        metrics,
    })
}

/// Option tables for option-based strategies; one-step primitive options for
/// the end2end baseline.
pub fn action_level_for(strategy: ExecutionStrategy) -> crate::envs::ActionLevel {
    match strategy {
        ExecutionStrategy::End2End => crate::envs::ActionLevel::Primitive,
        _ => crate::envs::ActionLevel::Options,
    }
}

/// Runs `train` for whichever environment the config names.
pub fn train_env(env: &crate::envs::EnvConfig, cfg: &TrainConfig) -> Result<TrainResult> {
    use crate::envs::{EnvConfig, ToolDelivery, WaterFilling};
    let level = action_level_for(cfg.strategy);
    match env {
        EnvConfig::WaterFilling(p) => {
            let p = p.clone();
            train(&move || WaterFilling::new(p.clone(), level), cfg)
        }
        EnvConfig::ToolDelivery(p) => {
            let p = p.clone();
            train(&move || ToolDelivery::new(p.clone(), level), cfg)
        }
    }
}

/// Runs `evaluate` for whichever environment the config names.
pub fn evaluate_env<P: OptionPolicy>(
    env: &crate::envs::EnvConfig,
    policy: &P,
    strategy: ExecutionStrategy,
    episodes: usize,
    seed: u64,
    greedy: bool,
) -> Result<EvalResult> {
    use crate::envs::{EnvConfig, ToolDelivery, WaterFilling};
    let level = action_level_for(strategy);
    match env {
        EnvConfig::WaterFilling(p) => {
            let mut e = WaterFilling::new(p.clone(), level);
            evaluate(&mut e, policy, strategy, episodes, seed, greedy)
        }
        EnvConfig::ToolDelivery(p) => {
            let mut e = ToolDelivery::new(p.clone(), level);
            evaluate(&mut e, policy, strategy, episodes, seed, greedy)
        }
    }
}

/// Fresh networks sized for whichever environment the config names.
pub fn init_nets_env(env: &crate::envs::EnvConfig, cfg: &TrainConfig) -> PolicyNets {
    use crate::envs::{EnvConfig, ToolDelivery, WaterFilling};
    let level = action_level_for(cfg.strategy);
    match env {
        EnvConfig::WaterFilling(p) => {
            let p = p.clone();
            init_nets(&move || WaterFilling::new(p.clone(), level), cfg)
        }
        EnvConfig::ToolDelivery(p) => {
            let p = p.clone();
            init_nets(&move || ToolDelivery::new(p.clone(), level), cfg)
        }
    }
}

/// Frozen-policy evaluation over `episodes` episodes.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub mean: f64,
    pub std: f64,
    pub rewards: Vec<f64>,
}

pub fn evaluate<E: Env, P: OptionPolicy>(
    env: &mut E,
    policy: &P,
    strategy: ExecutionStrategy,
    episodes: usize,
    seed: u64,
    greedy: bool,
) -> Result<EvalResult> {
    let mut rewards = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let traj = collect_episode(
            env,
            policy,
            strategy,
            1.0 - 1e-9,
            seed.wrapping_add(ep as u64 * 65537),
            greedy,
        )?;
        rewards.push(traj.total_reward);
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
        / rewards.len().max(1) as f64;
    Ok(EvalResult {
        mean,
        std: var.sqrt(),
        rewards,
    })
}
