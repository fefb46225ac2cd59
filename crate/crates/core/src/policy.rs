//! Joint categorical option distribution over the product option space of all
//! agents, with conditioning on the ongoing options of continuing agents.
//!
//! The distribution is stored as raw logits over the flattened product space.
//! Agent 0 is the slowest-varying axis: for counts `[c0, c1, c2]` the flat
//! index of cell `(i0, i1, i2)` is `i0 * c1 * c2 + i1 * c2 + i2`.
//!
//! Conditioning selects the joint cells consistent with the fixed options and
//! renormalizes by their total mass (the marginal of the fixed agents). All
//! log-probabilities are computed as differences of log-sum-exp over cell
//! subsets, never through normalized probabilities.

use std::collections::BTreeMap;

use rand::Rng;

use crate::{Error, Result};

/// Fixed option ids of continuing agents, keyed by agent index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConditionAssignment(BTreeMap<usize, usize>);

impl ConditionAssignment {
    pub fn new() -> Self {
        ConditionAssignment(BTreeMap::new())
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        ConditionAssignment(pairs.into_iter().collect())
    }

    pub fn fix(&mut self, agent: usize, option: usize) {
        self.0.insert(agent, option);
    }

    pub fn get(&self, agent: usize) -> Option<usize> {
        self.0.get(&agent).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().map(|(&a, &o)| (a, o))
    }

    fn validate(&self, counts: &[usize]) -> Result<()> {
        for (agent, option) in self.iter() {
            if agent >= counts.len() {
                return Err(Error::Invalid {
                    what: "condition assignment",
                    detail: format!("agent {agent} out of range ({} agents)", counts.len()),
                });
            }
            if option >= counts[agent] {
                return Err(Error::Invalid {
                    what: "condition assignment",
                    detail: format!(
                        "option {option} out of range for agent {agent} ({} options)",
                        counts[agent]
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Centralized vs per-agent policy parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PolicyMode {
    /// One joint net over the joint observation.
    Centralized,
    /// Per-agent nets over local observations, each outputting a joint
    /// distribution over own option x others' options.
    PartiallyCentralized,
}

fn strides(counts: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; counts.len()];
    for i in (0..counts.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * counts[i + 1];
    }
    s
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Probability distribution over the product option space of all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCategorical {
    logits: Vec<f64>,
    counts: Vec<usize>,
}

impl JointCategorical {
    /// Builds the joint distribution from a network output.
    pub fn from_logits(logits: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let total: usize = counts.iter().product();
        if logits.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                actual: logits.len(),
            });
        }
        Ok(JointCategorical { logits, counts })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn num_cells(&self) -> usize {
        self.logits.len()
    }

    pub fn flat_index(&self, choice: &[usize]) -> Result<usize> {
        if choice.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.counts.len(),
                actual: choice.len(),
            });
        }
        let s = strides(&self.counts);
        let mut idx = 0;
        for (a, &c) in choice.iter().enumerate() {
            if c >= self.counts[a] {
                return Err(Error::Invalid {
                    what: "choice",
                    detail: format!("option {c} out of range for agent {a}"),
                });
            }
            idx += c * s[a];
        }
        Ok(idx)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let s = strides(&self.counts);
        self.counts
            .iter()
            .enumerate()
            .map(|(a, &c)| (flat / s[a]) % c)
            .collect()
    }

    /// Softmax-normalized probabilities; sum to 1 within 1e-9.
    pub fn probs(&self) -> Vec<f64> {
        let lse = log_sum_exp(self.logits.iter().copied());
        self.logits.iter().map(|&l| (l - lse).exp()).collect()
    }

    /// Renormalized slice consistent with `fixed`, as a distribution over the
    /// free agents' product space (free agents in ascending index order).
    ///
    /// Errors if the fixed agents' marginal mass is below 1e-12: the policy
    /// assigned essentially no mass to an option currently executing, which
    /// means the trajectory was generated off-policy.
    pub fn condition(&self, fixed: &ConditionAssignment) -> Result<JointCategorical> {
        fixed.validate(&self.counts)?;
        let lse_all = log_sum_exp(self.logits.iter().copied());
        let slice = self.slice_cells(fixed);
        let lse_slice = log_sum_exp(slice.iter().map(|&c| self.logits[c]));
        let mass = (lse_slice - lse_all).exp();
        if mass < 1e-12 {
            return Err(Error::MeasureZero { mass });
        }
        let free_counts: Vec<usize> = (0..self.counts.len())
            .filter(|a| fixed.get(*a).is_none())
            .map(|a| self.counts[a])
            .collect();
        let logits = slice.iter().map(|&c| self.logits[c]).collect();
        JointCategorical::from_logits(logits, free_counts)
    }

    /// Sums out all axes not in `agents` (ascending index order preserved).
    pub fn marginal(&self, agents: &[usize]) -> Result<JointCategorical> {
        let mut keep: Vec<usize> = agents.to_vec();
        keep.sort_unstable();
        keep.dedup();
        for &a in &keep {
            if a >= self.counts.len() {
                return Err(Error::Invalid {
                    what: "marginal agents",
                    detail: format!("agent {a} out of range"),
                });
            }
        }
        let s = strides(&self.counts);
        let kept_counts: Vec<usize> = keep.iter().map(|&a| self.counts[a]).collect();
        let kept_strides = strides(&kept_counts);
        let total: usize = kept_counts.iter().product();
        let lse_all = log_sum_exp(self.logits.iter().copied());
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); total];
        for (flat, &logit) in self.logits.iter().enumerate() {
            let mut out = 0;
            for (j, &a) in keep.iter().enumerate() {
                out += ((flat / s[a]) % self.counts[a]) * kept_strides[j];
            }
            buckets[out].push(logit - lse_all);
        }
        let logits: Vec<f64> = buckets
            .iter()
            .map(|b| log_sum_exp(b.iter().copied()))
            .collect();
        JointCategorical::from_logits(logits, kept_counts)
    }

    /// Draws one joint option per agent; deterministic given the rng state.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let probs = self.probs();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = probs.len() - 1;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = i;
                break;
            }
        }
        self.multi_index(chosen)
    }

    /// Natural log of the cell's probability, via log-sum-exp.
    pub fn log_prob(&self, choice: &[usize]) -> Result<f64> {
        let idx = self.flat_index(choice)?;
        let lse = log_sum_exp(self.logits.iter().copied());
        let lp = self.logits[idx] - lse;
        if !lp.is_finite() {
            return Err(Error::NonFinite {
                context: "log probability (zero-probability cell)",
            });
        }
        Ok(lp)
    }

    pub fn entropy(&self) -> f64 {
        let lse = log_sum_exp(self.logits.iter().copied());
        self.logits
            .iter()
            .map(|&l| {
                let lp = l - lse;
                let p = lp.exp();
                if p > 0.0 {
                    -p * lp
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Flat indices of all cells consistent with `fixed`, in the order of the
    /// free agents' lexicographic product.
    fn slice_cells(&self, fixed: &ConditionAssignment) -> Vec<usize> {
        let s = strides(&self.counts);
        let free: Vec<usize> = (0..self.counts.len())
            .filter(|a| fixed.get(*a).is_none())
            .collect();
        let base: usize = fixed.iter().map(|(a, o)| o * s[a]).sum();
        let mut cells = Vec::new();
        let free_counts: Vec<usize> = free.iter().map(|&a| self.counts[a]).collect();
        let n: usize = free_counts.iter().product();
        for k in 0..n {
            let mut rem = k;
            let mut idx = base;
            for (j, &a) in free.iter().enumerate().rev() {
                let c = free_counts[j];
                idx += (rem % c) * s[a];
                rem /= c;
            }
            cells.push(idx);
        }
        cells
    }
}

/// Log-probability of the free agents' `choice` under the conditional
/// distribution, together with its gradient with respect to the full joint
/// logits. The gradient is the indicator of the chosen cell minus the
/// conditional probabilities over the slice (zero outside the slice).
pub fn conditional_log_prob_grad(
    logits: &[f64],
    counts: &[usize],
    fixed: &ConditionAssignment,
    free_choice: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let joint = JointCategorical::from_logits(logits.to_vec(), counts.to_vec())?;
    fixed.validate(counts)?;
    check_mass(&joint, fixed)?;
    let slice = joint.slice_cells(fixed);
    let free: Vec<usize> = (0..counts.len()).filter(|a| fixed.get(*a).is_none()).collect();
    if free_choice.len() != free.len() {
        return Err(Error::DimensionMismatch {
            expected: free.len(),
            actual: free_choice.len(),
        });
    }
    let mut full_choice = vec![0usize; counts.len()];
    for (a, o) in fixed.iter() {
        full_choice[a] = o;
    }
    for (j, &a) in free.iter().enumerate() {
        full_choice[a] = free_choice[j];
    }
    let cell = joint.flat_index(&full_choice)?;
    let lse_slice = log_sum_exp(slice.iter().map(|&c| logits[c]));
    let lp = logits[cell] - lse_slice;
    if !lp.is_finite() {
        return Err(Error::NonFinite {
            context: "conditional log probability",
        });
    }
    let mut grad = vec![0.0; logits.len()];
    for &c in &slice {
        grad[c] = -(logits[c] - lse_slice).exp();
    }
    grad[cell] += 1.0;
    Ok((lp, grad))
}

/// Entropy of the conditional distribution over the slice, with gradient with
/// respect to the full joint logits.
pub fn conditional_entropy_grad(
    logits: &[f64],
    counts: &[usize],
    fixed: &ConditionAssignment,
) -> Result<(f64, Vec<f64>)> {
    let joint = JointCategorical::from_logits(logits.to_vec(), counts.to_vec())?;
    fixed.validate(counts)?;
    check_mass(&joint, fixed)?;
    let slice = joint.slice_cells(fixed);
    let lse_slice = log_sum_exp(slice.iter().map(|&c| logits[c]));
    let mut entropy = 0.0;
    for &c in &slice {
        let lp = logits[c] - lse_slice;
        let p = lp.exp();
        if p > 0.0 {
            entropy -= p * lp;
        }
    }
    let mut grad = vec![0.0; logits.len()];
    for &c in &slice {
        let lp = logits[c] - lse_slice;
        let p = lp.exp();
        grad[c] = -p * (lp + entropy);
    }
    Ok((entropy, grad))
}

/// Log-probability that agent `agent` picks `choice` under its own joint head
/// conditioned on `fixed` (other deciding agents summed out), with gradient
/// with respect to the full joint logits.
pub fn agent_marginal_log_prob_grad(
    logits: &[f64],
    counts: &[usize],
    fixed: &ConditionAssignment,
    agent: usize,
    choice: usize,
) -> Result<(f64, Vec<f64>)> {
    if fixed.get(agent).is_some() {
        return Err(Error::Invalid {
            what: "agent marginal",
            detail: format!("agent {agent} is fixed by the condition assignment"),
        });
    }
    let joint = JointCategorical::from_logits(logits.to_vec(), counts.to_vec())?;
    fixed.validate(counts)?;
    check_mass(&joint, fixed)?;
    let denom_cells = joint.slice_cells(fixed);
    let mut with_choice = fixed.clone();
    with_choice.fix(agent, choice);
    with_choice.validate(counts)?;
    let num_cells = joint.slice_cells(&with_choice);
    let lse_num = log_sum_exp(num_cells.iter().map(|&c| logits[c]));
    let lse_den = log_sum_exp(denom_cells.iter().map(|&c| logits[c]));
    let lp = lse_num - lse_den;
    if !lp.is_finite() {
        return Err(Error::NonFinite {
            context: "agent marginal log probability",
        });
    }
    let mut grad = vec![0.0; logits.len()];
    for &c in &num_cells {
        grad[c] += (logits[c] - lse_num).exp();
    }
    for &c in &denom_cells {
        grad[c] -= (logits[c] - lse_den).exp();
    }
    Ok((lp, grad))
}

/// Entropy of agent `agent`'s conditional marginal, with gradient with respect
/// to the full joint logits.
pub fn agent_marginal_entropy_grad(
    logits: &[f64],
    counts: &[usize],
    fixed: &ConditionAssignment,
    agent: usize,
) -> Result<(f64, Vec<f64>)> {
    let joint = JointCategorical::from_logits(logits.to_vec(), counts.to_vec())?;
    fixed.validate(counts)?;
    check_mass(&joint, fixed)?;
    let slice = joint.slice_cells(fixed);
    let lse_slice = log_sum_exp(slice.iter().map(|&c| logits[c]));
    let s = strides(counts);
    // Group mass per own-option value of `agent`.
    let group_of = |cell: usize| (cell / s[agent]) % counts[agent];
    let mut group_logits: Vec<Vec<f64>> = vec![Vec::new(); counts[agent]];
    for &c in &slice {
        group_logits[group_of(c)].push(logits[c] - lse_slice);
    }
    let group_lp: Vec<f64> = group_logits
        .iter()
        .map(|g| log_sum_exp(g.iter().copied()))
        .collect();
    let mut entropy = 0.0;
    for &lp in &group_lp {
        let p = lp.exp();
        if p > 0.0 {
            entropy -= p * lp;
        }
    }
    let mut grad = vec![0.0; logits.len()];
    for &c in &slice {
        let q = (logits[c] - lse_slice).exp();
        let glp = group_lp[group_of(c)];
        if glp.is_finite() {
            grad[c] = -q * (glp + entropy);
        }
    }
    Ok((entropy, grad))
}

/// Option-selection probability of one agent in partially centralized mode:
/// exactly 1 for a continuing agent (no gradient contribution), otherwise the
/// conditional marginal from the agent's own joint head.
pub fn partially_centralized_prob(
    deciding: bool,
    logits: &[f64],
    counts: &[usize],
    fixed: &ConditionAssignment,
    agent: usize,
    choice: usize,
) -> Result<f64> {
    if !deciding {
        return Ok(1.0);
    }
    let (lp, _) = agent_marginal_log_prob_grad(logits, counts, fixed, agent, choice)?;
    Ok(lp.exp())
}

fn check_mass(joint: &JointCategorical, fixed: &ConditionAssignment) -> Result<()> {
    if fixed.is_empty() {
        return Ok(());
    }
    let lse_all = log_sum_exp(joint.logits.iter().copied());
    let slice = joint.slice_cells(fixed);
    let lse_slice = log_sum_exp(slice.iter().map(|&c| joint.logits[c]));
    let mass = (lse_slice - lse_all).exp();
    if mass < 1e-12 {
        return Err(Error::MeasureZero { mass });
    }
    Ok(())
}
