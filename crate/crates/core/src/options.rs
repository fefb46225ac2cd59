//! Option definitions, low-level execution of their scripted inner policies,
//! termination detection, and the execution strategies that decide which
//! agents pick new options at a given low-level step.

use std::sync::Arc;

use crate::envs::Env;

/// How agents with options of varying lengths are scheduled to re-decide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ExecutionStrategy {
    /// Only agents whose option terminated pick a new one; the rest continue
    /// uninterrupted.
    AsyncContinue,
    /// As soon as any agent's option terminates, everyone's option is cut and
    /// all agents re-decide together.
    SyncCut,
    /// Agents that finish idle until every option has terminated, then all
    /// re-decide together.
    SyncWait,
    /// Primitive actions: every agent decides at every low-level step.
    End2End,
}

impl ExecutionStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "async" | "async_continue" => Some(ExecutionStrategy::AsyncContinue),
            "sync_cut" => Some(ExecutionStrategy::SyncCut),
            "sync_wait" => Some(ExecutionStrategy::SyncWait),
            "end2end" => Some(ExecutionStrategy::End2End),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExecutionStrategy::AsyncContinue => "async",
            ExecutionStrategy::SyncCut => "sync_cut",
            ExecutionStrategy::SyncWait => "sync_wait",
            ExecutionStrategy::End2End => "end2end",
        }
    }
}

type StatePredicate<S> = Arc<dyn Fn(&S) -> bool + Send + Sync>;
type GoalPredicate<S> = Arc<dyn Fn(&S, u32) -> bool + Send + Sync>;
type InnerPolicy<S> = Arc<dyn Fn(&S) -> usize + Send + Sync>;

/// One option: initiation predicate, termination predicate, scripted inner
/// policy, and a hard duration cap that guarantees termination.
#[derive(Clone)]
pub struct OptionDef<S> {
    pub id: usize,
    pub name: String,
    pub initiation: StatePredicate<S>,
    pub termination: GoalPredicate<S>,
    pub inner_policy: InnerPolicy<S>,
    pub max_duration: u32,
}

impl<S> std::fmt::Debug for OptionDef<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OptionDef")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("max_duration", &self.max_duration)
            .finish()
    }
}

impl<S> OptionDef<S> {
    /// Option that always emits `action` and lasts exactly one low-level step.
    pub fn one_step(id: usize, name: &str, action: usize) -> Self {
        OptionDef {
            id,
            name: name.to_string(),
            initiation: Arc::new(|_| true),
            termination: Arc::new(|_, progress| progress >= 1),
            inner_policy: Arc::new(move |_| action),
            max_duration: 1,
        }
    }
}

/// An option currently being executed by one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OngoingOption {
    pub option_id: usize,
    /// Low-level step at which the option started.
    pub start_step: usize,
    /// Low-level steps executed so far.
    pub progress: u32,
}

impl OngoingOption {
    pub fn start(option_id: usize, step: usize) -> Self {
        OngoingOption {
            option_id,
            start_step: step,
            progress: 0,
        }
    }
}

/// Partition of the agents at one decision point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionSet {
    pub step: usize,
    /// Agents choosing a new option (U_k).
    pub deciding: Vec<usize>,
    /// Agents continuing their ongoing option.
    pub continuing: Vec<usize>,
}

/// Applies the execution strategy to the per-agent termination flags evaluated
/// on the post-step state. Returns `None` when no decision point occurs.
pub fn compute_decision_set(
    strategy: ExecutionStrategy,
    terminated: &[bool],
    step: usize,
) -> Option<DecisionSet> {
    let all: Vec<usize> = (0..terminated.len()).collect();
    match strategy {
        ExecutionStrategy::End2End => Some(DecisionSet {
            step,
            deciding: all,
            continuing: Vec::new(),
        }),
        ExecutionStrategy::AsyncContinue => {
            let deciding: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&a| terminated[a])
                .collect();
            if deciding.is_empty() {
                None
            } else {
                let continuing = all.into_iter().filter(|&a| !terminated[a]).collect();
                Some(DecisionSet {
                    step,
                    deciding,
                    continuing,
                })
            }
        }
        ExecutionStrategy::SyncCut => {
            if terminated.iter().any(|&t| t) {
                Some(DecisionSet {
                    step,
                    deciding: all,
                    continuing: Vec::new(),
                })
            } else {
                None
            }
        }
        ExecutionStrategy::SyncWait => {
            if terminated.iter().all(|&t| t) {
                Some(DecisionSet {
                    step,
                    deciding: all,
                    continuing: Vec::new(),
                })
            } else {
                None
            }
        }
    }
}

/// True iff the option's goal predicate holds on the local state or the
/// duration cap was reached.
pub fn check_termination<S>(def: &OptionDef<S>, local: &S, ongoing: &OngoingOption) -> bool {
    if (def.termination)(local, ongoing.progress) {
        return true;
    }
    if ongoing.progress >= def.max_duration {
        log::warn!(
            "option '{}' hit its duration cap ({}) without reaching its goal; forcing termination",
            def.name,
            def.max_duration
        );
        return true;
    }
    false
}

/// Executes one low-level step: every non-waiting agent acts according to its
/// ongoing option's inner policy, waiting agents emit a no-op. Returns the
/// primitive actions taken, the shared step reward, and the done flag.
pub fn advance_low_level<E: Env>(
    env: &mut E,
    ongoing: &mut [OngoingOption],
    waiting: &[bool],
) -> (Vec<usize>, f64, bool) {
    let n = env.num_agents();
    debug_assert_eq!(ongoing.len(), n);
    let mut actions = Vec::with_capacity(n);
    for agent in 0..n {
        if waiting[agent] {
            actions.push(env.noop_action(agent));
        } else {
            let local = env.local_state(agent);
            let def = &env.options(agent)[ongoing[agent].option_id];
            actions.push((def.inner_policy)(&local));
        }
    }
    let (reward, done) = env.step(&actions);
    for (agent, oo) in ongoing.iter_mut().enumerate() {
        if !waiting[agent] {
            oo.progress += 1;
        }
    }
    (actions, reward, done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn async_continue_partial_termination() {
        let ds = compute_decision_set(ExecutionStrategy::AsyncContinue, &[true, false], 5)
            .unwrap();
        assert_eq!(ds.deciding, vec![0]);
        assert_eq!(ds.continuing, vec![1]);
    }

    #[test]
    fn async_continue_no_termination_is_no_decision() {
        assert!(
            compute_decision_set(ExecutionStrategy::AsyncContinue, &[false, false], 3).is_none()
        );
    }

    #[test]
    fn sync_wait_requires_all_terminated() {
        assert!(compute_decision_set(ExecutionStrategy::SyncWait, &[true, false], 2).is_none());
        let ds = compute_decision_set(ExecutionStrategy::SyncWait, &[true, true], 2).unwrap();
        assert_eq!(ds.deciding, vec![0, 1]);
        assert!(ds.continuing.is_empty());
    }

    #[test]
    fn sync_cut_interrupts_everyone() {
        let ds = compute_decision_set(ExecutionStrategy::SyncCut, &[false, true], 4).unwrap();
        assert_eq!(ds.deciding, vec![0, 1]);
        assert!(ds.continuing.is_empty());
    }

    #[test]
    fn end2end_all_decide_every_step() {
        let ds = compute_decision_set(ExecutionStrategy::End2End, &[false, false, false], 0)
            .unwrap();
        assert_eq!(ds.deciding, vec![0, 1, 2]);
    }

    #[test]
    fn decision_set_partitions_agents() {
        for strategy in [
            ExecutionStrategy::AsyncContinue,
            ExecutionStrategy::SyncCut,
            ExecutionStrategy::SyncWait,
            ExecutionStrategy::End2End,
        ] {
            for flags in [
                [true, false, true],
                [true, true, true],
                [false, true, false],
            ] {
                if let Some(ds) = compute_decision_set(strategy, &flags, 1) {
                    let mut union = ds.deciding.clone();
                    union.extend(&ds.continuing);
                    union.sort_unstable();
                    assert_eq!(union, vec![0, 1, 2]);
                    assert!(!ds.deciding.is_empty());
                }
            }
        }
    }

    #[test]
    fn termination_by_goal_and_by_cap() {
        // Goal: local state value reaches 3.
        let def: OptionDef<i32> = OptionDef {
            id: 0,
            name: "reach3".into(),
            initiation: Arc::new(|_| true),
            termination: Arc::new(|s, _| *s >= 3),
            inner_policy: Arc::new(|_| 0),
            max_duration: 5,
        };
        let mut oo = OngoingOption::start(0, 0);
        assert!(!check_termination(&def, &1, &oo));
        assert!(check_termination(&def, &3, &oo));
        oo.progress = 5;
        assert!(check_termination(&def, &1, &oo));
    }

    #[test]
    fn one_step_option_terminates_after_one_step() {
        let def: OptionDef<()> = OptionDef::one_step(2, "Up", 0);
        let mut oo = OngoingOption::start(2, 0);
        assert!(!check_termination(&def, &(), &oo));
        oo.progress = 1;
        assert!(check_termination(&def, &(), &oo));
    }
}
