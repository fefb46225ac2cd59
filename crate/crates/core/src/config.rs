//! Flat key=value run configuration with section prefixes (`run.`, `train.`,
//! `env.`, `compare.`). Unknown keys are rejected; CLI flags apply the same
//! setters after the file, so they override file values.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::envs::EnvConfig;
use crate::options::ExecutionStrategy;
use crate::policy::PolicyMode;
use crate::trainer::{Algorithm, TrainConfig};
use crate::{Error, Result};

/// Fully resolved configuration for one command invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub compare_strategies: Vec<ExecutionStrategy>,
    pub compare_modes: Vec<PolicyMode>,
    pub eval_episodes: usize,
}

/// Accumulates file lines and flag overrides, then resolves defaults.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    env_id: Option<String>,
    env_overrides: BTreeMap<String, String>,
    train: TrainConfig,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    compare_strategies: Option<Vec<ExecutionStrategy>>,
    compare_modes: Option<Vec<PolicyMode>>,
    eval_episodes: Option<usize>,
}

fn bad_value(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("invalid value '{value}' for {key}: expected {want}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<T> {
    value.parse().map_err(|_| bad_value(key, value, want))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| bad_value(key, value, want)))
        .collect()
}

impl ConfigBuilder {
    pub fn new() -> Self {
        ConfigBuilder::default()
    }

    pub fn parse_file(&mut self, path: &std::path::Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.parse_str(&text)
    }

    pub fn parse_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies one key=value pair; later calls override earlier ones.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(rest) = key.strip_prefix("env.") {
            if rest.is_empty() {
                return Err(Error::Config("empty env key".into()));
            }
            self.env_overrides.insert(rest.to_string(), value.to_string());
            return Ok(());
        }
        match key {
            "run.env" => {
                if EnvConfig::default_for(value).is_none() {
                    return Err(bad_value(key, value, "water_filling or tool_delivery"));
                }
                self.env_id = Some(value.to_string());
            }
            // A bare count N means seeds 0..N; a comma list is explicit.
            "run.seeds" => self.seeds = Some(parse_seeds(value)?),
            "run.out" => self.out = Some(PathBuf::from(value)),
            "run.episodes" => {
                self.eval_episodes = Some(parse_num(key, value, "a positive integer")?)
            }
            "train.strategy" => {
                self.train.strategy = ExecutionStrategy::parse(value)
                    .ok_or_else(|| bad_value(key, value, "async, sync_cut, sync_wait or end2end"))?
            }
            "train.mode" => {
                self.train.mode = parse_mode(value)
                    .ok_or_else(|| bad_value(key, value, "centralized or partially_centralized"))?
            }
            "train.algorithm" => {
                self.train.algorithm = match value {
                    "ppo" | "ppo_clip" => Algorithm::PpoClip,
                    "vanilla" | "vanilla_pg" => Algorithm::VanillaPg,
                    _ => return Err(bad_value(key, value, "ppo or vanilla_pg")),
                }
            }
            "train.gamma" => self.train.gamma = parse_num(key, value, "a number")?,
            "train.lambda" => self.train.lambda = parse_num(key, value, "a number")?,
            "train.clip" => self.train.clip = parse_num(key, value, "a number")?,
            "train.epochs" => self.train.epochs = parse_num(key, value, "a positive integer")?,
            "train.minibatches" => {
                self.train.minibatches = parse_num(key, value, "a positive integer")?
            }
            "train.entropy_coef" => self.train.entropy_coef = parse_num(key, value, "a number")?,
            "train.value_coef" => self.train.value_coef = parse_num(key, value, "a number")?,
            "train.lr" => self.train.lr = parse_num(key, value, "a number")?,
            "train.hidden" => {
                self.train.hidden = parse_list(key, value, "comma-separated layer sizes")?
            }
            "train.steps_per_iter" => {
                self.train.steps_per_iter = parse_num(key, value, "a positive integer")?
            }
            "train.iterations" => {
                self.train.iterations = parse_num(key, value, "a non-negative integer")?
            }
            "train.workers" => self.train.workers = parse_num(key, value, "a positive integer")?,
            "compare.strategies" => {
                let names: Vec<&str> = value.split(',').map(str::trim).collect();
                let mut out = Vec::new();
                for name in names {
                    out.push(ExecutionStrategy::parse(name).ok_or_else(|| {
                        bad_value(key, name, "async, sync_cut, sync_wait or end2end")
                    })?);
                }
                self.compare_strategies = Some(out);
            }
            "compare.modes" => {
                let names: Vec<&str> = value.split(',').map(str::trim).collect();
                let mut out = Vec::new();
                for name in names {
                    out.push(parse_mode(name).ok_or_else(|| {
                        bad_value(key, name, "centralized or partially_centralized")
                    })?);
                }
                self.compare_modes = Some(out);
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn env_id(&self) -> Option<&str> {
        self.env_id.as_deref()
    }

    pub fn build(self) -> Result<RunConfig> {
        let env_id = self
            .env_id
            .ok_or_else(|| Error::Config("missing environment (set run.env or --env)".into()))?;
        let env = build_env(&env_id, &self.env_overrides)?;
        self.train.validate()?;
        Ok(RunConfig {
            env,
            train: self.train,
            seeds: self.seeds.unwrap_or_else(|| vec![0]),
            out: self.out,
            compare_strategies: self.compare_strategies.unwrap_or_else(|| {
                vec![
                    ExecutionStrategy::AsyncContinue,
                    ExecutionStrategy::SyncCut,
                    ExecutionStrategy::SyncWait,
                    ExecutionStrategy::End2End,
                ]
            }),
            compare_modes: self
                .compare_modes
                .unwrap_or_else(|| vec![PolicyMode::Centralized]),
            eval_episodes: self.eval_episodes.unwrap_or(10),
        })
    }
}

fn parse_mode(value: &str) -> Option<PolicyMode> {
    match value {
        "centralized" => Some(PolicyMode::Centralized),
        "partially_centralized" | "partial" => Some(PolicyMode::PartiallyCentralized),
        _ => None,
    }
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if value.contains(',') {
        // A trailing comma makes a one-element list explicit ("7," is seed 7,
        // while bare "7" is a count).
        let items: Vec<&str> = value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(Error::Config("run.seeds must be at least 1".into()));
        }
        items
            .iter()
            .map(|s| parse_num("run.seeds", s, "comma-separated seeds"))
            .collect()
    } else {
        let count: u64 = parse_num("run.seeds", value, "a seed count or comma list")?;
        if count == 0 {
            return Err(Error::Config("run.seeds must be at least 1".into()));
        }
        Ok((0..count).collect())
    }
}

/// Merges `env.*` overrides into the environment's default parameters via
/// JSON, so unknown parameter names are rejected by the parameter structs.
fn build_env(env_id: &str, overrides: &BTreeMap<String, String>) -> Result<EnvConfig> {
    let base = EnvConfig::default_for(env_id)
        .ok_or_else(|| Error::Config(format!("unknown environment '{env_id}'")))?;
    if overrides.is_empty() {
        return Ok(base);
    }
    let mut value = serde_json::to_value(&base)?;
    let obj = value
        .as_object_mut()
        .expect("env config serializes to an object");
    for (key, raw) in overrides {
        // Accept JSON literals (numbers, arrays, booleans); fall back to string.
        let parsed = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
        obj.insert(key.clone(), parsed);
    }
    serde_json::from_value(value).map_err(|e| {
        Error::Config(format!("invalid env parameter for '{env_id}': {e}"))
    })
}
