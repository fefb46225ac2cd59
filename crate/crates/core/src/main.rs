//! Command-line entry point: `train`, `eval`, and `compare`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use async_opt_marl::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use async_opt_marl::config::{ConfigBuilder, RunConfig};
use async_opt_marl::envs::{EnvConfig, ToolDelivery, WaterFilling};
use async_opt_marl::trainer::{
    action_level_for, evaluate_env, train_env, write_metrics_csv, IterationMetrics, TrainConfig,
};
use async_opt_marl::{Env, Error, ExecutionStrategy, PolicyMode, Result};

#[derive(Parser)]
#[command(
    name = "async-opt-marl",
    about = "Multi-agent option-based policy gradient training over asynchronous execution strategies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one strategy, one or more seeds; writes metrics CSVs and checkpoints.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint.
    Eval(EvalArgs),
    /// Train every configured strategy x seed cell and aggregate a long-format CSV.
    Compare(TrainArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Optional key=value config file; flags override file values.
    config: Option<PathBuf>,
    /// Environment id: water_filling or tool_delivery.
    #[arg(long)]
    env: Option<String>,
    /// Execution strategy: async, sync_cut, sync_wait or end2end.
    #[arg(long)]
    strategy: Option<String>,
    /// Policy mode: centralized or partially_centralized.
    #[arg(long)]
    mode: Option<String>,
    /// Seed count (N means seeds 0..N) or comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    steps_per_iter: Option<usize>,
    /// Output root directory (default: $ASYNC_OPT_MARL_OUT or ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Argmax of the conditional distribution instead of sampling.
    #[arg(long)]
    greedy: bool,
    /// One-line JSON output instead of text.
    #[arg(long)]
    json: bool,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Compare(args) => cmd_compare(&args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

fn resolve_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut builder = ConfigBuilder::new();
    if let Some(path) = &args.config {
        builder.parse_file(path)?;
    }
    if let Some(v) = &args.env {
        builder.set("run.env", v)?;
    }
    if let Some(v) = &args.strategy {
        builder.set("train.strategy", v)?;
    }
    if let Some(v) = &args.mode {
        builder.set("train.mode", v)?;
    }
    if let Some(v) = &args.seeds {
        builder.set("run.seeds", v)?;
    }
    if let Some(v) = args.iterations {
        builder.set("train.iterations", &v.to_string())?;
    }
    if let Some(v) = args.steps_per_iter {
        builder.set("train.steps_per_iter", &v.to_string())?;
    }
    if let Some(v) = &args.out {
        builder.set("run.out", &v.display().to_string())?;
    }
    builder.build()
}

/// Output root: flag/config value, then ASYNC_OPT_MARL_OUT, then ./runs.
fn output_root(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| {
        std::env::var_os("ASYNC_OPT_MARL_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
    })
}

fn mode_name(mode: PolicyMode) -> &'static str {
    match mode {
        PolicyMode::Centralized => "centralized",
        PolicyMode::PartiallyCentralized => "partially_centralized",
    }
}

fn algorithm_name(a: async_opt_marl::trainer::Algorithm) -> &'static str {
    match a {
        async_opt_marl::trainer::Algorithm::PpoClip => "ppo",
        async_opt_marl::trainer::Algorithm::VanillaPg => "vanilla_pg",
    }
}

/// Re-parseable snapshot of one run's fully resolved configuration.
fn config_snapshot(env: &EnvConfig, train: &TrainConfig, seed: u64) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!("run.env = {}\n", env.id()));
    // Trailing comma: an explicit one-seed list, not a seed count.
    out.push_str(&format!("run.seeds = {seed},\n"));
    out.push_str(&format!("train.strategy = {}\n", train.strategy.name()));
    out.push_str(&format!("train.mode = {}\n", mode_name(train.mode)));
    out.push_str(&format!(
        "train.algorithm = {}\n",
        algorithm_name(train.algorithm)
    ));
    out.push_str(&format!("train.gamma = {}\n", train.gamma));
    out.push_str(&format!("train.lambda = {}\n", train.lambda));
    out.push_str(&format!("train.clip = {}\n", train.clip));
    out.push_str(&format!("train.epochs = {}\n", train.epochs));
    out.push_str(&format!("train.minibatches = {}\n", train.minibatches));
    out.push_str(&format!("train.entropy_coef = {}\n", train.entropy_coef));
    out.push_str(&format!("train.value_coef = {}\n", train.value_coef));
    out.push_str(&format!("train.lr = {}\n", train.lr));
    let hidden: Vec<String> = train.hidden.iter().map(|h| h.to_string()).collect();
    out.push_str(&format!("train.hidden = {}\n", hidden.join(",")));
    out.push_str(&format!("train.steps_per_iter = {}\n", train.steps_per_iter));
    out.push_str(&format!("train.iterations = {}\n", train.iterations));
    out.push_str(&format!("train.workers = {}\n", train.workers));
    let env_value = serde_json::to_value(env)?;
    if let serde_json::Value::Object(map) = env_value {
        for (key, value) in map {
            if key == "id" {
                continue;
            }
            out.push_str(&format!("env.{key} = {}\n", serde_json::to_string(&value)?));
        }
    }
    Ok(out)
}

struct SeedRun {
    final_reward: f64,
    metrics: Vec<IterationMetrics>,
}

/// Trains one seed and persists its run directory (config snapshot,
/// metrics.csv, checkpoint.json).
fn run_one_seed(env: &EnvConfig, train_cfg: &TrainConfig, dir: &Path) -> Result<SeedRun> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("config.txt"),
        config_snapshot(env, train_cfg, train_cfg.seed)?,
    )?;
    let result = train_env(env, train_cfg)?;
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &result.metrics)?;
    std::fs::write(dir.join("metrics.csv"), &csv)?;
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        seed: train_cfg.seed,
        iteration: result.metrics.len(),
        strategy: train_cfg.strategy,
        env: env.clone(),
        train: train_cfg.clone(),
        nets: result.nets,
        optim: result.optim,
    };
    ckpt.save(&dir.join("checkpoint.json"))?;
    let final_reward = result
        .metrics
        .last()
        .map(|m| m.mean_reward)
        .unwrap_or(f64::NAN);
    Ok(SeedRun {
        final_reward,
        metrics: result.metrics,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let root = output_root(&cfg);
    let mut finals = Vec::new();
    for &seed in &cfg.seeds {
        let mut tc = cfg.train.clone();
        tc.seed = seed;
        let dir = root.join(format!(
            "{}_{}_{}_seed{}",
            cfg.env.id(),
            tc.strategy.name(),
            mode_name(tc.mode),
            seed
        ));
        let run = run_one_seed(&cfg.env, &tc, &dir)?;
        println!(
            "seed {}: final mean reward {:.3} ({} iterations) -> {}",
            seed,
            run.final_reward,
            run.metrics.len(),
            dir.display()
        );
        if run.final_reward.is_finite() {
            finals.push(run.final_reward);
        }
    }
    let (mean, std) = mean_std(&finals);
    println!(
        "final reward across {} seed(s): {:.3} \u{00b1} {:.3}",
        cfg.seeds.len(),
        mean,
        std
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (joint_dim, local_dims, counts) = env_dims(&ckpt.env, ckpt.strategy);
    ckpt.validate_dims(joint_dim, &local_dims, &counts)?;
    let result = evaluate_env(
        &ckpt.env,
        &ckpt.nets,
        ckpt.strategy,
        args.episodes,
        args.seed,
        args.greedy,
    )?;
    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "mean": result.mean,
                "std": result.std,
                "episodes": args.episodes,
                "greedy": args.greedy,
                "seed": args.seed,
            })
        );
    } else {
        println!(
            "mean reward over {} episode(s): {:.3} \u{00b1} {:.3}",
            args.episodes, result.mean, result.std
        );
    }
    Ok(())
}

fn env_dims(env: &EnvConfig, strategy: ExecutionStrategy) -> (usize, Vec<usize>, Vec<usize>) {
    let level = action_level_for(strategy);
    match env {
        EnvConfig::WaterFilling(p) => {
            let e = WaterFilling::new(p.clone(), level);
            dims_of(&e)
        }
        EnvConfig::ToolDelivery(p) => {
            let e = ToolDelivery::new(p.clone(), level);
            dims_of(&e)
        }
    }
}

fn dims_of<E: Env>(env: &E) -> (usize, Vec<usize>, Vec<usize>) {
    let local: Vec<usize> = (0..env.num_agents()).map(|a| env.obs_dim(a)).collect();
    (env.joint_obs_dim(), local, env.option_counts())
}

fn cmd_compare(args: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let root = output_root(&cfg);
    std::fs::create_dir_all(&root)?;
    let mut summary_rows = Vec::new();
    let mut failures = Vec::new();
    for &mode in &cfg.compare_modes {
        // Long-format CSV per mode, 4 strategy curves side by side.
        let mut long = String::from("strategy,seed,iteration,env_steps,mean_reward\n");
        for &strategy in &cfg.compare_strategies {
            let mut finals = Vec::new();
            for &seed in &cfg.seeds {
                let mut tc = cfg.train.clone();
                tc.strategy = strategy;
                tc.mode = mode;
                tc.seed = seed;
                let dir = root.join(format!(
                    "{}_{}_{}_seed{}",
                    cfg.env.id(),
                    strategy.name(),
                    mode_name(mode),
                    seed
                ));
                match run_one_seed(&cfg.env, &tc, &dir) {
                    Ok(run) => {
                        for m in &run.metrics {
                            long.push_str(&format!(
                                "{},{},{},{},{:.6}\n",
                                strategy.name(),
                                seed,
                                m.iteration,
                                m.env_steps,
                                m.mean_reward
                            ));
                        }
                        if run.final_reward.is_finite() {
                            finals.push(run.final_reward);
                        }
                        println!(
                            "{} {} seed {}: final {:.3}",
                            mode_name(mode),
                            strategy.name(),
                            seed,
                            run.final_reward
                        );
                    }
                    Err(err) => {
                        eprintln!(
                            "cell failed ({} {} seed {}): {err}",
                            mode_name(mode),
                            strategy.name(),
                            seed
                        );
                        failures.push(format!(
                            "{},{},{}: {err}",
                            mode_name(mode),
                            strategy.name(),
                            seed
                        ));
                    }
                }
            }
            let (mean, std) = mean_std(&finals);
            summary_rows.push(format!(
                "{},{},{:.6},{:.6}",
                mode_name(mode),
                strategy.name(),
                mean,
                std
            ));
        }
        let name = if cfg.compare_modes.len() == 1 {
            "compare.csv".to_string()
        } else {
            format!("compare_{}.csv", mode_name(mode))
        };
        std::fs::write(root.join(name), long)?;
    }
    let mut summary = String::from("mode,strategy,mean_final_reward,std_final_reward\n");
    for row in &summary_rows {
        summary.push_str(row);
        summary.push('\n');
    }
    std::fs::write(root.join("summary.csv"), &summary)?;
    print!("{summary}");
    if !failures.is_empty() {
        std::fs::write(root.join("failures.txt"), failures.join("\n") + "\n")?;
        return Err(Error::Invalid {
            what: "compare",
            detail: format!("{} cell(s) failed; see failures.txt", failures.len()),
        });
    }
    Ok(())
}
