//! Command-line front end: expert training, demonstration generation,
//! imitation runs, evaluation, the verification battery, and metric
//! aggregation. Exit codes: 0 success, 2 configuration error, 3 runtime
//! fault, 4 verification failure.

mod config;
mod io;
mod verify;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{parse_input_mode, Method, RunConfig};
use ngt_core::demo::{self, DemonstrationSet, DemoMeta};
use ngt_core::env::TaskId;
use ngt_core::reward::InputMode;
use ngt_core::rng;
use ngt_core::trainer::{self, MetricsRecord};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Verification(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Verification(_) => EXIT_VERIFICATION,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Verification(m) => write!(f, "verification failure: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "ngt", about = "adversarial reward-learning imitation laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a SAC expert on the true task reward and write its
    /// checkpoint plus normalization references.
    TrainExpert {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 100)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 50)]
        eval_episodes: usize,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
    },
    /// Roll out an expert checkpoint deterministically and write a
    /// (possibly subsampled) demonstration file.
    GenDemos {
        #[arg(long)]
        task: String,
        #[arg(long)]
        expert: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, default_value_t = 20)]
        rate: usize,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long, default_value = "state_action")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the imitation loop (or a behavior-cloning baseline) for every
    /// configured seed.
    Imitate {
        /// key = value configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override individual keys, e.g. --set method=red_star.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Evaluate a policy checkpoint over deterministic episodes.
    Evaluate {
        #[arg(long)]
        task: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        refs: Option<PathBuf>,
    },
    /// Run the bound/oracle verification battery; exits nonzero if any
    /// check fails.
    Verify {
        /// Deliberately skip spectral normalization in the singular-value
        /// check, to demonstrate that the battery catches the violation.
        #[arg(long, default_value_t = false)]
        inject_sn_fault: bool,
        /// Optional CSV report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate per-seed metrics CSVs into mean/min/max curves.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// One metrics CSV per seed, all from the same cadence.
        inputs: Vec<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::TrainExpert { task, seed, steps, hidden, batch_size, eval_episodes, out_dir } => {
            cmd_train_expert(&task, seed, steps, hidden, batch_size, eval_episodes, &out_dir)
        }
        Cmd::GenDemos { task, expert, episodes, rate, offset, mode, seed, out } => {
            cmd_gen_demos(&task, &expert, episodes, rate, offset, &mode, seed, &out)
        }
        Cmd::Imitate { config, sets } => cmd_imitate(config.as_deref(), &sets),
        Cmd::Evaluate { task, checkpoint, episodes, seed, refs } => {
            cmd_evaluate(&task, &checkpoint, episodes, seed, refs.as_deref())
        }
        Cmd::Verify { inject_sn_fault, out } => cmd_verify(inject_sn_fault, out.as_deref()),
        Cmd::Report { out, inputs } => cmd_report(&out, &inputs),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

fn parse_task(s: &str) -> Result<TaskId, CliError> {
    TaskId::parse(s).map_err(|e| CliError::config(e.to_string()))
}

fn ensure_dir(p: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(p).map_err(|e| CliError::runtime(format!("mkdir {}: {e}", p.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_expert(
    task: &str,
    seed: u64,
    steps: u64,
    hidden: usize,
    batch_size: usize,
    eval_episodes: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    let task_id = parse_task(task)?;
    let mut cfg = demo::ExpertConfig::desk(steps);
    cfg.sac.hidden = hidden;
    cfg.sac.batch_size = batch_size;
    cfg.eval_episodes = eval_episodes;
    let expert = demo::train_expert(task_id, seed, cfg)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    ensure_dir(out_dir)?;
    let ckpt = out_dir.join(format!("expert_{task}_{seed}.ckpt"));
    io::save_mlp(
        &ckpt,
        &expert.agent.policy,
        json!({ "kind": "expert-policy", "task": task, "seed": seed, "steps": steps }),
    )?;
    let refs_path = out_dir.join(format!("refs_{task}.json"));
    io::save_refs(&refs_path, task, &expert.refs, eval_episodes)?;
    io::save_manifest(
        &out_dir.join(format!("manifest_expert_{task}_{seed}.json")),
        json!({
            "command": "train-expert",
            "task": task, "seed": seed, "steps": steps,
            "hidden": hidden, "batch_size": batch_size,
            "eval_episodes": eval_episodes,
        }),
        &[&ckpt, &refs_path],
    )?;
    println!(
        "expert {task} seed {seed}: expert_return {:.3} random_return {:.3} -> {}",
        expert.refs.expert_return,
        expert.refs.random_return,
        ckpt.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_demos(
    task: &str,
    expert: &Path,
    episodes: usize,
    rate: usize,
    offset: usize,
    mode: &str,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let task_id = parse_task(task)?;
    parse_input_mode(mode)?;
    let (policy, meta) = io::load_mlp(expert)?;
    if let Some(t) = meta.get("task").and_then(|v| v.as_str()) {
        if t != task {
            return Err(CliError::config(format!(
                "checkpoint was trained on '{t}', not '{task}'"
            )));
        }
    }
    let demos = demo::collect(&policy, task_id, episodes, seed);
    let sub = demo::subsample(&demos, rate, offset)
        .map_err(|e| CliError::config(e.to_string()))?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    let n_transitions: usize = sub.episodes.iter().map(|e| e.len()).sum();
    io::save_demos(
        out,
        &io::DemoFile {
            task: task.into(),
            expert_seed: seed,
            n_episodes: episodes,
            subsample_rate: sub.meta.subsample_rate,
            subsample_offset: sub.meta.subsample_offset,
            input_mode: mode.into(),
            episodes: sub.episodes,
        },
    )?;
    println!(
        "wrote {n_transitions} transitions ({episodes} episodes, rate {rate}, offset {offset}) to {}",
        out.display()
    );
    Ok(())
}

fn demos_from_file(d: io::DemoFile, task: TaskId, mode: InputMode) -> DemonstrationSet {
    DemonstrationSet {
        episodes: d.episodes,
        meta: DemoMeta {
            task,
            expert_seed: d.expert_seed,
            n_episodes: d.n_episodes,
            subsample_rate: d.subsample_rate,
            subsample_offset: d.subsample_offset,
            input_mode: mode,
        },
    }
}

fn cmd_imitate(config_path: Option<&Path>, sets: &[String]) -> Result<(), CliError> {
    let mut cfg = match config_path {
        Some(p) => RunConfig::load(p.to_str().unwrap_or_default())?,
        None => RunConfig::default(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got '{s}'")))?;
        cfg.apply(k.trim(), v.trim())?;
    }
    let task = cfg.task_id()?;
    if cfg.demos.is_empty() {
        return Err(CliError::config("no demos file configured (key 'demos')"));
    }
    let demo_file = io::load_demos(Path::new(&cfg.demos))?;
    if demo_file.task != cfg.task {
        return Err(CliError::config(format!(
            "demos were collected on '{}', config says '{}'",
            demo_file.task, cfg.task
        )));
    }
    if cfg.method == Method::Bc1 && demo_file.subsample_rate != 1 {
        return Err(CliError::config(
            "method bc1 requires an unsubsampled (rate 1) demonstration file",
        ));
    }
    let mode = cfg.input_mode();
    let demos = demos_from_file(demo_file, task, mode);
    let refs = if cfg.refs.is_empty() {
        None
    } else {
        let (rt, r) = io::load_refs(Path::new(&cfg.refs))?;
        if rt != cfg.task {
            return Err(CliError::config(format!(
                "refs manifest is for '{rt}', config says '{}'",
                cfg.task
            )));
        }
        Some(r)
    };
    let out_dir = PathBuf::from(&cfg.out_dir);
    ensure_dir(&out_dir)?;
    let method_name = serde_json::to_value(cfg.method)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_else(|| "ngt".into());
    let config_json = serde_json::to_value(&cfg).map_err(|e| CliError::runtime(e.to_string()))?;
    io::save_manifest(
        &out_dir.join(format!("manifest_{method_name}_{}.json", cfg.task)),
        config_json,
        &[Path::new(&cfg.demos)],
    )?;
    for &seed in &cfg.seeds {
        let metrics_path =
            out_dir.join(format!("metrics_{method_name}_{}_seed{seed}.csv", cfg.task));
        let rows = match cfg.method {
            Method::Bc | Method::Bc1 => run_bc_seed(&cfg, task, &demos, refs.as_ref(), seed)?,
            _ => {
                let out = trainer::imitate(
                    task,
                    &demos,
                    cfg.reward_config(task.state_dim(), task.action_dim()),
                    refs.as_ref(),
                    cfg.trainer_config(),
                    seed,
                )
                .map_err(|e| CliError::runtime(e.to_string()))?;
                let ckpt =
                    out_dir.join(format!("policy_{method_name}_{}_seed{seed}.ckpt", cfg.task));
                io::save_mlp(
                    &ckpt,
                    &out.agent.policy,
                    json!({ "kind": "imitator-policy", "task": cfg.task, "seed": seed, "method": method_name }),
                )?;
                println!(
                    "seed {seed}: final windowed return {:.4} -> {}",
                    out.final_return,
                    metrics_path.display()
                );
                out.metrics
            }
        };
        io::save_metrics(&metrics_path, &rows)?;
    }
    Ok(())
}

/// Behavior cloning: purely offline training, then one evaluation row.
fn run_bc_seed(
    cfg: &RunConfig,
    task: TaskId,
    demos: &DemonstrationSet,
    refs: Option<&ngt_core::env::NormalizationRefs>,
    seed: u64,
) -> Result<Vec<MetricsRecord>, CliError> {
    let mut r = rng::seeded(seed);
    let policy = demo::bc_train(demos, cfg.bc_iters, cfg.batch_size, cfg.bc_lr, cfg.hidden, &mut r);
    let rets = demo::policy_returns(&policy, task, seed.wrapping_add(900_000), cfg.eval_episodes);
    let (mean, _) = demo::mean_std(&rets);
    let norm = match refs {
        Some(rf) => ngt_core::env::normalized_return(mean, rf).unwrap_or(f64::NAN),
        None => f64::NAN,
    };
    println!("seed {seed}: bc eval return {mean:.4} (normalized {norm:.4})");
    Ok(vec![MetricsRecord {
        step: 0,
        eval_return_mean: mean,
        eval_return_norm: norm,
        reward_loss: f64::NAN,
        critic_loss: f64::NAN,
        actor_loss: f64::NAN,
        alpha: f64::NAN,
    }])
}

fn cmd_evaluate(
    task: &str,
    checkpoint: &Path,
    episodes: usize,
    seed: u64,
    refs: Option<&Path>,
) -> Result<(), CliError> {
    let task_id = parse_task(task)?;
    let (policy, _) = io::load_mlp(checkpoint)?;
    if policy.input_dim() != task_id.state_dim() {
        return Err(CliError::config(format!(
            "checkpoint expects {}-dim states, task '{task}' has {}",
            policy.input_dim(),
            task_id.state_dim()
        )));
    }
    let rets = demo::policy_returns(&policy, task_id, seed, episodes);
    let (mean, std) = demo::mean_std(&rets);
    match refs {
        Some(p) => {
            let (_, r) = io::load_refs(p)?;
            let norm = ngt_core::env::normalized_return(mean, &r)
                .map_err(|e| CliError::config(e.to_string()))?;
            println!("return {mean:.4} +- {std:.4} over {episodes} episodes (normalized {norm:.4})");
        }
        None => println!("return {mean:.4} +- {std:.4} over {episodes} episodes"),
    }
    Ok(())
}

fn cmd_verify(inject_sn_fault: bool, out: Option<&Path>) -> Result<(), CliError> {
    let checks = verify::run_battery(inject_sn_fault);
    let mut csv = String::from("check,pass,detail\n");
    let mut failed = 0;
    for c in &checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!("{status} {}: {}", c.name, c.detail);
        csv.push_str(&format!("{},{},\"{}\"\n", c.name, c.pass, c.detail.replace('"', "'")));
        if !c.pass {
            failed += 1;
        }
    }
    if let Some(p) = out {
        std::fs::write(p, csv).map_err(|e| CliError::runtime(e.to_string()))?;
    }
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} of {} checks failed", checks.len())));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn cmd_report(out: &Path, inputs: &[PathBuf]) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::config("report needs at least one metrics file"));
    }
    let runs: Vec<Vec<MetricsRecord>> =
        inputs.iter().map(|p| io::load_metrics(p)).collect::<Result<_, _>>()?;
    let n_rows = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    if n_rows == 0 {
        return Err(CliError::config("metrics files contain no rows"));
    }
    let mut csv = String::from("step,norm_mean,norm_min,norm_max,raw_mean,seeds\n");
    for i in 0..n_rows {
        let step = runs[0][i].step;
        let norms: Vec<f64> = runs.iter().map(|r| r[i].eval_return_norm).collect();
        let raws: Vec<f64> = runs.iter().map(|r| r[i].eval_return_mean).collect();
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw_mean = raws.iter().sum::<f64>() / raws.len() as f64;
        csv.push_str(&format!("{step},{mean},{lo},{hi},{raw_mean},{}\n", runs.len()));
    }
    std::fs::write(out, csv).map_err(|e| CliError::runtime(e.to_string()))?;
    println!("aggregated {} runs x {n_rows} rows -> {}", runs.len(), out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use config::input_mode_name;

    #[test]
    fn error_exit_codes_are_distinct() {
        assert_eq!(CliError::config("x").exit_code(), 2);
        assert_eq!(CliError::runtime("x").exit_code(), 3);
        assert_eq!(CliError::Verification("x".into()).exit_code(), 4);
    }

    #[test]
    fn input_mode_names_roundtrip() {
        for m in [InputMode::StateAction, InputMode::StateState, InputMode::StateOnly] {
            assert_eq!(parse_input_mode(input_mode_name(m)).unwrap(), m);
        }
    }
}
