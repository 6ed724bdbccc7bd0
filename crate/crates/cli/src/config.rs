//! Run configuration: plain-text `key = value` files with optional
//! `[section]` headers (cosmetic), every key defaulted from the reference
//! hyper-parameter table, unknown keys rejected, CLI `--set` overrides
//! applied last.

use serde::Serialize;

use ngt_core::loss::HlgConfig;
use ngt_core::reward::{InputMode, PairingLoss, RewardConfig, RewardVariant};
use ngt_core::sac::SacConfig;
use ngt_core::trainer::TrainerConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ngt,
    RedStar,
    WPotential,
    Bc,
    Bc1,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method, CliError> {
        match s {
            "ngt" => Ok(Method::Ngt),
            "red_star" => Ok(Method::RedStar),
            "w_potential" => Ok(Method::WPotential),
            "bc" => Ok(Method::Bc),
            "bc1" => Ok(Method::Bc1),
            other => Err(CliError::config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    Huber,
    SoftmaxMse,
    Hlg,
}

impl Pairing {
    pub fn parse(s: &str) -> Result<Pairing, CliError> {
        match s {
            "huber" => Ok(Pairing::Huber),
            "softmax_mse" => Ok(Pairing::SoftmaxMse),
            "hlg" => Ok(Pairing::Hlg),
            other => Err(CliError::config(format!("unknown pairing '{other}'"))),
        }
    }
}

pub fn parse_input_mode(s: &str) -> Result<InputMode, CliError> {
    match s {
        "state_action" => Ok(InputMode::StateAction),
        "state_state" => Ok(InputMode::StateState),
        "state_only" => Ok(InputMode::StateOnly),
        other => Err(CliError::config(format!("unknown input mode '{other}'"))),
    }
}

#[cfg(test)]
pub fn input_mode_name(m: InputMode) -> &'static str {
    match m {
        InputMode::StateAction => "state_action",
        InputMode::StateState => "state_state",
        InputMode::StateOnly => "state_only",
    }
}

/// Full resolved configuration for an imitation run.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub task: String,
    pub method: Method,
    pub pairing: Pairing,
    pub input_mode: String,
    pub demos: String,
    pub refs: String,
    pub out_dir: String,
    pub seeds: Vec<u64>,
    pub env_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub eval_window: usize,
    pub policy_lr: f64,
    pub q_lr: f64,
    pub reward_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub reward_batch: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    pub tau: f64,
    pub hidden: usize,
    pub reward_hidden: usize,
    pub embed_dim: usize,
    pub huber_delta: f64,
    pub hlg_bins: usize,
    pub hlg_min: f64,
    pub hlg_max: f64,
    pub hlg_sigma_expert: f64,
    pub hlg_sigma_agent: f64,
    pub actor_clip_norm: f64,
    pub output_rescale: f64,
    pub bc_iters: usize,
    pub bc_lr: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: "point_mass_reach".into(),
            method: Method::Ngt,
            pairing: Pairing::Huber,
            input_mode: "state_action".into(),
            demos: String::new(),
            refs: String::new(),
            out_dir: "runs".into(),
            seeds: vec![0, 1, 2, 3],
            env_steps: 300_000,
            eval_every: 10_000,
            eval_episodes: 10,
            eval_window: 20,
            policy_lr: 3e-4,
            q_lr: 1e-3,
            reward_lr: 1e-3,
            alpha_lr: 3e-4,
            batch_size: 256,
            reward_batch: 256,
            buffer_capacity: 4_000_000,
            gamma: 0.99,
            tau: 0.005,
            hidden: 256,
            reward_hidden: 256,
            embed_dim: 32,
            huber_delta: 1.0,
            hlg_bins: 21,
            hlg_min: -1.0,
            hlg_max: 1.0,
            hlg_sigma_expert: 0.25,
            hlg_sigma_agent: 0.05,
            actor_clip_norm: 20.0,
            output_rescale: 5.0,
            bc_iters: 5000,
            bc_lr: 1e-3,
        }
    }
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |what: &str| CliError::config(format!("invalid value '{value}' for {what}"));
        match key {
            "task" => self.task = value.into(),
            "method" => self.method = Method::parse(value)?,
            "pairing" => self.pairing = Pairing::parse(value)?,
            "input_mode" => {
                parse_input_mode(value)?;
                self.input_mode = value.into();
            }
            "demos" => self.demos = value.into(),
            "refs" => self.refs = value.into(),
            "out_dir" => self.out_dir = value.into(),
            "seeds" => {
                let parsed: Result<Vec<u64>, _> =
                    value.split(',').map(|s| s.trim().parse::<u64>()).collect();
                self.seeds = parsed.map_err(|_| bad("seeds"))?;
                if self.seeds.is_empty() {
                    return Err(bad("seeds"));
                }
            }
            "env_steps" => self.env_steps = value.parse().map_err(|_| bad(key))?,
            "eval_every" => self.eval_every = value.parse().map_err(|_| bad(key))?,
            "eval_episodes" => self.eval_episodes = value.parse().map_err(|_| bad(key))?,
            "eval_window" => self.eval_window = value.parse().map_err(|_| bad(key))?,
            "policy_lr" => self.policy_lr = value.parse().map_err(|_| bad(key))?,
            "q_lr" => self.q_lr = value.parse().map_err(|_| bad(key))?,
            "reward_lr" => self.reward_lr = value.parse().map_err(|_| bad(key))?,
            "alpha_lr" => self.alpha_lr = value.parse().map_err(|_| bad(key))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad(key))?,
            "reward_batch" => self.reward_batch = value.parse().map_err(|_| bad(key))?,
            "buffer_capacity" => self.buffer_capacity = value.parse().map_err(|_| bad(key))?,
            "gamma" => self.gamma = value.parse().map_err(|_| bad(key))?,
            "tau" => self.tau = value.parse().map_err(|_| bad(key))?,
            "hidden" => self.hidden = value.parse().map_err(|_| bad(key))?,
            "reward_hidden" => self.reward_hidden = value.parse().map_err(|_| bad(key))?,
            "embed_dim" => self.embed_dim = value.parse().map_err(|_| bad(key))?,
            "huber_delta" => self.huber_delta = value.parse().map_err(|_| bad(key))?,
            "hlg_bins" => self.hlg_bins = value.parse().map_err(|_| bad(key))?,
            "hlg_min" => self.hlg_min = value.parse().map_err(|_| bad(key))?,
            "hlg_max" => self.hlg_max = value.parse().map_err(|_| bad(key))?,
            "hlg_sigma_expert" => self.hlg_sigma_expert = value.parse().map_err(|_| bad(key))?,
            "hlg_sigma_agent" => self.hlg_sigma_agent = value.parse().map_err(|_| bad(key))?,
            "actor_clip_norm" => self.actor_clip_norm = value.parse().map_err(|_| bad(key))?,
            "output_rescale" => self.output_rescale = value.parse().map_err(|_| bad(key))?,
            "bc_iters" => self.bc_iters = value.parse().map_err(|_| bad(key))?,
            "bc_lr" => self.bc_lr = value.parse().map_err(|_| bad(key))?,
            other => return Err(CliError::config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parse a `key = value` file; `[section]` lines and `#` comments are
    /// allowed and ignored.
    pub fn load(path: &str) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config '{path}': {e}")))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("{path}:{}: expected key = value", lineno + 1))
            })?;
            cfg.apply(k.trim(), v.trim())
                .map_err(|e| CliError::config(format!("{path}:{}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn task_id(&self) -> Result<ngt_core::env::TaskId, CliError> {
        ngt_core::env::TaskId::parse(&self.task).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn input_mode(&self) -> InputMode {
        parse_input_mode(&self.input_mode).expect("validated at set time")
    }

    pub fn reward_config(&self, state_dim: usize, action_dim: usize) -> RewardConfig {
        let mode = self.input_mode();
        let pairing = match self.pairing {
            Pairing::Huber => PairingLoss::Huber { delta: self.huber_delta },
            Pairing::SoftmaxMse => PairingLoss::SoftmaxMse,
            Pairing::Hlg => PairingLoss::Hlg {
                expert: HlgConfig::new(
                    self.hlg_min,
                    self.hlg_max,
                    self.hlg_bins,
                    self.hlg_sigma_expert,
                ),
                agent: HlgConfig::new(
                    self.hlg_min,
                    self.hlg_max,
                    self.hlg_bins,
                    self.hlg_sigma_agent,
                ),
            },
        };
        let variant = match self.method {
            Method::RedStar => RewardVariant::RedStar,
            Method::WPotential => RewardVariant::WPotential,
            _ => RewardVariant::Ngt,
        };
        RewardConfig {
            input_dim: mode.dim(state_dim, action_dim),
            hidden: self.reward_hidden,
            embed_dim: self.embed_dim,
            pairing,
            variant,
            input_mode: mode,
            output_rescale: self.output_rescale,
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            env_steps: self.env_steps,
            sac: SacConfig {
                gamma: self.gamma,
                tau: self.tau,
                policy_lr: self.policy_lr,
                q_lr: self.q_lr,
                alpha_lr: self.alpha_lr,
                actor_clip_norm: self.actor_clip_norm,
                batch_size: self.batch_size,
                hidden: self.hidden,
            },
            reward_lr: self.reward_lr,
            reward_batch: self.reward_batch,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
            eval_window: self.eval_window,
            buffer_capacity: self.buffer_capacity,
            n_envs: 4,
        }
    }
}
