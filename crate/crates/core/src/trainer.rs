//! The imitation training loop: each iteration takes one vectorized
//! environment step (4 true interactions), one reward-model update against
//! the demonstrations, and one SAC update whose critic targets use rewards
//! recomputed from the current reward model. The replay buffer itself
//! stores no rewards.

use alloc::vec::Vec;

use crate::demo::{project_input, DemonstrationSet};
use crate::env::{self, Env, NormalizationRefs, TaskId, VecEnv};
use crate::nn::{AdamState, NnError};
use crate::reward::{PotentialPair, RewardConfig, RewardError, MIN_RESCALE_BATCH};
use crate::rng;
use crate::sac::{sample_action, ReplayBuffer, SacAgent, SacConfig, Transition};

#[derive(Clone, Copy, Debug)]
pub struct TrainerConfig {
    /// Total true environment interactions (the x4 counter).
    pub env_steps: u64,
    pub sac: SacConfig,
    pub reward_lr: f64,
    /// Batch size for reward updates and reward recomputation; must allow
    /// percentile rescaling.
    pub reward_batch: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// The reported final metric averages this many trailing evaluations.
    pub eval_window: usize,
    pub buffer_capacity: usize,
    pub n_envs: usize,
}

impl TrainerConfig {
    /// Defaults mirroring the reference hyperparameter table, at reference
    /// scale.
    pub fn reference(env_steps: u64) -> TrainerConfig {
        TrainerConfig {
            env_steps,
            sac: SacConfig::defaults(),
            reward_lr: 1e-3,
            reward_batch: 256,
            eval_every: 10_000,
            eval_episodes: 10,
            eval_window: 20,
            buffer_capacity: 4_000_000,
            n_envs: 4,
        }
    }

    /// Shrunk networks and batches for runs that must finish in minutes.
    pub fn desk(env_steps: u64) -> TrainerConfig {
        let mut cfg = TrainerConfig::reference(env_steps);
        cfg.sac.hidden = 64;
        cfg.sac.batch_size = 64;
        cfg.reward_batch = 64;
        cfg.buffer_capacity = 400_000;
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub eval_return_mean: f64,
    pub eval_return_norm: f64,
    pub reward_loss: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    Diverged { step: u64 },
    Reward(RewardError),
    Nn(NnError),
    EmptyDemos,
}

impl From<RewardError> for TrainError {
    fn from(e: RewardError) -> Self {
        TrainError::Reward(e)
    }
}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        TrainError::Nn(e)
    }
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Diverged { step } => write!(f, "training diverged at step {step}"),
            TrainError::Reward(e) => write!(f, "{e}"),
            TrainError::Nn(e) => write!(f, "{e}"),
            TrainError::EmptyDemos => write!(f, "demonstration set is empty"),
        }
    }
}

pub struct TrainOutcome {
    pub agent: SacAgent,
    pub pair: PotentialPair,
    pub metrics: Vec<MetricsRecord>,
    /// Mean normalized return over the trailing evaluation window (raw
    /// mean if no normalization refs were supplied).
    pub final_return: f64,
}

fn eval_policy(agent: &SacAgent, task: TaskId, seed: u64, episodes: usize) -> f64 {
    let mut dummy = rng::seeded(0);
    let mut total = 0.0;
    for i in 0..episodes {
        let mut e = Env::new(task, seed.wrapping_add(i as u64));
        total += env::rollout(&mut e, |s| sample_action(&agent.policy, s, &mut dummy, true).a);
    }
    total / episodes as f64
}

/// Run the full imitation loop. `reward_cfg.input_mode` decides what the
/// reward model reads; demonstrations are projected accordingly.
pub fn imitate(
    task: TaskId,
    demos: &DemonstrationSet,
    reward_cfg: RewardConfig,
    refs: Option<&NormalizationRefs>,
    cfg: TrainerConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    if demos.is_empty() {
        return Err(TrainError::EmptyDemos);
    }
    assert!(cfg.reward_batch >= MIN_RESCALE_BATCH);
    assert!(cfg.sac.batch_size >= MIN_RESCALE_BATCH);
    let mode = reward_cfg.input_mode;
    let expert_inputs: Vec<Vec<f64>> =
        demos.transitions().map(|t| project_input(t, mode)).collect();
    let mut r = rng::seeded(seed);
    let mut pair = PotentialPair::new(reward_cfg, &mut r);
    let mut reward_adam = AdamState::new(&pair.predictor, cfg.reward_lr);
    let mut agent = SacAgent::new(task.state_dim(), task.action_dim(), cfg.sac, &mut r);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut venv = VecEnv::new(task, cfg.n_envs, seed.wrapping_mul(0x517c_c1b7).wrapping_add(3));
    let mut obs = venv.observe();
    let mut metrics = Vec::new();
    let mut window: Vec<f64> = Vec::new();
    let mut next_eval = cfg.eval_every;
    let mut last = MetricsRecord {
        step: 0,
        eval_return_mean: f64::NAN,
        eval_return_norm: f64::NAN,
        reward_loss: f64::NAN,
        critic_loss: f64::NAN,
        actor_loss: f64::NAN,
        alpha: agent.alpha(),
    };
    while venv.counter < cfg.env_steps {
        // Collect.
        let actions: Vec<Vec<f64>> =
            obs.iter().map(|s| sample_action(&agent.policy, s, &mut r, false).a).collect();
        let out = venv.step(&actions);
        for (i, res) in out.results.iter().enumerate() {
            buffer.push(Transition {
                s: obs[i].clone(),
                a: actions[i].clone(),
                s_next: res.obs.clone(),
                done: res.terminated,
            });
        }
        obs = venv.observe();
        // Reward-model update: expert minibatch (with replacement; the
        // demonstration set may be far smaller than the batch) against an
        // agent minibatch from the buffer.
        let expert_batch: Vec<Vec<f64>> = (0..cfg.reward_batch)
            .map(|_| {
                expert_inputs
                    [(rng::uniform(&mut r) * expert_inputs.len() as f64) as usize % expert_inputs.len()]
                .clone()
            })
            .collect();
        let agent_batch: Vec<Vec<f64>> = buffer
            .sample_indices(&mut r, cfg.reward_batch)
            .into_iter()
            .map(|i| project_input(buffer.get(i), mode))
            .collect();
        let reward_loss = pair.update(&expert_batch, &agent_batch, &mut reward_adam)?;
        // SAC update with per-minibatch recomputed rewards.
        let mut critic_loss = f64::NAN;
        let mut actor_loss = f64::NAN;
        if buffer.len() >= cfg.sac.batch_size {
            let idx = buffer.sample_indices(&mut r, cfg.sac.batch_size);
            let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
            let inputs: Vec<Vec<f64>> = batch.iter().map(|t| project_input(t, mode)).collect();
            let rewards = pair.compute_reward(&inputs)?;
            let y = agent.critic_target(&batch, &rewards, &mut r);
            critic_loss = agent.critic_update(&batch, &y)?;
            let (al, mean_logp) = agent.actor_update(&batch, &mut r)?;
            actor_loss = al;
            agent.alpha_update(mean_logp);
            agent.polyak_update();
        }
        if !reward_loss.is_finite()
            || !critic_loss.is_nan() && !critic_loss.is_finite()
            || !actor_loss.is_nan() && !actor_loss.is_finite()
        {
            return Err(TrainError::Diverged { step: venv.counter });
        }
        last.reward_loss = reward_loss;
        last.critic_loss = critic_loss;
        last.actor_loss = actor_loss;
        last.alpha = agent.alpha();
        if venv.counter >= next_eval {
            let raw = eval_policy(
                &agent,
                task,
                seed.wrapping_add(900_000).wrapping_add(next_eval),
                cfg.eval_episodes,
            );
            let norm = match refs {
                Some(rf) => env::normalized_return(raw, rf).unwrap_or(f64::NAN),
                None => f64::NAN,
            };
            let rec = MetricsRecord {
                step: venv.counter,
                eval_return_mean: raw,
                eval_return_norm: norm,
                ..last
            };
            metrics.push(rec);
            window.push(if refs.is_some() { norm } else { raw });
            if window.len() > cfg.eval_window {
                window.remove(0);
            }
            next_eval += cfg.eval_every;
        }
    }
    let final_return = if window.is_empty() {
        f64::NAN
    } else {
        window.iter().sum::<f64>() / window.len() as f64
    };
    Ok(TrainOutcome { agent, pair, metrics, final_return })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{collect, subsample};
    use crate::nn::{Activation, Mlp};
    use crate::reward::InputMode;

    fn tiny_cfg(steps: u64) -> TrainerConfig {
        let mut cfg = TrainerConfig::desk(steps);
        cfg.sac.hidden = 16;
        cfg.sac.batch_size = 32;
        cfg.reward_batch = 32;
        cfg.eval_every = 1000;
        cfg.eval_episodes = 2;
        cfg
    }

    fn tiny_demos(task: TaskId) -> DemonstrationSet {
        let p = Mlp::mlp2(
            task.state_dim(),
            4,
            2 * task.action_dim(),
            Activation::Relu,
            Activation::Identity,
            0.01,
            false,
            &mut rng::seeded(1),
        );
        let d = collect(&p, task, 1, 5);
        subsample(&d, 20, 0).unwrap()
    }

    #[test]
    fn smoke_point_mass_2000_steps_finite() {
        let task = TaskId::PointMassReach;
        let demos = tiny_demos(task);
        let mut rc = RewardConfig::defaults(
            InputMode::StateAction.dim(task.state_dim(), task.action_dim()),
            InputMode::StateAction,
        );
        rc.hidden = 16;
        rc.embed_dim = 4;
        let out = imitate(task, &demos, rc, None, tiny_cfg(2000), 7).unwrap();
        assert!(out.metrics.len() >= 1);
        for m in &out.metrics {
            assert!(m.reward_loss.is_finite());
            assert!(m.critic_loss.is_finite());
            assert!(m.actor_loss.is_finite());
            assert!(m.alpha.is_finite() && m.alpha > 0.0);
            assert!(m.eval_return_mean.is_finite());
        }
        assert!(out.pair.prior_is_frozen());
    }

    #[test]
    fn counter_steps_by_four_and_eval_cadence() {
        let task = TaskId::PointMassReach;
        let demos = tiny_demos(task);
        let mut rc = RewardConfig::defaults(
            InputMode::StateOnly.dim(task.state_dim(), task.action_dim()),
            InputMode::StateOnly,
        );
        rc.hidden = 8;
        rc.embed_dim = 2;
        let mut cfg = tiny_cfg(3000);
        cfg.eval_every = 1000;
        let out = imitate(task, &demos, rc, None, cfg, 3).unwrap();
        // Evals land on the first counter value at or past each multiple
        // of eval_every; counters move in steps of n_envs = 4.
        assert_eq!(out.metrics.len(), 3);
        for (k, m) in out.metrics.iter().enumerate() {
            let boundary = 1000 * (k as u64 + 1);
            assert!(m.step >= boundary && m.step < boundary + 4);
            assert_eq!(m.step % 4, 0);
        }
    }

    #[test]
    fn empty_demos_rejected() {
        let task = TaskId::PointMassReach;
        let mut demos = tiny_demos(task);
        demos.episodes.clear();
        let rc = RewardConfig::defaults(4, InputMode::StateOnly);
        match imitate(task, &demos, rc, None, tiny_cfg(100), 1) {
            Err(e) => assert_eq!(e, TrainError::EmptyDemos),
            Ok(_) => panic!("expected empty-demos rejection"),
        }
    }

    #[test]
    fn normalized_metric_uses_refs() {
        let task = TaskId::PointMassReach;
        let demos = tiny_demos(task);
        let mut rc = RewardConfig::defaults(
            InputMode::StateOnly.dim(task.state_dim(), task.action_dim()),
            InputMode::StateOnly,
        );
        rc.hidden = 8;
        rc.embed_dim = 2;
        let refs = NormalizationRefs { random_return: -400.0, expert_return: -20.0 };
        let out = imitate(task, &demos, rc, Some(&refs), tiny_cfg(1200), 11).unwrap();
        let m = &out.metrics[0];
        let want = (m.eval_return_mean - refs.random_return)
            / (refs.expert_return - refs.random_return);
        assert!((m.eval_return_norm - want).abs() < 1e-12);
        assert!(out.final_return.is_finite());
    }
}
