//! Expert training on the true reward, demonstration collection and
//! subsampling, input-space projection, and the behavior-cloning baseline.

use alloc::vec::Vec;

use crate::env::{self, Env, NormalizationRefs, TaskId, VecEnv};
use crate::nn::{adam_step, Activation, AdamState, Mlp, MlpGrads};
use crate::reward::InputMode;
use crate::rng::{self, Rng};
use crate::sac::{sample_action, SacAgent, SacConfig, Transition};

#[derive(Clone, Debug, PartialEq)]
pub struct DemoMeta {
    pub task: TaskId,
    pub expert_seed: u64,
    pub n_episodes: usize,
    pub subsample_rate: usize,
    pub subsample_offset: usize,
    pub input_mode: InputMode,
}

/// Expert transitions grouped by episode; subsampling never crosses
/// episode boundaries.
#[derive(Clone, Debug)]
pub struct DemonstrationSet {
    pub episodes: Vec<Vec<Transition>>,
    pub meta: DemoMeta,
}

impl DemonstrationSet {
    pub fn len(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.iter().all(|e| e.is_empty())
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flatten()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DemoError {
    BadRate { rate: usize },
    BadOffset { offset: usize, rate: usize },
    WeakExpert { expert: f64, random: f64, sem: f64 },
}

impl core::fmt::Display for DemoError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DemoError::BadRate { rate } => write!(f, "subsample rate {rate} must be >= 1"),
            DemoError::BadOffset { offset, rate } => {
                write!(f, "offset {offset} must be below rate {rate}")
            }
            DemoError::WeakExpert { expert, random, sem } => write!(
                f,
                "expert return {expert} does not exceed random baseline {random} by 5 standard errors ({sem})"
            ),
        }
    }
}

/// Deterministic-action rollouts of a policy network; faulted episodes are
/// discarded and recollected from the next reset.
pub fn collect(policy: &Mlp, task: TaskId, n_episodes: usize, seed: u64) -> DemonstrationSet {
    let mut env = Env::new(task, seed);
    let mut dummy = rng::seeded(0);
    let mut episodes = Vec::with_capacity(n_episodes);
    while episodes.len() < n_episodes {
        env.reset();
        let mut ep: Vec<Transition> = Vec::with_capacity(task.horizon() as usize);
        let mut s = env.observe();
        loop {
            let a = sample_action(policy, &s, &mut dummy, true).a;
            let out = env.step(&a);
            ep.push(Transition { s: s.clone(), a, s_next: out.obs.clone(), done: out.terminated });
            s = out.obs;
            if out.terminated || out.truncated {
                break;
            }
        }
        if !env.fault {
            episodes.push(ep);
        }
    }
    DemonstrationSet {
        episodes,
        meta: DemoMeta {
            task,
            expert_seed: seed,
            n_episodes,
            subsample_rate: 1,
            subsample_offset: 0,
            input_mode: InputMode::StateAction,
        },
    }
}

/// Keep indices offset, offset+rate, ... within each episode.
pub fn subsample(
    demos: &DemonstrationSet,
    rate: usize,
    offset: usize,
) -> Result<DemonstrationSet, DemoError> {
    if rate < 1 {
        return Err(DemoError::BadRate { rate });
    }
    if offset >= rate {
        return Err(DemoError::BadOffset { offset, rate });
    }
    let episodes: Vec<Vec<Transition>> = demos
        .episodes
        .iter()
        .map(|ep| ep.iter().skip(offset).step_by(rate).cloned().collect())
        .collect();
    let mut meta = demos.meta.clone();
    meta.subsample_rate = demos.meta.subsample_rate * rate;
    meta.subsample_offset = offset;
    Ok(DemonstrationSet { episodes, meta })
}

/// Input-space projection of a transition: (s, a), (s, s') or s.
pub fn project_input(t: &Transition, mode: InputMode) -> Vec<f64> {
    let mut x = Vec::new();
    x.extend_from_slice(&t.s);
    match mode {
        InputMode::StateAction => x.extend_from_slice(&t.a),
        InputMode::StateState => x.extend_from_slice(&t.s_next),
        InputMode::StateOnly => {}
    }
    x
}

#[derive(Clone, Copy, Debug)]
pub struct ExpertConfig {
    /// True environment interactions (the counter, not gradient steps).
    pub env_steps: u64,
    pub sac: SacConfig,
    pub eval_episodes: usize,
    pub buffer_capacity: usize,
}

impl ExpertConfig {
    /// Desk-scale defaults: small networks and batches keep a full expert
    /// run in the minutes range.
    pub fn desk(env_steps: u64) -> ExpertConfig {
        let mut sac = SacConfig::defaults();
        sac.hidden = 64;
        sac.batch_size = 64;
        ExpertConfig { env_steps, sac, eval_episodes: 50, buffer_capacity: 400_000 }
    }
}

pub struct Expert {
    pub task: TaskId,
    pub seed: u64,
    pub agent: SacAgent,
    pub refs: NormalizationRefs,
}

/// Per-episode returns of a policy under deterministic actions, each
/// episode from a fresh seed.
pub fn policy_returns(policy: &Mlp, task: TaskId, seed: u64, episodes: usize) -> Vec<f64> {
    let mut dummy = rng::seeded(0);
    (0..episodes)
        .map(|i| {
            let mut env = Env::new(task, seed.wrapping_add(i as u64));
            env::rollout(&mut env, |s| sample_action(policy, s, &mut dummy, true).a)
        })
        .collect()
}

/// Per-episode returns of the uniform-random policy.
pub fn random_returns(task: TaskId, seed: u64, episodes: usize) -> Vec<f64> {
    let mut r = rng::seeded(seed ^ 0xa076_1d64_78bd_642f);
    let adim = task.action_dim();
    (0..episodes)
        .map(|i| {
            let mut env = Env::new(task, seed.wrapping_add(i as u64));
            env::rollout(&mut env, |_| {
                (0..adim).map(|_| rng::uniform_in(&mut r, -1.0, 1.0)).collect()
            })
        })
        .collect()
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// The abort guard: the expert must beat the random baseline by five
/// standard errors of the baseline estimate.
pub fn expert_guard(expert_mean: f64, random: &[f64]) -> Result<NormalizationRefs, DemoError> {
    let (rmean, rstd) = mean_std(random);
    let sem = rstd / libm::sqrt(random.len() as f64);
    if expert_mean <= rmean + 5.0 * sem {
        return Err(DemoError::WeakExpert { expert: expert_mean, random: rmean, sem });
    }
    Ok(NormalizationRefs { random_return: rmean, expert_return: expert_mean })
}

/// SAC on the true environment reward. Rewards are stored here (unlike the
/// imitator's buffer) since the expert is plain reinforcement learning.
pub fn train_expert(task: TaskId, seed: u64, cfg: ExpertConfig) -> Result<Expert, DemoError> {
    let mut r = rng::seeded(seed);
    let mut agent = SacAgent::new(task.state_dim(), task.action_dim(), cfg.sac, &mut r);
    let mut venv = VecEnv::new(task, 4, seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let mut store: Vec<(Transition, f64)> = Vec::new();
    let mut cursor = 0usize;
    let mut obs = venv.observe();
    while venv.counter < cfg.env_steps {
        let actions: Vec<Vec<f64>> =
            obs.iter().map(|s| sample_action(&agent.policy, s, &mut r, false).a).collect();
        let out = venv.step(&actions);
        for (i, res) in out.results.iter().enumerate() {
            let t = Transition {
                s: obs[i].clone(),
                a: actions[i].clone(),
                s_next: res.obs.clone(),
                done: res.terminated,
            };
            if store.len() < cfg.buffer_capacity {
                store.push((t, res.reward));
            } else {
                store[cursor] = (t, res.reward);
            }
            cursor = (cursor + 1) % cfg.buffer_capacity;
        }
        obs = venv.observe();
        if store.len() >= cfg.sac.batch_size {
            let idx: Vec<usize> = (0..cfg.sac.batch_size)
                .map(|_| (rng::uniform(&mut r) * store.len() as f64) as usize % store.len())
                .collect();
            let batch: Vec<&Transition> = idx.iter().map(|&i| &store[i].0).collect();
            let rewards: Vec<f64> = idx.iter().map(|&i| store[i].1).collect();
            let y = agent.critic_target(&batch, &rewards, &mut r);
            agent.critic_update(&batch, &y).expect("expert critic update");
            let (_, mean_logp) = agent.actor_update(&batch, &mut r).expect("expert actor update");
            agent.alpha_update(mean_logp);
            agent.polyak_update();
        }
    }
    let eval_seed = seed.wrapping_add(777_000);
    let expert_eps = policy_returns(&agent.policy, task, eval_seed, cfg.eval_episodes);
    let random_eps = random_returns(task, eval_seed.wrapping_add(50_000), cfg.eval_episodes);
    let (emean, _) = mean_std(&expert_eps);
    let refs = expert_guard(emean, &random_eps)?;
    Ok(Expert { task, seed, agent, refs })
}

/// A hand-written proportional-derivative controller for the point-mass
/// task; serves as a near-optimal return oracle for expert checks.
pub fn point_mass_controller(obs: &[f64]) -> Vec<f64> {
    let (px, py, vx, vy) = (obs[0], obs[1], obs[2], obs[3]);
    alloc::vec![
        (-2.0 * px - 1.2 * vx).clamp(-1.0, 1.0),
        (-2.0 * py - 1.2 * vy).clamp(-1.0, 1.0),
    ]
}

/// Behavior cloning: regress tanh of the policy mean head onto expert
/// actions with mean squared error. Uses the same architecture as the SAC
/// policy so checkpoints are interchangeable.
pub fn bc_train(
    demos: &DemonstrationSet,
    iters: usize,
    batch: usize,
    lr: f64,
    hidden: usize,
    rng: &mut Rng,
) -> Mlp {
    let flat: Vec<&Transition> = demos.transitions().collect();
    assert!(!flat.is_empty(), "cannot clone from an empty demonstration set");
    let sdim = flat[0].s.len();
    let adim = flat[0].a.len();
    let mut policy =
        Mlp::mlp2(sdim, hidden, 2 * adim, Activation::Relu, Activation::Identity, 0.01, false, rng);
    let mut adam = AdamState::new(&policy, lr);
    for _ in 0..iters {
        let mut grads = MlpGrads::zeros_like(&policy);
        let b = batch.min(flat.len());
        for _ in 0..b {
            let t = flat[(rng::uniform(rng) * flat.len() as f64) as usize % flat.len()];
            let (out, cache) = policy.forward(&t.s).expect("bc forward");
            let mut dout = alloc::vec![0.0; 2 * adim];
            for i in 0..adim {
                let tv = libm::tanh(out[i]);
                // d/dmu of (tanh(mu) - a)^2 / adim, averaged over the batch.
                dout[i] = 2.0 * (tv - t.a[i]) * (1.0 - tv * tv) / (adim * b) as f64;
            }
            let (g, _) = policy.backward(&cache, &dout);
            grads.add_scaled(&g, 1.0);
        }
        adam_step(&mut policy, &grads, &mut adam).expect("bc adam step");
    }
    policy
}
