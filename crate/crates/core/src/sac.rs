//! Off-policy soft actor-critic: twin critics with Polyak-averaged targets,
//! a tanh-squashed Gaussian policy, and an auto-tuned temperature. Rewards
//! are never stored in the replay buffer; they are recomputed from the
//! learned reward model when critic targets are built.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{adam_step, AdamState, Activation, Mlp, MlpGrads, NnError, ScalarAdam};
use crate::rng::{self, Rng};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Numerical floor inside log(1 - tanh(u)^2 + eps).
pub const ACTION_EPS: f64 = 1e-6;
const LN_2PI: f64 = 1.8378770664093453;

/// One stored interaction. There is deliberately no reward field.
#[derive(Clone, Debug)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    /// True termination only; time-limit truncation stays false so the
    /// bootstrap is kept.
    pub done: bool,
}

/// Fixed-capacity ring buffer with FIFO overwrite and uniform sampling.
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0);
        ReplayBuffer { data: Vec::new(), capacity, cursor: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    pub fn sample_indices(&self, rng: &mut Rng, n: usize) -> Vec<usize> {
        assert!(!self.data.is_empty());
        (0..n).map(|_| (rng::uniform(rng) * self.data.len() as f64) as usize % self.data.len()).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub policy_lr: f64,
    pub q_lr: f64,
    pub alpha_lr: f64,
    pub actor_clip_norm: f64,
    pub batch_size: usize,
    pub hidden: usize,
}

impl SacConfig {
    pub fn defaults() -> SacConfig {
        SacConfig {
            gamma: 0.99,
            tau: 0.005,
            policy_lr: 3e-4,
            q_lr: 1e-3,
            alpha_lr: 3e-4,
            actor_clip_norm: 20.0,
            batch_size: 256,
            hidden: 256,
        }
    }
}

/// One policy draw with everything needed for gradients.
#[derive(Clone, Debug)]
pub struct ActionSample {
    pub a: Vec<f64>,
    pub log_prob: f64,
    /// Pre-squash value mu + sigma * xi.
    pub u: Vec<f64>,
    pub mean: Vec<f64>,
    /// Clamped log standard deviations.
    pub log_std: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Split the raw policy output into mean and (unclamped) log-std halves.
pub fn policy_head(out: &[f64]) -> (&[f64], &[f64]) {
    let adim = out.len() / 2;
    (&out[..adim], &out[adim..])
}

/// Squash a fixed noise draw through the policy head. The log-probability
/// includes the tanh change-of-variables correction.
pub fn squash(mean: &[f64], log_std_raw: &[f64], xi: &[f64]) -> ActionSample {
    let adim = mean.len();
    let mut a = vec![0.0; adim];
    let mut u = vec![0.0; adim];
    let mut ls = vec![0.0; adim];
    let mut log_prob = 0.0;
    for i in 0..adim {
        let l = log_std_raw[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let sigma = libm::exp(l);
        let ui = mean[i] + sigma * xi[i];
        let t = libm::tanh(ui);
        log_prob += -0.5 * xi[i] * xi[i] - l - 0.5 * LN_2PI - libm::log(1.0 - t * t + ACTION_EPS);
        a[i] = t;
        u[i] = ui;
        ls[i] = l;
    }
    ActionSample { a, log_prob, u, mean: mean.to_vec(), log_std: ls, xi: xi.to_vec() }
}

pub fn sample_action(policy: &Mlp, s: &[f64], rng: &mut Rng, deterministic: bool) -> ActionSample {
    let out = policy.eval(s);
    let (mean, log_std_raw) = policy_head(&out);
    let xi: Vec<f64> =
        if deterministic { vec![0.0; mean.len()] } else { mean.iter().map(|_| rng::normal(rng)).collect() };
    squash(mean, log_std_raw, &xi)
}

pub struct SacAgent {
    pub policy: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub cfg: SacConfig,
    pub state_dim: usize,
    pub action_dim: usize,
    policy_opt: AdamState,
    q1_opt: AdamState,
    q2_opt: AdamState,
    alpha_opt: ScalarAdam,
}

fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend_from_slice(a);
    x
}

impl SacAgent {
    pub fn new(state_dim: usize, action_dim: usize, cfg: SacConfig, rng: &mut Rng) -> SacAgent {
        // Small output gain keeps the initial policy near tanh(0).
        let policy = Mlp::mlp2(
            state_dim,
            cfg.hidden,
            2 * action_dim,
            Activation::Relu,
            Activation::Identity,
            0.01,
            false,
            rng,
        );
        let q1 = Mlp::mlp2(
            state_dim + action_dim,
            cfg.hidden,
            1,
            Activation::Relu,
            Activation::Identity,
            1.0,
            false,
            rng,
        );
        let q2 = Mlp::mlp2(
            state_dim + action_dim,
            cfg.hidden,
            1,
            Activation::Relu,
            Activation::Identity,
            1.0,
            false,
            rng,
        );
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        let policy_opt = AdamState::new(&policy, cfg.policy_lr);
        let q1_opt = AdamState::new(&q1, cfg.q_lr);
        let q2_opt = AdamState::new(&q2, cfg.q_lr);
        SacAgent {
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha: 0.0,
            target_entropy: -(action_dim as f64),
            cfg,
            state_dim,
            action_dim,
            policy_opt,
            q1_opt,
            q2_opt,
            alpha_opt: ScalarAdam::new(cfg.alpha_lr),
        }
    }

    pub fn alpha(&self) -> f64 {
        libm::exp(self.log_alpha)
    }

    pub fn act(&self, s: &[f64], rng: &mut Rng, deterministic: bool) -> Vec<f64> {
        sample_action(&self.policy, s, rng, deterministic).a
    }

    /// y = r + gamma * (1 - done) * (min Qbar(s', a') - alpha * log pi(a'|s'))
    /// with a' resampled from the current policy. done zeroes the bootstrap
    /// only on true termination.
    pub fn critic_target(
        &self,
        batch: &[&Transition],
        rewards: &[f64],
        rng: &mut Rng,
    ) -> Vec<f64> {
        assert_eq!(batch.len(), rewards.len(), "reward batch shape");
        let alpha = self.alpha();
        batch
            .iter()
            .zip(rewards)
            .map(|(t, &r)| {
                if t.done {
                    return r;
                }
                let next = sample_action(&self.policy, &t.s_next, rng, false);
                let x = concat(&t.s_next, &next.a);
                let q1 = self.q1_target.eval(&x)[0];
                let q2 = self.q2_target.eval(&x)[0];
                r + self.cfg.gamma * (q1.min(q2) - alpha * next.log_prob)
            })
            .collect()
    }

    /// One Adam step per critic on the mean squared error to y. Returns the
    /// average of the two critic losses.
    pub fn critic_update(&mut self, batch: &[&Transition], y: &[f64]) -> Result<f64, NnError> {
        assert_eq!(batch.len(), y.len());
        if y.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteGradient);
        }
        let n = batch.len() as f64;
        let mut total = 0.0;
        for which in 0..2 {
            let critic = if which == 0 { &self.q1 } else { &self.q2 };
            let mut grads = MlpGrads::zeros_like(critic);
            let mut loss = 0.0;
            for (t, &yi) in batch.iter().zip(y) {
                let x = concat(&t.s, &t.a);
                let (out, cache) = critic.forward(&x)?;
                let err = out[0] - yi;
                loss += err * err / n;
                let (g, _) = critic.backward(&cache, &[2.0 * err / n]);
                grads.add_scaled(&g, 1.0);
            }
            total += 0.5 * loss;
            if which == 0 {
                adam_step(&mut self.q1, &grads, &mut self.q1_opt)?;
            } else {
                adam_step(&mut self.q2, &grads, &mut self.q2_opt)?;
            }
        }
        Ok(total)
    }

    /// Actor loss and exact policy gradients on a frozen noise draw:
    /// mean over the batch of alpha * log pi(a|s) - min(Q1, Q2)(s, a) with
    /// a reparameterized through tanh(mu + sigma * xi).
    pub fn actor_loss_and_grads(
        &self,
        states: &[&[f64]],
        xis: &[Vec<f64>],
    ) -> Result<(f64, f64, MlpGrads), NnError> {
        assert_eq!(states.len(), xis.len());
        let n = states.len() as f64;
        let alpha = self.alpha();
        let mut grads = MlpGrads::zeros_like(&self.policy);
        let mut loss = 0.0;
        let mut mean_logp = 0.0;
        for (s, xi) in states.iter().zip(xis) {
            let (out, cache) = self.policy.forward(s)?;
            let (mean, log_std_raw) = policy_head(&out);
            let sample = squash(mean, log_std_raw, xi);
            let x = concat(s, &sample.a);
            let (o1, c1) = self.q1.forward(&x)?;
            let (o2, c2) = self.q2.forward(&x)?;
            // Gradient flows through the critic attaining the min.
            let (qmin, ccache, cnet) =
                if o1[0] <= o2[0] { (o1[0], c1, &self.q1) } else { (o2[0], c2, &self.q2) };
            loss += (alpha * sample.log_prob - qmin) / n;
            mean_logp += sample.log_prob / n;
            let (_, dq_dx) = cnet.backward(&ccache, &[1.0]);
            let dq_da = &dq_dx[s.len()..];
            let adim = self.action_dim;
            let mut dout = vec![0.0; 2 * adim];
            for i in 0..adim {
                let t = sample.a[i];
                let one_m_t2 = 1.0 - t * t;
                // d log pi / du through the tanh correction.
                let dlogp_du = 2.0 * t * one_m_t2 / (one_m_t2 + ACTION_EPS);
                let du_dl = sample.u[i] - sample.mean[i];
                let dl_du_term = alpha * dlogp_du - dq_da[i] * one_m_t2;
                dout[i] = dl_du_term / n;
                // Clamped log-std passes no gradient.
                let active = (LOG_STD_MIN..=LOG_STD_MAX).contains(&log_std_raw[i]);
                if active {
                    dout[adim + i] = (alpha * (-1.0) + dl_du_term * du_dl) / n;
                }
            }
            let (g, _) = self.policy.backward(&cache, &dout);
            grads.add_scaled(&g, 1.0);
        }
        Ok((loss, mean_logp, grads))
    }

    /// One clipped Adam step on the actor loss with freshly drawn noise.
    /// Returns (loss, mean log-probability) for metrics and the temperature
    /// update.
    pub fn actor_update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<(f64, f64), NnError> {
        let states: Vec<&[f64]> = batch.iter().map(|t| t.s.as_slice()).collect();
        let xis: Vec<Vec<f64>> =
            states.iter().map(|_| (0..self.action_dim).map(|_| rng::normal(rng)).collect()).collect();
        let (loss, mean_logp, mut grads) = self.actor_loss_and_grads(&states, &xis)?;
        grads.clip_norm(self.cfg.actor_clip_norm);
        adam_step(&mut self.policy, &grads, &mut self.policy_opt)?;
        Ok((loss, mean_logp))
    }

    /// Gradient step on -alpha * (log pi + target_entropy), optimizing
    /// log alpha so the temperature stays positive.
    pub fn alpha_update(&mut self, mean_log_prob: f64) {
        let grad = -self.alpha() * (mean_log_prob + self.target_entropy);
        let mut la = self.log_alpha;
        self.alpha_opt.step(&mut la, grad);
        self.log_alpha = la;
    }

    pub fn polyak_update(&mut self) {
        polyak(&self.q1, &mut self.q1_target, self.cfg.tau);
        polyak(&self.q2, &mut self.q2_target, self.cfg.tau);
    }
}

/// target <- tau * live + (1 - tau) * target, elementwise.
pub fn polyak(live: &Mlp, target: &mut Mlp, tau: f64) {
    assert!((0.0..=1.0).contains(&tau));
    for (lt, tt) in live.layers.iter().zip(&mut target.layers) {
        for (a, b) in lt.w.data.iter().zip(&mut tt.w.data) {
            *b = tau * a + (1.0 - tau) * *b;
        }
        for (a, b) in lt.b.iter().zip(&mut tt.b) {
            *b = tau * a + (1.0 - tau) * *b;
        }
    }
}
