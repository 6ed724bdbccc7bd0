//! The reward learner: a frozen randomly-initialized prior network, a
//! trainable spectrally-normalized predictor, the potential
//! h(x) = l(f(x), f_prior(x)), the adversarial loss over expert and agent
//! batches, and the exp(-h) reward with percentile rescaling.

use alloc::vec::Vec;

use crate::linalg::dist2;
use crate::loss::{self, HlgConfig};
use crate::nn::{adam_step, Activation, AdamState, Mlp, MlpGrads, NnError};
use crate::rng::Rng;

/// What the reward network reads: (s, a), (s, s') or s alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    StateAction,
    StateState,
    StateOnly,
}

impl InputMode {
    pub fn dim(&self, state_dim: usize, action_dim: usize) -> usize {
        match self {
            InputMode::StateAction => state_dim + action_dim,
            InputMode::StateState => 2 * state_dim,
            InputMode::StateOnly => state_dim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PairingLoss {
    Huber { delta: f64 },
    SoftmaxMse,
    /// Distributional pairing; a separate smoothing scale per side of the
    /// adversarial loss (expert-side sigma is the larger one).
    Hlg { expert: HlgConfig, agent: HlgConfig },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardVariant {
    Ngt,
    /// Expert-side term only.
    RedStar,
    /// Unconstrained-sign scalar head, no prior network.
    WPotential,
}

/// Which expectation of the adversarial loss an evaluation belongs to;
/// only relevant for the HLG pairing, whose sigma differs per side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Expert,
    Agent,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RewardError {
    EmptyBatch,
    BatchTooSmall { got: usize, min: usize },
    Nn(NnError),
}

impl From<NnError> for RewardError {
    fn from(e: NnError) -> Self {
        RewardError::Nn(e)
    }
}

impl core::fmt::Display for RewardError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RewardError::EmptyBatch => write!(f, "empty batch"),
            RewardError::BatchTooSmall { got, min } => {
                write!(f, "reward batch of {got} below minimum {min}")
            }
            RewardError::Nn(e) => write!(f, "{e}"),
        }
    }
}

/// Percentile rescaling needs enough samples for the 5th/95th gap to mean
/// anything.
pub const MIN_RESCALE_BATCH: usize = 16;
const RESCALE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardBatchStats {
    pub p05: f64,
    pub p95: f64,
}

#[derive(Clone, Debug)]
pub struct RewardConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub pairing: PairingLoss,
    pub variant: RewardVariant,
    pub input_mode: InputMode,
    /// Post-tanh rescale of the embeddings.
    pub output_rescale: f64,
}

impl RewardConfig {
    pub fn defaults(input_dim: usize, input_mode: InputMode) -> Self {
        RewardConfig {
            input_dim,
            hidden: 256,
            embed_dim: 32,
            pairing: PairingLoss::Huber { delta: 1.0 },
            variant: RewardVariant::Ngt,
            input_mode,
            output_rescale: 5.0,
        }
    }
}

/// Frozen prior and trainable predictor, plus everything needed to turn
/// their disagreement into a reward.
#[derive(Clone, Debug)]
pub struct PotentialPair {
    /// Frozen after initialization; orthogonal init keeps it near
    /// 1-Lipschitz without spectral normalization.
    pub prior: Mlp,
    /// Spectral normalization on every linear layer.
    pub predictor: Mlp,
    pub cfg: RewardConfig,
    prior_hash: u64,
}

const REWARD_LEAK: f64 = 0.05;

impl PotentialPair {
    pub fn new(cfg: RewardConfig, rng: &mut Rng) -> Self {
        let act = Activation::LeakyRelu(REWARD_LEAK);
        let prior = Mlp::mlp2(
            cfg.input_dim,
            cfg.hidden,
            cfg.embed_dim,
            act,
            Activation::Tanh,
            1.0,
            false,
            rng,
        );
        // The predictor mirrors the prior except for the HLG output-width
        // asymmetry (m * N logits instead of m scalars) and the logits
        // skipping the tanh.
        let predictor = match (cfg.variant, cfg.pairing) {
            (RewardVariant::WPotential, _) => Mlp::mlp2(
                cfg.input_dim,
                cfg.hidden,
                1,
                act,
                Activation::Identity,
                1.0,
                true,
                rng,
            ),
            (_, PairingLoss::Hlg { agent, .. }) => Mlp::mlp2(
                cfg.input_dim,
                cfg.hidden,
                cfg.embed_dim * agent.n_bins,
                act,
                Activation::Identity,
                1.0,
                true,
                rng,
            ),
            _ => Mlp::mlp2(
                cfg.input_dim,
                cfg.hidden,
                cfg.embed_dim,
                act,
                Activation::Tanh,
                1.0,
                true,
                rng,
            ),
        };
        let prior_hash = prior.params_hash();
        PotentialPair { prior, predictor, cfg, prior_hash }
    }

    pub fn prior_hash(&self) -> u64 {
        self.prior_hash
    }

    pub fn prior_is_frozen(&self) -> bool {
        self.prior.params_hash() == self.prior_hash
    }

    /// Prior embedding in [-rescale, rescale]^m.
    pub fn prior_embedding(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.prior.eval(x);
        for v in &mut y {
            *v *= self.cfg.output_rescale;
        }
        y
    }

    /// Pairing loss between a raw predictor output and a prior embedding,
    /// with the gradient w.r.t. the predictor's network output (before the
    /// tanh rescale for the embedding losses, i.e. directly chainable into
    /// `Mlp::backward`).
    fn pair_loss(&self, pred_out: &[f64], prior_emb: &[f64], side: Side) -> (f64, Vec<f64>) {
        let r = self.cfg.output_rescale;
        match self.cfg.pairing {
            PairingLoss::Huber { delta } => {
                let pred_emb: Vec<f64> = pred_out.iter().map(|v| v * r).collect();
                let (l, mut g) = loss::huber(&pred_emb, prior_emb, delta);
                for v in &mut g {
                    *v *= r;
                }
                (l, g)
            }
            PairingLoss::SoftmaxMse => {
                let pred_emb: Vec<f64> = pred_out.iter().map(|v| v * r).collect();
                let (l, mut g) = loss::softmax_mse(&pred_emb, prior_emb);
                for v in &mut g {
                    *v *= r;
                }
                (l, g)
            }
            PairingLoss::Hlg { expert, agent } => {
                let cfg = match side {
                    Side::Expert => expert,
                    Side::Agent => agent,
                };
                // Prior targets live in [-rescale, rescale]; map them onto
                // the HLG support by dividing by the rescale.
                let targets: Vec<f64> = prior_emb.iter().map(|v| v / r).collect();
                loss::hlg_loss(pred_out, &targets, &cfg)
            }
        }
    }

    /// A spectrally normalized snapshot of the predictor (read-only; the
    /// persistent power-iteration state is not advanced).
    pub fn predictor_view(&self) -> Mlp {
        let mut p = self.predictor.clone();
        let (view, _) = p.normalized(1);
        view
    }

    /// The potential h(x); non-negative for every embedding pairing loss
    /// (the w-potential variant is sign-unconstrained).
    pub fn potential(&self, x: &[f64], side: Side) -> f64 {
        self.potential_with_net(&self.predictor_view(), x, side)
    }

    fn potential_with_net(&self, pred_net: &Mlp, x: &[f64], side: Side) -> f64 {
        let out = pred_net.eval(x);
        if self.cfg.variant == RewardVariant::WPotential {
            return out[0];
        }
        let prior_emb = self.prior_embedding(x);
        self.pair_loss(&out, &prior_emb, side).0
    }

    /// Empirical adversarial loss
    /// L = mean_expert h - mean_agent h (expert term only for RED*),
    /// with gradients flowing only into the predictor.
    pub fn reward_loss(
        &mut self,
        expert_batch: &[Vec<f64>],
        agent_batch: &[Vec<f64>],
    ) -> Result<(f64, MlpGrads), RewardError> {
        if expert_batch.is_empty() || agent_batch.is_empty() {
            return Err(RewardError::EmptyBatch);
        }
        // One power iteration per update with persistent u.
        let (pred_net, sigmas) = self.predictor.normalized(1);
        let mut grads = MlpGrads::zeros_like(&pred_net);
        let mut total = 0.0;
        let side_pass = |batch: &[Vec<f64>], side: Side, sign: f64, grads: &mut MlpGrads| {
            let w = sign / batch.len() as f64;
            let mut acc = 0.0;
            for x in batch {
                let (out, cache) = pred_net.forward(x).expect("reward input dimension");
                let (h, dh_dout) = if self.cfg.variant == RewardVariant::WPotential {
                    let mut g = alloc::vec![0.0; 1];
                    g[0] = 1.0;
                    (out[0], g)
                } else {
                    let prior_emb = self.prior_embedding(x);
                    self.pair_loss(&out, &prior_emb, side)
                };
                acc += w * h;
                let (g, _) = pred_net.backward(&cache, &dh_dout);
                grads.add_scaled(&g, w);
            }
            acc
        };
        total += side_pass(expert_batch, Side::Expert, 1.0, &mut grads);
        if self.cfg.variant != RewardVariant::RedStar {
            total += side_pass(agent_batch, Side::Agent, -1.0, &mut grads);
        }
        // Map gradients on the normalized weights back to the raw weights;
        // sigma is treated as a constant of the update.
        for (k, (gw, _)) in grads.layers.iter_mut().enumerate() {
            if self.predictor.layers[k].sn_u.is_some() {
                gw.scale(1.0 / sigmas[k]);
            }
        }
        Ok((total, grads))
    }

    /// One Adam step on the adversarial loss. Returns the pre-step loss.
    pub fn update(
        &mut self,
        expert_batch: &[Vec<f64>],
        agent_batch: &[Vec<f64>],
        adam: &mut AdamState,
    ) -> Result<f64, RewardError> {
        let (l, grads) = self.reward_loss(expert_batch, agent_batch)?;
        adam_step(&mut self.predictor, &grads, adam)?;
        Ok(l)
    }

    /// Per-element raw reward before rescaling: exp(-h), or the negated
    /// potential for the w-potential variant (no exponentiation; its head
    /// is sign-unconstrained).
    pub fn raw_reward(&self, x: &[f64]) -> f64 {
        match self.cfg.variant {
            RewardVariant::WPotential => -self.potential(x, Side::Agent),
            _ => libm::exp(-self.potential(x, Side::Agent)),
        }
    }

    /// Batched reward as consumed by the critic: raw rewards followed by
    /// percentile rescaling over the batch.
    pub fn compute_reward(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, RewardError> {
        let pred_net = self.predictor_view();
        let raw: Vec<f64> = xs
            .iter()
            .map(|x| {
                let h = self.potential_with_net(&pred_net, x, Side::Agent);
                match self.cfg.variant {
                    RewardVariant::WPotential => -h,
                    _ => libm::exp(-h),
                }
            })
            .collect();
        let (out, _) = percentile_rescale(&raw)?;
        Ok(out)
    }

    /// Max difference quotient of the potential over supplied input pairs.
    /// Coincident pairs are skipped.
    pub fn empirical_potential_lipschitz(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        let pred_net = self.predictor_view();
        let mut lmax: f64 = 0.0;
        for (a, b) in pairs {
            let d = dist2(a, b);
            if d == 0.0 {
                continue;
            }
            let ha = self.potential_with_net(&pred_net, a, Side::Agent);
            let hb = self.potential_with_net(&pred_net, b, Side::Agent);
            lmax = lmax.max((ha - hb).abs() / d);
        }
        lmax
    }
}

/// Linear-interpolation percentile of an unsorted batch.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n >= 1);
    let rank = p * (n as f64 - 1.0);
    let lo = rank as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// (r - p05) / (p95 - p05 + eps) over the raw batch. Affine-invariant
/// under positive rescaling of the inputs; no moving average is kept.
pub fn percentile_rescale(raw: &[f64]) -> Result<(Vec<f64>, RewardBatchStats), RewardError> {
    if raw.len() < MIN_RESCALE_BATCH {
        return Err(RewardError::BatchTooSmall { got: raw.len(), min: MIN_RESCALE_BATCH });
    }
    let mut sorted = raw.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p05 = percentile(&sorted, 0.05);
    let p95 = percentile(&sorted, 0.95);
    let gap = p95 - p05 + RESCALE_EPS;
    let out = raw.iter().map(|r| (r - p05) / gap).collect();
    Ok((out, RewardBatchStats { p05, p95 }))
}
