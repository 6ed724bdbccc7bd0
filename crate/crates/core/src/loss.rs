//! The pairing-loss family comparing predictor and prior embeddings:
//! Huber, softmax-MSE, and the HL-Gaussian distributional loss together
//! with its analytic Lipschitz bounds.

use alloc::vec;
use alloc::vec::Vec;

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const TWO_PI: f64 = core::f64::consts::TAU;

/// Truncation-denominator padding; part of the loss semantics.
pub const HLG_EPS: f64 = 1e-6;

/// Histogram-loss (Gaussian type) configuration: support [a, b] split into
/// `n_bins` bins, target smoothing scale `sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HlgConfig {
    pub a: f64,
    pub b: f64,
    pub n_bins: usize,
    pub sigma: f64,
}

impl HlgConfig {
    pub fn new(a: f64, b: f64, n_bins: usize, sigma: f64) -> Self {
        assert!(a < b, "support must be non-degenerate");
        assert!(n_bins >= 2, "need at least two bins");
        assert!(sigma > 0.0, "sigma must be positive");
        HlgConfig { a, b, n_bins, sigma }
    }

    pub fn bin_width(&self) -> f64 {
        (self.b - self.a) / self.n_bins as f64
    }

    /// Support knot s_i = a + i * bin_width, i in [0, N].
    pub fn knot(&self, i: usize) -> f64 {
        self.a + i as f64 * self.bin_width()
    }

    /// Upper bound on the Lipschitz constant of the loss w.r.t. the logits:
    /// sqrt(1 + (C / sigma)^2) with C = bin_width * sqrt((N - 1) / (2 pi)).
    pub fn lipschitz_bound(&self) -> f64 {
        let c = self.bin_width() * libm::sqrt((self.n_bins as f64 - 1.0) / TWO_PI);
        libm::sqrt(1.0 + (c / self.sigma) * (c / self.sigma))
    }

    /// Approximate maximum per-bin probability mass: bin_width / (sigma sqrt(2 pi)).
    pub fn p_max(&self) -> f64 {
        self.bin_width() / (self.sigma * libm::sqrt(TWO_PI))
    }

    /// The p_max approximation assumes bin_width << sigma and that the
    /// support covers +-3 sigma around interior targets.
    pub fn p_max_in_validity_regime(&self) -> bool {
        self.bin_width() < self.sigma && 6.0 * self.sigma <= self.b - self.a
    }
}

/// Mean Huber kernel over dimensions, with the gradient w.r.t. `pred`.
/// 1-Lipschitz per dimension when delta = 1.
pub fn huber(pred: &[f64], target: &[f64], delta: f64) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "huber length mismatch");
    assert!(delta > 0.0);
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let e = pred[i] - target[i];
        if e.abs() <= delta {
            loss += 0.5 * e * e;
            grad[i] = e / n;
        } else {
            loss += delta * (e.abs() - 0.5 * delta);
            grad[i] = delta * e.signum() / n;
        }
    }
    (loss / n, grad)
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&v| libm::exp(v - max)).collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    out
}

/// MSE between the softmaxes of the two embeddings; gradient w.r.t. `pred_emb`.
pub fn softmax_mse(pred_emb: &[f64], target_emb: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred_emb.len(), target_emb.len());
    let m = pred_emb.len();
    assert!(m >= 2);
    let q = softmax(pred_emb);
    let p = softmax(target_emb);
    let mut loss = 0.0;
    // dL/dq_i
    let mut dq = vec![0.0; m];
    for i in 0..m {
        let d = q[i] - p[i];
        loss += d * d;
        dq[i] = 2.0 * d / m as f64;
    }
    // Chain through the softmax Jacobian: grad_j = q_j (dq_j - sum_i dq_i q_i).
    let inner: f64 = dq.iter().zip(&q).map(|(d, qi)| d * qi).sum();
    let grad = (0..m).map(|j| q[j] * (dq[j] - inner)).collect();
    (loss / m as f64, grad)
}

/// Truncated-Gaussian smoothing of a scalar target over the N bins.
/// p_i = [erf((s_{i+1}-t)/(sqrt2 sigma)) - erf((s_i-t)/(sqrt2 sigma))] / (Z + 1e-6).
pub fn hlg_transform_to_probs(t: f64, cfg: &HlgConfig) -> Vec<f64> {
    let denom = SQRT_2 * cfg.sigma;
    let mut cdf = Vec::with_capacity(cfg.n_bins + 1);
    for i in 0..=cfg.n_bins {
        cdf.push(libm::erf((cfg.knot(i) - t) / denom));
    }
    let z = cdf[cfg.n_bins] - cdf[0];
    let scale = 1.0 / (z + HLG_EPS);
    (0..cfg.n_bins).map(|i| (cdf[i + 1] - cdf[i]) * scale).collect()
}

/// One row of the HL-Gaussian loss: cross-entropy between the smoothed
/// target distribution and softmax(logits). The gradient w.r.t. the logits
/// is exactly softmax(logits) - p(t).
pub fn hlg_row(logits: &[f64], t: f64, cfg: &HlgConfig) -> (f64, Vec<f64>) {
    assert_eq!(logits.len(), cfg.n_bins, "logit row width must equal bin count");
    let p = hlg_transform_to_probs(t, cfg);
    let q = softmax(logits);
    // CE computed via log-sum-exp for stability: -sum p_i (x_i - lse).
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
    let mut loss = 0.0;
    let mut grad = vec![0.0; cfg.n_bins];
    for i in 0..cfg.n_bins {
        loss -= p[i] * (logits[i] - lse);
        grad[i] = q[i] - p[i];
    }
    (loss, grad)
}

/// Full m x N HL-Gaussian loss: mean over the m rows of the per-row
/// cross-entropy. `logits` is the predictor's flattened m*N output,
/// `targets` the m prior scalars. Gradient is w.r.t. the flattened logits.
pub fn hlg_loss(logits: &[f64], targets: &[f64], cfg: &HlgConfig) -> (f64, Vec<f64>) {
    let m = targets.len();
    assert_eq!(logits.len(), m * cfg.n_bins, "logits must be m x n_bins");
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    let inv_m = 1.0 / m as f64;
    for (r, &t) in targets.iter().enumerate() {
        let row = &logits[r * cfg.n_bins..(r + 1) * cfg.n_bins];
        let (l, g) = hlg_row(row, t, cfg);
        loss += l * inv_m;
        for (dst, gi) in grad[r * cfg.n_bins..(r + 1) * cfg.n_bins].iter_mut().zip(g) {
            *dst = gi * inv_m;
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn default_cfg(sigma: f64) -> HlgConfig {
        HlgConfig::new(-1.0, 1.0, 21, sigma)
    }

    #[test]
    fn huber_zero_on_equal_inputs() {
        let (l, g) = huber(&[0.3, -0.7], &[0.3, -0.7], 1.0);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn huber_quadratic_branch() {
        let (l, _) = huber(&[0.5], &[0.0], 1.0);
        assert!((l - 0.125).abs() < 1e-15);
    }

    #[test]
    fn huber_linear_branch() {
        let (l, _) = huber(&[2.0], &[0.0], 1.0);
        assert!((l - 1.5).abs() < 1e-15);
    }

    #[test]
    fn huber_length_mismatch_panics() {
        let r = std::panic::catch_unwind(|| huber(&[1.0], &[1.0, 2.0], 1.0));
        assert!(r.is_err());
    }

    #[test]
    fn softmax_mse_zero_on_equal_and_shifted() {
        let (l, _) = softmax_mse(&[0.1, 0.5, -0.2], &[0.1, 0.5, -0.2]);
        assert!(l < 1e-30);
        let (l2, _) = softmax_mse(&[0.1, 0.5, -0.2], &[1.1, 1.5, 0.8]);
        assert!(l2 < 1e-28, "softmax is shift invariant, got {l2}");
    }

    #[test]
    fn softmax_mse_closed_form_two_dims() {
        // softmax(0,0) = (0.5, 0.5); softmax(ln3, 0) = (0.75, 0.25).
        let (l, _) = softmax_mse(&[0.0, 0.0], &[libm::log(3.0), 0.0]);
        assert!((l - 0.0625).abs() < 1e-12, "{l}");
    }

    #[test]
    fn transform_concentrates_in_one_bin_for_tiny_sigma() {
        let cfg = HlgConfig::new(-1.0, 1.0, 21, (2.0 / 21.0) / 100.0);
        // Center of bin 10.
        let t = cfg.knot(10) + 0.5 * cfg.bin_width();
        let p = hlg_transform_to_probs(t, &cfg);
        assert!(p[10] >= 0.999, "{}", p[10]);
    }

    #[test]
    fn transform_center_bin_mass_matches_erf_closed_form() {
        let cfg = default_cfg(0.05);
        let p = hlg_transform_to_probs(0.0, &cfg);
        // Closed form: 2 erf(ds / (2 sqrt2 sigma)) / (2 erf(1/(sqrt2 sigma)) + eps).
        let u = 0.5 * cfg.bin_width() / (SQRT_2 * cfg.sigma);
        let z = 2.0 * libm::erf(1.0 / (SQRT_2 * cfg.sigma));
        let want = 2.0 * libm::erf(u) / (z + HLG_EPS);
        assert!((p[10] - want).abs() < 1e-12);
        assert!((p[10] - 0.659).abs() < 2e-3, "{}", p[10]);
    }

    #[test]
    fn transform_is_palindromic_at_midpoint() {
        let cfg = default_cfg(0.25);
        let p = hlg_transform_to_probs(0.0, &cfg);
        for i in 0..cfg.n_bins {
            assert!((p[i] - p[cfg.n_bins - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn hlg_row_at_target_probs_has_entropy_loss_and_zero_grad() {
        let cfg = default_cfg(0.25);
        let t = 0.13;
        let p = hlg_transform_to_probs(t, &cfg);
        let logits: alloc::vec::Vec<f64> = p.iter().map(|&v| libm::log(v.max(1e-300))).collect();
        let (l, g) = hlg_row(&logits, t, &cfg);
        let entropy: f64 = p.iter().map(|&v| -v * libm::log(v.max(1e-300))).sum();
        // The truncation eps makes p sum to 1 - ~1e-6, shifting the loss by
        // that much relative to the exact entropy.
        assert!((l - entropy).abs() < 1e-5);
        assert!(g.iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn hlg_uniform_logits_tiny_sigma_gives_log_n() {
        let cfg = HlgConfig::new(-1.0, 1.0, 21, 1e-4);
        let logits = alloc::vec![0.0; 21];
        let (l, _) = hlg_row(&logits, cfg.knot(10) + 0.5 * cfg.bin_width(), &cfg);
        assert!((l - libm::log(21.0)).abs() < 1e-3, "{l}");
    }

    #[test]
    fn hlg_row_gradient_matches_finite_differences() {
        let cfg = default_cfg(0.25);
        let mut r = rng::seeded(17);
        for _ in 0..50 {
            let logits: alloc::vec::Vec<f64> = (0..21).map(|_| rng::normal(&mut r)).collect();
            let t = rng::uniform_in(&mut r, -0.9, 0.9);
            let (_, g) = hlg_row(&logits, t, &cfg);
            let h = 1e-6;
            for i in 0..21 {
                let mut lp = logits.clone();
                lp[i] += h;
                let mut lm = logits.clone();
                lm[i] -= h;
                let fd = (hlg_row(&lp, t, &cfg).0 - hlg_row(&lm, t, &cfg).0) / (2.0 * h);
                let scale = fd.abs().max(g[i].abs()).max(1e-4);
                assert!((fd - g[i]).abs() / scale < 1e-4, "bin {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn lipschitz_bound_matches_reference_values() {
        assert!((default_cfg(0.25).lipschitz_bound() - 1.2091).abs() < 1e-4);
        assert!((default_cfg(0.05).lipschitz_bound() - 3.5424).abs() < 1e-4);
    }

    #[test]
    fn lipschitz_bound_tends_to_one_for_large_sigma() {
        assert!((default_cfg(1e3).lipschitz_bound() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn p_max_values_and_validity_flags() {
        let loose = default_cfg(0.25);
        assert!((loose.p_max() - 0.1520).abs() < 1e-4);
        assert!(loose.p_max_in_validity_regime());
        let tight = default_cfg(0.05);
        assert!((tight.p_max() - 0.7599).abs() < 1e-4);
        assert!(!tight.p_max_in_validity_regime());
    }

    #[test]
    fn pmax_form_of_bound_agrees_with_sigma_form() {
        for sigma in [0.05, 0.25, 0.5, 1.0] {
            let cfg = default_cfg(sigma);
            let via_pmax =
                libm::sqrt(1.0 + (cfg.n_bins as f64 - 1.0) * cfg.p_max() * cfg.p_max());
            assert!((via_pmax - cfg.lipschitz_bound()).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn transform_rows_sum_to_one_inside_support(t in -0.25f64..0.25) {
            // sigma = 0.25, so [a + 3 sigma, b - 3 sigma] = [-0.25, 0.25].
            let cfg = default_cfg(0.25);
            let p = hlg_transform_to_probs(t, &cfg);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-5);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn huber_delta_one_gradient_bounded_by_one(e in -10.0f64..10.0) {
            let (_, g) = huber(&[e], &[0.0], 1.0);
            prop_assert!(g[0].abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn percentile_free_hlg_grad_rows_sum_to_zero(
            t in -0.9f64..0.9,
            seed in 0u64..1000,
        ) {
            // softmax and p(t) both sum to one, so the row gradient sums to ~0.
            let cfg = default_cfg(0.25);
            let mut r = rng::seeded(seed);
            let logits: alloc::vec::Vec<f64> = (0..21).map(|_| rng::normal(&mut r)).collect();
            let (_, g) = hlg_row(&logits, t, &cfg);
            let s: f64 = g.iter().sum();
            prop_assert!(s.abs() < 1e-6);
        }
    }
}
