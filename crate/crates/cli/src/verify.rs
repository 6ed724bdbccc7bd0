//! The `verify` subcommand: a fast battery of bound and oracle checks.
//! Each check returns pass/fail with a detail string; any failure makes
//! the command exit with the verification status code.

use ngt_core::linalg::{max_singular_value, Mat};
use ngt_core::loss::{hlg_row, hlg_transform_to_probs, softmax, HlgConfig};
use ngt_core::nn::{orthogonal_init, spectral_normalize};
use ngt_core::ot;
use ngt_core::reward::{InputMode, PairingLoss, PotentialPair, RewardConfig, RewardVariant};
use ngt_core::rng;

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

pub fn run_battery(inject_sn_fault: bool) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(hlg_bound_values());
    out.push(hlg_gradient_identity());
    out.push(sn_singular_value(inject_sn_fault));
    out.push(orthogonal_gram());
    out.push(emd_oracles_agree());
    out.push(concentration_tail());
    out.push(potential_composition());
    out
}

/// Closed-form Lipschitz bounds for the distributional loss at the two
/// reference smoothing scales.
fn hlg_bound_values() -> Check {
    let b1 = HlgConfig::new(-1.0, 1.0, 21, 0.25).lipschitz_bound();
    let b2 = HlgConfig::new(-1.0, 1.0, 21, 0.05).lipschitz_bound();
    let pass = (b1 - 1.2091).abs() < 1e-4 && (b2 - 3.5424).abs() < 1e-4;
    check(
        "hlg_lipschitz_bound_values",
        pass,
        format!("sigma=0.25 -> {b1:.4} (want 1.2091), sigma=0.05 -> {b2:.4} (want 3.5424)"),
    )
}

/// Per-row analytic gradient must equal softmax(logits) - p(target), and
/// match central finite differences.
fn hlg_gradient_identity() -> Check {
    let cfg = HlgConfig::new(-1.0, 1.0, 21, 0.25);
    let mut r = rng::seeded(101);
    let mut max_id_err: f64 = 0.0;
    let mut max_fd_err: f64 = 0.0;
    for _ in 0..100 {
        let logits: Vec<f64> = (0..cfg.n_bins).map(|_| 2.0 * rng::normal(&mut r)).collect();
        let t = rng::uniform_in(&mut r, -1.0, 1.0);
        let (_, grad) = hlg_row(&logits, t, &cfg);
        let q = softmax(&logits);
        let p = hlg_transform_to_probs(t, &cfg);
        for i in 0..cfg.n_bins {
            max_id_err = max_id_err.max((grad[i] - (q[i] - p[i])).abs());
        }
        let h = 1e-5;
        for i in (0..cfg.n_bins).step_by(5) {
            let mut lp = logits.clone();
            lp[i] += h;
            let mut lm = logits.clone();
            lm[i] -= h;
            let fd = (hlg_row(&lp, t, &cfg).0 - hlg_row(&lm, t, &cfg).0) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs()).max(1e-6);
            max_fd_err = max_fd_err.max((fd - grad[i]).abs() / scale);
        }
    }
    check(
        "hlg_gradient_identity",
        max_id_err < 1e-12 && max_fd_err < 1e-3,
        format!("identity err {max_id_err:.2e} (tol 1e-12), fd rel err {max_fd_err:.2e} (tol 1e-3)"),
    )
}

/// Normalized layers must have true max singular value in [0.999, 1.001]
/// per an eigenvalue-decomposition oracle. The fault injection skips
/// normalization, which must make this check fail.
fn sn_singular_value(inject_fault: bool) -> Check {
    let mut r = rng::seeded(102);
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi: f64 = 0.0;
    for _ in 0..10 {
        let mut w = Mat::zeros(8, 6);
        for v in &mut w.data {
            *v = 1.5 * rng::normal(&mut r);
        }
        let m = if inject_fault {
            w.clone()
        } else {
            let u: Vec<f64> = (0..8).map(|_| rng::normal(&mut r)).collect();
            spectral_normalize(&w, &u, 50).normalized
        };
        let s = max_singular_value(&m);
        worst_lo = worst_lo.min(s);
        worst_hi = worst_hi.max(s);
    }
    check(
        "spectral_normalization_singular_value",
        (0.999..=1.001).contains(&worst_lo) && (0.999..=1.001).contains(&worst_hi),
        format!("singular values in [{worst_lo:.6}, {worst_hi:.6}] (want within [0.999, 1.001])"),
    )
}

fn orthogonal_gram() -> Check {
    let mut r = rng::seeded(103);
    let mut worst: f64 = 0.0;
    for &(rows, cols) in &[(6usize, 6usize), (10, 4), (3, 9)] {
        let w = orthogonal_init(rows, cols, 1.0, &mut r);
        let g = if cols <= rows { w.transpose().matmul(&w) } else { w.matmul(&w.transpose()) };
        let k = g.rows;
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - want).abs());
            }
        }
    }
    check(
        "orthogonal_init_gram_identity",
        worst < 1e-6,
        format!("max Gram deviation from I: {worst:.2e} (tol 1e-6)"),
    )
}

fn emd_oracles_agree() -> Check {
    let mut r = rng::seeded(104);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = 2 + trial % 12;
        let xs: Vec<f64> = (0..n).map(|_| rng::uniform_in(&mut r, -2.0, 2.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng::uniform_in(&mut r, -2.0, 2.0)).collect();
        let d1 = ot::emd_1d_exact(&xs, &ys).unwrap();
        let w = vec![1.0 / n as f64; n];
        let pa: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let pb: Vec<Vec<f64>> = ys.iter().map(|&y| vec![y]).collect();
        let d2 = ot::emd_discrete_exact(&w, &pa, &w, &pb).unwrap();
        worst = worst.max((d1 - d2).abs());
    }
    let mut worst_bf: f64 = 0.0;
    for _ in 0..10 {
        let n = 3;
        let mut wa: Vec<f64> = (0..n).map(|_| rng::uniform_in(&mut r, 0.2, 1.0)).collect();
        let s: f64 = wa.iter().sum();
        wa.iter_mut().for_each(|v| *v /= s);
        let mut wb: Vec<f64> = (0..n).map(|_| rng::uniform_in(&mut r, 0.2, 1.0)).collect();
        let s: f64 = wb.iter().sum();
        wb.iter_mut().for_each(|v| *v /= s);
        let pa: Vec<Vec<f64>> =
            (0..n).map(|_| (0..2).map(|_| rng::normal(&mut r)).collect()).collect();
        let pb: Vec<Vec<f64>> =
            (0..n).map(|_| (0..2).map(|_| rng::normal(&mut r)).collect()).collect();
        let lp = ot::emd_discrete_exact(&wa, &pa, &wb, &pb).unwrap();
        let bf = ot::emd_discrete_bruteforce(&wa, &pa, &wb, &pb).unwrap();
        worst_bf = worst_bf.max((lp - bf).abs());
    }
    check(
        "emd_oracles_agree",
        worst < 1e-9 && worst_bf < 1e-9,
        format!("1d-vs-lp max err {worst:.2e}, lp-vs-bruteforce max err {worst_bf:.2e} (tol 1e-9)"),
    )
}

fn concentration_tail() -> Check {
    let mut r = rng::seeded(105);
    let trials = 2000;
    let rep = ot::concentration_experiment(
        |x: &[f64]| x[0],
        |r: &mut rng::Rng| vec![rng::uniform(r)],
        |r: &mut rng::Rng| vec![rng::uniform(r)],
        50,
        0.3,
        trials,
        1.0,
        1.0,
        100_000,
        &mut r,
    )
    .unwrap();
    let slack = 10.0 / (trials as f64).sqrt();
    check(
        "concentration_tail_bound",
        rep.empirical_tail <= rep.bound + slack,
        format!(
            "tail {:.4} <= bound {:.4} + slack {:.4}",
            rep.empirical_tail, rep.bound, slack
        ),
    )
}

/// Composition bound on the learned potential: its empirical Lipschitz
/// constant may not exceed the sum of the two embedding constants (times a
/// small tolerance factor), since the Huber pairing with delta 1 is
/// 1-Lipschitz in the embedding difference.
fn potential_composition() -> Check {
    let mut r = rng::seeded(106);
    let cfg = RewardConfig {
        input_dim: 3,
        hidden: 32,
        embed_dim: 8,
        pairing: PairingLoss::Huber { delta: 1.0 },
        variant: RewardVariant::Ngt,
        input_mode: InputMode::StateOnly,
        output_rescale: 5.0,
    };
    let pair = PotentialPair::new(cfg, &mut r);
    let sampler = |r: &mut rng::Rng| -> Vec<f64> {
        (0..3).map(|_| rng::uniform_in(r, -2.0, 2.0)).collect()
    };
    let lam_prior = ot::empirical_lipschitz(
        |x: &[f64]| pair.prior_embedding(x),
        sampler,
        20_000,
        &mut r,
    );
    let view = pair.predictor_view();
    let lam_pred = ot::empirical_lipschitz(
        |x: &[f64]| view.eval(x).iter().map(|v| v * 5.0).collect(),
        sampler,
        20_000,
        &mut r,
    );
    let mut pairs = Vec::new();
    for _ in 0..20_000 {
        let a = sampler(&mut r);
        let mut b = a.clone();
        for v in &mut b {
            *v += 0.05 * rng::normal(&mut r);
        }
        pairs.push((a, b));
    }
    let lam_h = pair.empirical_potential_lipschitz(&pairs);
    let bound = 1.0 * (lam_pred + lam_prior) * 1.05;
    check(
        "potential_composition_bound",
        lam_h <= bound,
        format!("potential {lam_h:.4} <= (pred {lam_pred:.4} + prior {lam_prior:.4}) * 1.05"),
    )
}
