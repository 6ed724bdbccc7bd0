//! Exact earth-mover-distance oracles, empirical Lipschitz estimation, and
//! the McDiarmid-style concentration experiment. Everything here is
//! independent of the training stack so it can serve as a ground-truth
//! check on it.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::dist2;
use crate::nn::AdamState;
use crate::reward::{InputMode, PairingLoss, PotentialPair, RewardConfig, RewardVariant};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OtError {
    UnequalCounts { left: usize, right: usize },
    LengthMismatch,
    TooManyPoints { got: usize, max: usize },
    BadWeights,
    DimensionMismatch,
    DegenerateSupport,
    EmptyInput,
}

impl core::fmt::Display for OtError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OtError::UnequalCounts { left, right } => {
                write!(f, "sample counts differ: {left} vs {right}")
            }
            OtError::LengthMismatch => write!(f, "weights and points lengths differ"),
            OtError::TooManyPoints { got, max } => {
                write!(f, "{got} support points exceeds solver limit {max}")
            }
            OtError::BadWeights => write!(f, "weights must be non-negative and sum to 1"),
            OtError::DimensionMismatch => write!(f, "point dimensions differ"),
            OtError::DegenerateSupport => write!(f, "support has zero diameter"),
            OtError::EmptyInput => write!(f, "empty input"),
        }
    }
}

/// Exact W1 between two empirical 1-D measures with equal counts:
/// the mean absolute difference of order statistics.
pub fn emd_1d_exact(xs: &[f64], ys: &[f64]) -> Result<f64, OtError> {
    if xs.is_empty() {
        return Err(OtError::EmptyInput);
    }
    if xs.len() != ys.len() {
        return Err(OtError::UnequalCounts { left: xs.len(), right: ys.len() });
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = a.len() as f64;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

pub const MAX_SUPPORT: usize = 64;
const W_TOL: f64 = 1e-9;
const FLOW_TOL: f64 = 1e-13;

fn check_measure(w: &[f64], p: &[Vec<f64>]) -> Result<(), OtError> {
    if w.is_empty() {
        return Err(OtError::EmptyInput);
    }
    if w.len() != p.len() {
        return Err(OtError::LengthMismatch);
    }
    if w.len() > MAX_SUPPORT {
        return Err(OtError::TooManyPoints { got: w.len(), max: MAX_SUPPORT });
    }
    if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(OtError::BadWeights);
    }
    if (w.iter().sum::<f64>() - 1.0).abs() > W_TOL {
        return Err(OtError::BadWeights);
    }
    Ok(())
}

/// Exact transportation cost between two discrete measures under the
/// Euclidean ground metric, by successive shortest augmenting paths with
/// node potentials (an exact min-cost-flow method; no approximation).
pub fn emd_discrete_exact(
    wa: &[f64],
    pa: &[Vec<f64>],
    wb: &[f64],
    pb: &[Vec<f64>],
) -> Result<f64, OtError> {
    check_measure(wa, pa)?;
    check_measure(wb, pb)?;
    let dim = pa[0].len();
    if pa.iter().chain(pb.iter()).any(|p| p.len() != dim) {
        return Err(OtError::DimensionMismatch);
    }
    let (n, m) = (wa.len(), wb.len());
    let cost: Vec<Vec<f64>> =
        pa.iter().map(|p| pb.iter().map(|q| dist2(p, q)).collect()).collect();
    let mut supply = wa.to_vec();
    let mut demand = wb.to_vec();
    let mut flow = vec![vec![0.0; m]; n];
    // Node potentials: sources 0..n, sinks n..n+m.
    let mut pi = vec![0.0; n + m];
    loop {
        let remaining: f64 = supply.iter().sum();
        if remaining <= FLOW_TOL {
            break;
        }
        // Dijkstra over reduced costs from all sources with spare supply.
        let nv = n + m;
        let mut dist = vec![f64::INFINITY; nv];
        let mut prev = vec![usize::MAX; nv];
        let mut done = vec![false; nv];
        for i in 0..n {
            if supply[i] > FLOW_TOL {
                dist[i] = 0.0;
            }
        }
        for _ in 0..nv {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nv {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < n {
                for j in 0..m {
                    let rc = cost[u][j] + pi[u] - pi[n + j];
                    if dist[u] + rc < dist[n + j] - 1e-15 {
                        dist[n + j] = dist[u] + rc;
                        prev[n + j] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if flow[i][j] > FLOW_TOL {
                        let rc = -cost[i][j] + pi[n + j] - pi[i];
                        if dist[u] + rc < dist[i] - 1e-15 {
                            dist[i] = dist[u] + rc;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        // Nearest sink with spare demand.
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..m {
            if demand[j] > FLOW_TOL && dist[n + j] < best {
                best = dist[n + j];
                target = n + j;
            }
        }
        if target == usize::MAX {
            // Remaining mass below tolerance on one side.
            break;
        }
        // Walk the path back to its source, finding the bottleneck.
        let mut bottleneck = demand[target - n];
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= n {
                // Backward arc sink u -> source v carries existing flow.
                bottleneck = bottleneck.min(flow[v][u - n]);
            }
            v = u;
        }
        bottleneck = bottleneck.min(supply[v]);
        // Apply the augmentation.
        let source = v;
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < n {
                flow[u][v - n] += bottleneck;
            } else {
                flow[v][u - n] -= bottleneck;
            }
            v = u;
        }
        supply[source] -= bottleneck;
        demand[target - n] -= bottleneck;
        // Johnson-style potential update keeps reduced costs non-negative.
        let dt = dist[target];
        for v in 0..nv {
            if dist[v].is_finite() {
                pi[v] += dist[v].min(dt);
            } else {
                pi[v] += dt;
            }
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            total += flow[i][j] * cost[i][j];
        }
    }
    Ok(total)
}

/// Brute-force transportation optimum for tiny instances (at most 4 points
/// per side): enumerate every spanning-tree basis of the bipartite graph,
/// solve its unique flow, keep the cheapest feasible one. Test oracle only.
pub fn emd_discrete_bruteforce(
    wa: &[f64],
    pa: &[Vec<f64>],
    wb: &[f64],
    pb: &[Vec<f64>],
) -> Result<f64, OtError> {
    check_measure(wa, pa)?;
    check_measure(wb, pb)?;
    let (n, m) = (wa.len(), wb.len());
    if n > 4 || m > 4 {
        return Err(OtError::TooManyPoints { got: n.max(m), max: 4 });
    }
    let cost: Vec<Vec<f64>> =
        pa.iter().map(|p| pb.iter().map(|q| dist2(p, q)).collect()).collect();
    let edges: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let ne = edges.len();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << ne) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..ne)
            .filter(|e| mask & (1 << e) != 0)
            .map(|e| edges[e])
            .collect();
        // Leaf elimination solves the tree flow; a cycle (no leaf while
        // edges remain) means this is not a basis.
        let mut bal_a = wa.to_vec();
        let mut bal_b = wb.to_vec();
        let mut alive: Vec<bool> = vec![true; k];
        let mut deg_a = vec![0usize; n];
        let mut deg_b = vec![0usize; m];
        for &(i, j) in &chosen {
            deg_a[i] += 1;
            deg_b[j] += 1;
        }
        if deg_a.iter().any(|&d| d == 0) || deg_b.iter().any(|&d| d == 0) {
            continue;
        }
        let mut total = 0.0;
        let mut feasible = true;
        for _ in 0..k {
            let mut leaf_edge = usize::MAX;
            for (e, &(i, j)) in chosen.iter().enumerate() {
                if alive[e] && (deg_a[i] == 1 || deg_b[j] == 1) {
                    leaf_edge = e;
                    break;
                }
            }
            if leaf_edge == usize::MAX {
                feasible = false; // cycle: not a tree
                break;
            }
            let (i, j) = chosen[leaf_edge];
            let f = if deg_a[i] == 1 { bal_a[i] } else { bal_b[j] };
            if f < -1e-12 {
                feasible = false;
                break;
            }
            total += f.max(0.0) * cost[i][j];
            bal_a[i] -= f;
            bal_b[j] -= f;
            alive[leaf_edge] = false;
            deg_a[i] -= 1;
            deg_b[j] -= 1;
        }
        if feasible && total < best {
            best = total;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(OtError::BadWeights)
    }
}

/// Max difference quotient of `f` over sampled pairs: independent draws
/// plus local perturbations at scales from 1e-4 to 1, which catch steep
/// short-range behavior a global pair sample would miss.
pub fn empirical_lipschitz<F, S>(f: F, mut sample: S, n_pairs: usize, rng: &mut Rng) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    S: FnMut(&mut Rng) -> Vec<f64>,
{
    assert!(n_pairs >= 1);
    const SCALES: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let mut lmax: f64 = 0.0;
    let consider = |a: &[f64], b: &[f64], lmax: &mut f64| {
        let d = dist2(a, b);
        if d > 0.0 {
            let q = dist2(&f(a), &f(b)) / d;
            if q > *lmax {
                *lmax = q;
            }
        }
    };
    for k in 0..n_pairs {
        let x = sample(rng);
        let y = sample(rng);
        consider(&x, &y, &mut lmax);
        let scale = SCALES[k % SCALES.len()];
        let z: Vec<f64> = x.iter().map(|v| v + scale * rng::normal(rng)).collect();
        consider(&x, &z, &mut lmax);
    }
    lmax
}

/// exp(-eps^2 n / (Lambda^2 diam^2)); the Lambda = 1 corollary is just
/// this with Lambda = 1.
pub fn mcdiarmid_bound(lambda: f64, diam: f64, n: usize, epsilon: f64) -> f64 {
    assert!(lambda > 0.0 && diam.is_finite() && diam > 0.0);
    libm::exp(-(epsilon * epsilon) * n as f64 / (lambda * lambda * diam * diam))
}

#[derive(Clone, Copy, Debug)]
pub struct ConcentrationReport {
    pub n: usize,
    pub epsilon: f64,
    pub lambda_used: f64,
    pub diameter: f64,
    pub bound: f64,
    pub empirical_tail: f64,
    pub trials: usize,
}

/// Monte-Carlo check of the concentration bound for a fixed potential h:
/// draws `trials` pairs of n-sample sets, compares the empirical loss
/// deviation tail against the closed-form bound. The reference loss L is
/// estimated once from `ref_samples` draws per side.
#[allow(clippy::too_many_arguments)]
pub fn concentration_experiment<H, SE, SA>(
    h: H,
    mut sample_e: SE,
    mut sample_a: SA,
    n: usize,
    epsilon: f64,
    trials: usize,
    lambda: f64,
    diameter: f64,
    ref_samples: usize,
    rng: &mut Rng,
) -> Result<ConcentrationReport, OtError>
where
    H: Fn(&[f64]) -> f64,
    SE: FnMut(&mut Rng) -> Vec<f64>,
    SA: FnMut(&mut Rng) -> Vec<f64>,
{
    if diameter <= 0.0 {
        return Err(OtError::DegenerateSupport);
    }
    assert!(n >= 1 && trials >= 1 && ref_samples >= 1);
    let mut l_ref = 0.0;
    for _ in 0..ref_samples {
        l_ref += h(&sample_e(rng)) / ref_samples as f64;
        l_ref -= h(&sample_a(rng)) / ref_samples as f64;
    }
    let mut exceed = 0usize;
    for _ in 0..trials {
        let mut l_hat = 0.0;
        for _ in 0..n {
            l_hat += h(&sample_e(rng)) / n as f64;
            l_hat -= h(&sample_a(rng)) / n as f64;
        }
        if (l_hat - l_ref).abs() >= epsilon {
            exceed += 1;
        }
    }
    Ok(ConcentrationReport {
        n,
        epsilon,
        lambda_used: lambda,
        diameter,
        bound: mcdiarmid_bound(lambda, diameter, n, epsilon),
        empirical_tail: exceed as f64 / trials as f64,
        trials,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct DualGapReport {
    /// -L at the best training iterate; the learned lower estimate of the
    /// distance between the two sample sets.
    pub learned: f64,
    pub exact_emd: f64,
    /// learned / exact_emd (infinite when the exact distance is zero).
    pub ratio: f64,
    pub converged: bool,
    /// Empirical Lipschitz constant of the trained potential.
    pub lipschitz_hat: f64,
}

/// Train a spectrally normalized scalar potential to minimize
/// mean_expert h - mean_agent h on two fixed sample sets and compare the
/// attained value against the exact EMD oracle.
pub fn dual_gap_check(
    expert: &[Vec<f64>],
    agent: &[Vec<f64>],
    train_budget: usize,
    hidden: usize,
    rng: &mut Rng,
) -> Result<DualGapReport, OtError> {
    if expert.is_empty() || agent.is_empty() {
        return Err(OtError::EmptyInput);
    }
    let dim = expert[0].len();
    let cfg = RewardConfig {
        input_dim: dim,
        hidden,
        embed_dim: 1,
        pairing: PairingLoss::Huber { delta: 1.0 },
        variant: RewardVariant::WPotential,
        input_mode: InputMode::StateOnly,
        output_rescale: 5.0,
    };
    let mut pair = PotentialPair::new(cfg, rng);
    let mut adam = AdamState::new(&pair.predictor, 1e-3);
    let mut best = f64::INFINITY;
    let mut best_at = 0;
    for it in 0..train_budget {
        let l = pair.update(expert, agent, &mut adam).expect("dual training step");
        if l < best {
            best = l;
            best_at = it;
        }
    }
    // Converged if the best value stopped improving well before the budget
    // ran out.
    let converged = train_budget == 0 || best_at < train_budget.saturating_sub(train_budget / 10);
    let wa = vec![1.0 / expert.len() as f64; expert.len()];
    let wb = vec![1.0 / agent.len() as f64; agent.len()];
    let exact = emd_discrete_exact(&wa, expert, &wb, agent)?;
    let learned = -best;
    let mut pairs = Vec::new();
    for (i, x) in expert.iter().enumerate() {
        let y = &agent[i % agent.len()];
        pairs.push((x.clone(), y.clone()));
        let mut z = x.clone();
        for v in &mut z {
            *v += 0.01 * rng::normal(rng);
        }
        pairs.push((x.clone(), z));
    }
    let lipschitz_hat = pair.empirical_potential_lipschitz(&pairs);
    Ok(DualGapReport {
        learned,
        exact_emd: exact,
        ratio: if exact > 0.0 { learned / exact } else { f64::INFINITY },
        converged,
        lipschitz_hat,
    })
}
