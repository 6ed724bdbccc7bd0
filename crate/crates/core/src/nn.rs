//! Minimal dense-network engine: exact analytic gradients, orthogonal
//! initialization, spectral normalization, and Adam. This is the whole
//! parameter machinery behind the actors, critics, and reward networks.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{norm2, Mat};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    /// Leak 0.05 for the reward networks.
    LeakyRelu(f64),
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(leak) => {
                if z > 0.0 {
                    z
                } else {
                    leak * z
                }
            }
            Activation::Tanh => libm::tanh(z),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(leak) => {
                if z > 0.0 {
                    1.0
                } else {
                    leak
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Layer {
    /// [out x in]
    pub w: Mat,
    pub b: Vec<f64>,
    pub act: Activation,
    /// Persistent left singular vector estimate; present iff spectral
    /// normalization is enabled for this layer.
    pub sn_u: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NnError {
    DimensionMismatch { expected: usize, got: usize },
    NonFiniteGradient,
}

impl core::fmt::Display for NnError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NnError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            NnError::NonFiniteGradient => write!(f, "non-finite gradient"),
        }
    }
}

/// Orthogonal (norm-preserving) initialization: QR of a Gaussian draw,
/// sign-corrected so R's diagonal is positive, scaled by `gain`.
pub fn orthogonal_init(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Mat {
    assert!(rows >= 1 && cols >= 1);
    let (m, n, transpose) = if cols <= rows { (rows, cols, false) } else { (cols, rows, true) };
    let mut g = Mat::zeros(m, n);
    for v in &mut g.data {
        *v = rng::normal(rng);
    }
    let q = crate::linalg::qr_thin_q(&g);
    let mut w = if transpose { q.transpose() } else { q };
    w.scale(gain);
    w
}

pub struct SnOutcome {
    pub normalized: Mat,
    pub u: Vec<f64>,
    pub sigma: f64,
    /// Set when the matrix is (numerically) zero; the input is returned
    /// unchanged in that case.
    pub degenerate: bool,
}

/// Divide a weight matrix by its power-iteration estimate of the largest
/// singular value.
pub fn spectral_normalize(weight: &Mat, u: &[f64], power_iters: usize) -> SnOutcome {
    assert_eq!(u.len(), weight.rows, "u must match weight rows");
    assert!(power_iters >= 1);
    if weight.frobenius_norm() == 0.0 {
        return SnOutcome { normalized: weight.clone(), u: u.to_vec(), sigma: 0.0, degenerate: true };
    }
    let mut u = u.to_vec();
    let mut v = vec![0.0; weight.cols];
    for _ in 0..power_iters {
        v = weight.matvec_t(&u);
        let vn = norm2(&v);
        if vn > 0.0 {
            for x in &mut v {
                *x /= vn;
            }
        }
        u = weight.matvec(&v);
        let un = norm2(&u);
        if un > 0.0 {
            for x in &mut u {
                *x /= un;
            }
        }
    }
    // sigma = u^T W v with unit u, v.
    let wv = weight.matvec(&v);
    let sigma = crate::linalg::dot(&u, &wv);
    let sigma = sigma.abs();
    if sigma == 0.0 {
        return SnOutcome { normalized: weight.clone(), u, sigma: 0.0, degenerate: true };
    }
    let mut normalized = weight.clone();
    normalized.scale(1.0 / sigma);
    SnOutcome { normalized, u, sigma, degenerate: false }
}

/// Per-layer pre-activations and inputs from one forward pass.
pub struct ForwardCache {
    /// Input to each layer (x for the first, post-activation after).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation z = W x + b per layer.
    pub preacts: Vec<Vec<f64>>,
}

/// Parameter-shaped gradient container.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<(Mat, Vec<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| (Mat::zeros(l.w.rows, l.w.cols), vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &MlpGrads, s: f64) {
        for ((gw, gb), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, b) in gw.data.iter_mut().zip(&ow.data) {
                *a += s * b;
            }
            for (a, b) in gb.iter_mut().zip(ob) {
                *a += s * b;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (gw, gb) in &mut self.layers {
            gw.scale(s);
            for v in gb.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for (gw, gb) in &self.layers {
            acc += gw.data.iter().map(|v| v * v).sum::<f64>();
            acc += gb.iter().map(|v| v * v).sum::<f64>();
        }
        libm::sqrt(acc)
    }

    /// Global norm clipping; returns the pre-clip norm.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|(gw, gb)| {
            gw.data.iter().all(|v| v.is_finite()) && gb.iter().all(|v| v.is_finite())
        })
    }
}

impl Mlp {
    /// Build a network from layer sizes. `dims` has len L+1; `acts` and
    /// `gains` have len L. `sn` enables spectral normalization on every
    /// linear layer.
    pub fn new(dims: &[usize], acts: &[Activation], gains: &[f64], sn: bool, rng: &mut Rng) -> Mlp {
        assert!(dims.len() >= 2);
        assert_eq!(acts.len(), dims.len() - 1);
        assert_eq!(gains.len(), dims.len() - 1);
        let mut layers = Vec::with_capacity(acts.len());
        for k in 0..acts.len() {
            let (rows, cols) = (dims[k + 1], dims[k]);
            let w = orthogonal_init(rows, cols, gains[k], rng);
            let sn_u = if sn {
                let mut u: Vec<f64> = (0..rows).map(|_| rng::normal(rng)).collect();
                let n = norm2(&u);
                for v in &mut u {
                    *v /= n;
                }
                Some(u)
            } else {
                None
            };
            layers.push(Layer { w, b: vec![0.0; rows], act: acts[k], sn_u });
        }
        Mlp { layers }
    }

    /// Two hidden layers of a given width; the default body everywhere.
    pub fn mlp2(
        input: usize,
        hidden: usize,
        output: usize,
        hidden_act: Activation,
        out_act: Activation,
        out_gain: f64,
        sn: bool,
        rng: &mut Rng,
    ) -> Mlp {
        Mlp::new(
            &[input, hidden, hidden, output],
            &[hidden_act, hidden_act, out_act],
            &[1.0, 1.0, out_gain],
            sn,
            rng,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.rows
    }

    /// Spectrally normalized view of the network. Updates the stored power
    /// iteration vectors in place; layers without SN pass through with
    /// sigma 1. Returns the per-layer sigma estimates alongside.
    pub fn normalized(&mut self, power_iters: usize) -> (Mlp, Vec<f64>) {
        let mut sigmas = Vec::with_capacity(self.layers.len());
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            match &mut layer.sn_u {
                Some(u) => {
                    let out = spectral_normalize(&layer.w, u, power_iters);
                    *u = out.u.clone();
                    sigmas.push(if out.degenerate { 1.0 } else { out.sigma });
                    layers.push(Layer {
                        w: out.normalized,
                        b: layer.b.clone(),
                        act: layer.act,
                        sn_u: Some(out.u),
                    });
                }
                None => {
                    sigmas.push(1.0);
                    layers.push(layer.clone());
                }
            }
        }
        (Mlp { layers }, sigmas)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            inputs.push(h.clone());
            let mut z = layer.w.matvec(&h);
            for (zi, bi) in z.iter_mut().zip(&layer.b) {
                *zi += bi;
            }
            h = z.iter().map(|&zi| layer.act.apply(zi)).collect();
            preacts.push(z);
        }
        Ok((h, ForwardCache { inputs, preacts }))
    }

    /// Output only, no cache.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.w.matvec(&h);
            for (zi, bi) in z.iter_mut().zip(&layer.b) {
                *zi += bi;
            }
            for zi in &mut z {
                *zi = layer.act.apply(*zi);
            }
            h = z;
        }
        h
    }

    /// Exact analytic gradients for the parameters used in the matching
    /// forward pass, plus the gradient w.r.t. the input.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> (MlpGrads, Vec<f64>) {
        assert_eq!(cache.inputs.len(), self.layers.len(), "stale cache");
        assert_eq!(output_grad.len(), self.output_dim());
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = output_grad.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.preacts[k];
            let input = &cache.inputs[k];
            // delta <- dL/dz
            for (d, &zi) in delta.iter_mut().zip(z) {
                *d *= layer.act.deriv(zi);
            }
            let (gw, gb) = &mut grads.layers[k];
            for i in 0..layer.w.rows {
                let di = delta[i];
                gb[i] += di;
                let row = &mut gw.data[i * layer.w.cols..(i + 1) * layer.w.cols];
                for (g, &xj) in row.iter_mut().zip(input) {
                    *g += di * xj;
                }
            }
            delta = layer.w.matvec_t(&delta);
        }
        (grads, delta)
    }

    /// FNV-1a over the raw bit patterns of all parameters; used to assert
    /// frozenness of the prior network.
    pub fn params_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for layer in &self.layers {
            for &v in &layer.w.data {
                eat(v);
            }
            for &v in &layer.b {
                eat(v);
            }
        }
        h
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: MlpGrads,
    pub v: MlpGrads,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(mlp: &Mlp, lr: f64) -> Self {
        AdamState {
            m: MlpGrads::zeros_like(mlp),
            v: MlpGrads::zeros_like(mlp),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Standard bias-corrected Adam update. Rejects non-finite gradients.
pub fn adam_step(params: &mut Mlp, grads: &MlpGrads, state: &mut AdamState) -> Result<(), NnError> {
    if !grads.is_finite() {
        return Err(NnError::NonFiniteGradient);
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - libm::pow(state.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, t as f64);
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[k];
        let (mw, mb) = &mut state.m.layers[k];
        let (vw, vb) = &mut state.v.layers[k];
        for i in 0..layer.w.data.len() {
            let g = gw.data[i];
            mw.data[i] = state.beta1 * mw.data[i] + (1.0 - state.beta1) * g;
            vw.data[i] = state.beta2 * vw.data[i] + (1.0 - state.beta2) * g * g;
            let mhat = mw.data[i] / bc1;
            let vhat = vw.data[i] / bc2;
            layer.w.data[i] -= state.lr * mhat / (libm::sqrt(vhat) + state.eps);
        }
        for i in 0..layer.b.len() {
            let g = gb[i];
            mb[i] = state.beta1 * mb[i] + (1.0 - state.beta1) * g;
            vb[i] = state.beta2 * vb[i] + (1.0 - state.beta2) * g * g;
            let mhat = mb[i] / bc1;
            let vhat = vb[i] / bc2;
            layer.b[i] -= state.lr * mhat / (libm::sqrt(vhat) + state.eps);
        }
    }
    Ok(())
}

/// Scalar Adam, for the SAC temperature.
#[derive(Clone, Debug)]
pub struct ScalarAdam {
    pub m: f64,
    pub v: f64,
    pub t: u64,
    pub lr: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        ScalarAdam { m: 0.0, v: 0.0, t: 0, lr }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        self.t += 1;
        self.m = 0.9 * self.m + 0.1 * grad;
        self.v = 0.999 * self.v + 0.001 * grad * grad;
        let mhat = self.m / (1.0 - libm::pow(0.9, self.t as f64));
        let vhat = self.v / (1.0 - libm::pow(0.999, self.t as f64));
        *param -= self.lr * mhat / (libm::sqrt(vhat) + 1e-8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_singular_value;
    use crate::rng;
    use alloc::vec::Vec;

    #[test]
    fn orthogonal_init_gram_is_identity() {
        let mut r = rng::seeded(0);
        let w = orthogonal_init(3, 3, 1.0, &mut r);
        let g = w.transpose().matmul(&w);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn orthogonal_init_degenerate_1x1() {
        let mut r = rng::seeded(1);
        let w = orthogonal_init(1, 1, 1.0, &mut r);
        assert!((w.get(0, 0).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_init_tall_columns_orthonormal() {
        let mut r = rng::seeded(7);
        let w = orthogonal_init(4, 2, 1.0, &mut r);
        let g = w.transpose().matmul(&w);
        assert!((g.get(0, 0) - 1.0).abs() < 1e-6);
        assert!((g.get(1, 1) - 1.0).abs() < 1e-6);
        assert!(g.get(0, 1).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_init_wide_rows_orthonormal() {
        let mut r = rng::seeded(8);
        let w = orthogonal_init(2, 5, 2.0, &mut r);
        let g = w.matmul(&w.transpose());
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 4.0 } else { 0.0 };
                assert!((g.get(i, j) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn spectral_normalize_diagonal() {
        let w = Mat::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]);
        let out = spectral_normalize(&w, &[1.0, 0.0], 30);
        assert!(!out.degenerate);
        assert!((out.normalized.get(0, 0) - 1.0).abs() < 1e-9);
        assert!((out.normalized.get(1, 1) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_normalize_identity_is_noop() {
        let w = Mat::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let out = spectral_normalize(&w, &[0.6, 0.8], 30);
        assert!((out.sigma - 1.0).abs() < 1e-9);
        for (a, b) in out.normalized.data.iter().zip(&w.data) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn spectral_normalize_zero_matrix_flags_degenerate() {
        let w = Mat::zeros(3, 3);
        let out = spectral_normalize(&w, &[1.0, 0.0, 0.0], 5);
        assert!(out.degenerate);
        assert_eq!(out.normalized.data, w.data);
    }

    #[test]
    fn spectral_normalize_random_matches_svd_oracle() {
        let mut r = rng::seeded(13);
        let mut w = Mat::zeros(8, 8);
        for v in &mut w.data {
            *v = rng::normal(&mut r);
        }
        let mut u: Vec<f64> = (0..8).map(|_| rng::normal(&mut r)).collect();
        let n = norm2(&u);
        for v in &mut u {
            *v /= n;
        }
        let out = spectral_normalize(&w, &u, 50);
        let smax = max_singular_value(&out.normalized);
        assert!((0.999..=1.001).contains(&smax), "smax {smax}");
    }

    #[test]
    fn forward_identity_net() {
        let mut net = Mlp::new(
            &[2, 2],
            &[Activation::Identity],
            &[1.0],
            false,
            &mut rng::seeded(0),
        );
        net.layers[0].w = Mat::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (y, _) = net.forward(&[0.3, -0.7]).unwrap();
        assert_eq!(y, alloc::vec![0.3, -0.7]);
    }

    #[test]
    fn forward_single_relu_layer() {
        let mut net =
            Mlp::new(&[1, 1], &[Activation::Relu], &[1.0], false, &mut rng::seeded(0));
        net.layers[0].w = Mat::from_rows(&[&[2.0]]);
        net.layers[0].b = alloc::vec![1.0];
        let (y, _) = net.forward(&[3.0]).unwrap();
        assert!((y[0] - 7.0).abs() < 1e-15);
    }

    #[test]
    fn forward_leaky_relu_negative_branch() {
        let mut net =
            Mlp::new(&[1, 1], &[Activation::LeakyRelu(0.05)], &[1.0], false, &mut rng::seeded(0));
        net.layers[0].w = Mat::from_rows(&[&[1.0]]);
        net.layers[0].b = alloc::vec![0.0];
        let (y, _) = net.forward(&[-2.0]).unwrap();
        assert!((y[0] - (-0.1)).abs() < 1e-15);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let net = Mlp::new(&[3, 2], &[Activation::Tanh], &[1.0], false, &mut rng::seeded(0));
        assert!(matches!(net.forward(&[1.0]), Err(NnError::DimensionMismatch { .. })));
    }

    #[test]
    fn backward_linear_weight_grad_is_input() {
        let mut net =
            Mlp::new(&[2, 1], &[Activation::Identity], &[1.0], false, &mut rng::seeded(0));
        net.layers[0].w = Mat::from_rows(&[&[0.5, -0.25]]);
        let x = [2.0, 3.0];
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, _) = net.backward(&cache, &[1.0]);
        assert!((grads.layers[0].0.get(0, 0) - 2.0).abs() < 1e-15);
        assert!((grads.layers[0].0.get(0, 1) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn backward_tanh_at_zero_input_grad_is_wt_outgrad() {
        let mut net = Mlp::new(&[2, 2], &[Activation::Tanh], &[1.0], false, &mut rng::seeded(0));
        net.layers[0].w = Mat::from_rows(&[&[0.3, -0.1], &[0.2, 0.9]]);
        net.layers[0].b = alloc::vec![0.0, 0.0];
        let (_, cache) = net.forward(&[0.0, 0.0]).unwrap();
        let dy = [0.4, -1.2];
        let (_, dx) = net.backward(&cache, &dy);
        let want = net.layers[0].w.matvec_t(&dy);
        for (a, b) in dx.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn finite_diff_check(net: &mut Mlp, x: &[f64]) {
        // Scalar loss: sum of outputs.
        let (y0, cache) = net.forward(x).unwrap();
        let dy = alloc::vec![1.0; y0.len()];
        let (grads, dx) = net.backward(&cache, &dy);
        let h = 1e-5;
        for k in 0..net.layers.len() {
            for idx in 0..net.layers[k].w.data.len() {
                let orig = net.layers[k].w.data[idx];
                net.layers[k].w.data[idx] = orig + h;
                let lp: f64 = net.eval(x).iter().sum();
                net.layers[k].w.data[idx] = orig - h;
                let lm: f64 = net.eval(x).iter().sum();
                net.layers[k].w.data[idx] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads.layers[k].0.data[idx];
                let scale = fd.abs().max(an.abs()).max(1e-3);
                assert!(
                    (fd - an).abs() / scale < 1e-4,
                    "layer {k} w[{idx}]: fd {fd} vs analytic {an}"
                );
            }
            for idx in 0..net.layers[k].b.len() {
                let orig = net.layers[k].b[idx];
                net.layers[k].b[idx] = orig + h;
                let lp: f64 = net.eval(x).iter().sum();
                net.layers[k].b[idx] = orig - h;
                let lm: f64 = net.eval(x).iter().sum();
                net.layers[k].b[idx] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads.layers[k].1[idx];
                let scale = fd.abs().max(an.abs()).max(1e-3);
                assert!((fd - an).abs() / scale < 1e-4);
            }
        }
        // Input gradient.
        let mut xv = x.to_vec();
        for i in 0..xv.len() {
            let orig = xv[i];
            xv[i] = orig + h;
            let lp: f64 = net.eval(&xv).iter().sum();
            xv[i] = orig - h;
            let lm: f64 = net.eval(&xv).iter().sum();
            xv[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let scale = fd.abs().max(dx[i].abs()).max(1e-3);
            assert!((fd - dx[i]).abs() / scale < 1e-4);
        }
    }

    #[test]
    fn gradients_match_finite_differences_all_activations() {
        let acts = [
            Activation::Relu,
            Activation::LeakyRelu(0.05),
            Activation::Tanh,
            Activation::Identity,
        ];
        let mut r = rng::seeded(99);
        for (i, act) in acts.iter().enumerate() {
            let mut net = Mlp::mlp2(3, 8, 2, *act, Activation::Identity, 1.0, false, &mut r);
            let x: Vec<f64> = (0..3).map(|_| rng::normal(&mut r)).collect();
            // Shift away from relu kinks so central differences are valid.
            finite_diff_check(&mut net, &x);
            let _ = i;
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut r = rng::seeded(4);
        let mut net = Mlp::mlp2(2, 4, 1, Activation::Tanh, Activation::Identity, 1.0, false, &mut r);
        let before = net.params_hash();
        let grads = MlpGrads::zeros_like(&net);
        let mut st = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &grads, &mut st).unwrap();
        assert_eq!(net.params_hash(), before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut net = Mlp::new(&[1, 1], &[Activation::Identity], &[1.0], false, &mut rng::seeded(0));
        net.layers[0].w = Mat::from_rows(&[&[0.0]]);
        let mut grads = MlpGrads::zeros_like(&net);
        grads.layers[0].0.data[0] = 0.37;
        let mut st = AdamState::new(&net, 0.01);
        adam_step(&mut net, &grads, &mut st).unwrap();
        // First bias-corrected step is -lr * sign(g) up to eps terms.
        assert!((net.layers[0].w.data[0] + 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut net = Mlp::new(&[1, 1], &[Activation::Identity], &[1.0], false, &mut rng::seeded(0));
        let mut grads = MlpGrads::zeros_like(&net);
        grads.layers[0].0.data[0] = f64::NAN;
        let mut st = AdamState::new(&net, 0.01);
        assert_eq!(adam_step(&mut net, &grads, &mut st), Err(NnError::NonFiniteGradient));
    }

    #[test]
    fn adam_converges_on_scalar_quadratic() {
        // loss = (p - 3)^2 from p = 0, lr 0.1, 100 steps.
        let mut net = Mlp::new(&[1, 1], &[Activation::Identity], &[1.0], false, &mut rng::seeded(0));
        net.layers[0].w = Mat::from_rows(&[&[0.0]]);
        net.layers[0].b = alloc::vec![0.0];
        let mut st = AdamState::new(&net, 0.1);
        for _ in 0..100 {
            let p = net.layers[0].w.data[0];
            let mut grads = MlpGrads::zeros_like(&net);
            grads.layers[0].0.data[0] = 2.0 * (p - 3.0);
            adam_step(&mut net, &grads, &mut st).unwrap();
        }
        assert!((net.layers[0].w.data[0] - 3.0).abs() < 0.1);
    }

    #[test]
    fn normalized_network_is_near_one_lipschitz_empirically() {
        let mut r = rng::seeded(21);
        let mut net = Mlp::mlp2(4, 16, 4, Activation::LeakyRelu(0.05), Activation::Identity, 1.0, true, &mut r);
        // Perturb weights away from orthogonality so SN has work to do.
        for layer in &mut net.layers {
            for v in &mut layer.w.data {
                *v *= 1.7;
            }
        }
        let (snet, _) = net.normalized(30);
        let mut max_ratio: f64 = 0.0;
        for _ in 0..100_000 {
            let a: Vec<f64> = (0..4).map(|_| rng::uniform_in(&mut r, -2.0, 2.0)).collect();
            let mut b = a.clone();
            for v in &mut b {
                *v += rng::normal(&mut r) * 0.1;
            }
            let d = crate::linalg::dist2(&a, &b);
            if d == 0.0 {
                continue;
            }
            let ya = snet.eval(&a);
            let yb = snet.eval(&b);
            max_ratio = max_ratio.max(crate::linalg::dist2(&ya, &yb) / d);
        }
        assert!(max_ratio <= 1.0 + 1e-2, "empirical Lipschitz {max_ratio}");
    }
}
