//! Building blocks composed by the actor and critic networks.
//!
//! Weights are stored input-major (`in × out`), so a hidden unit owns one
//! column of each weight matrix that feeds it.

use crate::graph::{Graph, Var};
use crate::matrix::{Matrix, Real};
use crate::param::{initialize, Init, ParamId, ParamStore};
use rand::Rng;

pub const LOG_STD_MIN: Real = -20.0;
pub const LOG_STD_MAX: Real = 2.0;
const LN_2PI: Real = 1.837_877_066_409_345_5;

/// Fully connected layer `x · w + b`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{name}.w"), inputs, outputs, Init::FanInUniform, rng);
        let b = store.add(format!("{name}.b"), 1, outputs, Init::Zeros, rng);
        Self {
            w,
            b,
            inputs,
            outputs,
        }
    }

    /// Rebinds to parameters already present in `store`.
    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        let w = store.id_of(&format!("{name}.w"))?;
        let b = store.id_of(&format!("{name}.b"))?;
        let (inputs, outputs) = store.value(w).shape();
        Some(Self {
            w,
            b,
            inputs,
            outputs,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, trainable: bool) -> Var {
        let w = g.param(store, self.w, trainable);
        let b = g.param(store, self.b, trainable);
        g.affine(x, w, b)
    }
}

/// Gated recurrent cell. With `layer_norm` every gate and candidate
/// pre-activation term is normalized separately (no bias, no affine):
///
/// ```text
/// r  = σ(LN(W_r x) + LN(U_r h))
/// z  = σ(LN(W_z x) + LN(U_z h))
/// h~ = tanh(LN(W_h x) + r ∘ LN(U_h h))
/// h' = (1 − z) ∘ h + z ∘ h~
/// ```
///
/// Without it the cell is a plain GRU with one bias per gate. The three
/// gate matrices are stored fused as `[r | z | h]` column blocks.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w: ParamId,
    pub u: ParamId,
    pub bias: Option<ParamId>,
    pub inputs: usize,
    pub hidden: usize,
    pub layer_norm: bool,
    pub eps: Real,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        layer_norm: bool,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{name}.w"), inputs, 3 * hidden, Init::FanInUniform, rng);
        let mut u = Matrix::zeros(hidden, 3 * hidden);
        for gate in 0..3 {
            let q = initialize(hidden, hidden, Init::Orthogonal, rng);
            for r in 0..hidden {
                for c in 0..hidden {
                    u.set(r, gate * hidden + c, q.get(r, c));
                }
            }
        }
        let u = store.insert(format!("{name}.u"), u, Init::Orthogonal);
        let bias = (!layer_norm)
            .then(|| store.add(format!("{name}.b"), 1, 3 * hidden, Init::Zeros, rng));
        Self {
            w,
            u,
            bias,
            inputs,
            hidden,
            layer_norm,
            eps: 1e-5,
        }
    }

    pub fn bind(store: &ParamStore, name: &str, layer_norm: bool, eps: Real) -> Option<Self> {
        let w = store.id_of(&format!("{name}.w"))?;
        let u = store.id_of(&format!("{name}.u"))?;
        let bias = store.id_of(&format!("{name}.b"));
        if bias.is_some() == layer_norm {
            return None;
        }
        let (inputs, h3) = store.value(w).shape();
        Some(Self {
            w,
            u,
            bias,
            inputs,
            hidden: h3 / 3,
            layer_norm,
            eps,
        })
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> Var {
        g.constant(Matrix::zeros(batch, self.hidden))
    }

    /// One step. `mask` marks active hidden units; inactive units are left
    /// out of the normalization statistics (used to emulate pruning).
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        h: Var,
        trainable: bool,
        mask: Option<&[bool]>,
    ) -> Var {
        assert_eq!(g.value(x).cols(), self.inputs, "gru input width");
        assert_eq!(g.value(h).cols(), self.hidden, "gru state width");
        let w = g.param(store, self.w, trainable);
        let u = g.param(store, self.u, trainable);
        let mut xw = g.matmul(x, w);
        if let Some(b) = self.bias {
            let b = g.param(store, b, trainable);
            xw = g.add_bias(xw, b);
        }
        let hu = g.matmul(h, u);
        let n = self.hidden;
        let mut parts = [(xw, hu); 3];
        for (gate, p) in parts.iter_mut().enumerate() {
            let a = g.slice_cols(xw, gate * n, n);
            let b = g.slice_cols(hu, gate * n, n);
            *p = if self.layer_norm {
                (g.layer_norm(a, self.eps, mask), g.layer_norm(b, self.eps, mask))
            } else {
                (a, b)
            };
        }
        let [(xr, hr), (xz, hz), (xh, hh)] = parts;
        let r_pre = g.add(xr, hr);
        let r = g.sigmoid(r_pre);
        let z_pre = g.add(xz, hz);
        let z = g.sigmoid(z_pre);
        let gated = g.mul(r, hh);
        let cand_pre = g.add(xh, gated);
        let cand = g.tanh(cand_pre);
        let diff = g.sub(cand, h);
        let step = g.mul(z, diff);
        g.add(h, step)
    }

    /// Unrolls over a sequence from a zero state, returning every hidden state.
    pub fn unroll(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        xs: &[Var],
        trainable: bool,
        mask: Option<&[bool]>,
    ) -> Vec<Var> {
        let batch = g.value(xs[0]).rows();
        let mut h = self.zero_state(g, batch);
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            h = self.step(g, store, x, h, trainable, mask);
            out.push(h);
        }
        out
    }
}

/// Squeeze-and-excitation over a sequence of hidden states. The temporal
/// axis is pooled and hidden units act as channels:
/// `s = σ(W2 · relu(W1 · mean_t(h_t) + b1) + b2)`, output `h_t ∘ s`.
#[derive(Clone, Debug)]
pub struct SeBlock {
    pub squeeze: Dense,
    pub excite: Dense,
    pub channels: usize,
    pub reduced: usize,
}

impl SeBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        ratio: usize,
        rng: &mut R,
    ) -> Self {
        let reduced = (channels / ratio.max(1)).max(1);
        let squeeze = Dense::new(store, &format!("{name}.fc1"), channels, reduced, rng);
        let excite = Dense::new(store, &format!("{name}.fc2"), reduced, channels, rng);
        Self {
            squeeze,
            excite,
            channels,
            reduced,
        }
    }

    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        let squeeze = Dense::bind(store, &format!("{name}.fc1"))?;
        let excite = Dense::bind(store, &format!("{name}.fc2"))?;
        Some(Self {
            channels: squeeze.inputs,
            reduced: squeeze.outputs,
            squeeze,
            excite,
        })
    }

    /// Channel weights `σ(W2 relu(W1 z + b1) + b2)` for a pooled descriptor `z`.
    pub fn excitation(&self, g: &mut Graph, store: &ParamStore, z: Var, trainable: bool) -> Var {
        let a = self.squeeze.forward(g, store, z, trainable);
        let a = g.relu(a);
        let e = self.excite.forward(g, store, a, trainable);
        g.sigmoid(e)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        hs: &[Var],
        trainable: bool,
    ) -> Vec<Var> {
        assert!(!hs.is_empty(), "squeeze-excitation needs at least one step");
        let z = g.mean_of(hs);
        let s = self.excitation(g, store, z, trainable);
        hs.iter().map(|&h| g.mul(h, s)).collect()
    }
}

/// Tanh-squashed diagonal Gaussian policy head.
#[derive(Clone, Debug)]
pub struct SquashedGaussianHead {
    pub mean: Dense,
    pub log_std: Dense,
    pub action_dim: usize,
}

pub struct HeadOutput {
    /// Action in `[-1, 1]^d`.
    pub action: Var,
    /// Log-density of `action`, `batch × 1`.
    pub log_prob: Var,
    /// Pre-squash mean.
    pub mean: Var,
}

impl SquashedGaussianHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        features: usize,
        action_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            mean: Dense::new(store, &format!("{name}.mu"), features, action_dim, rng),
            log_std: Dense::new(store, &format!("{name}.log_std"), features, action_dim, rng),
            action_dim,
        }
    }

    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        let mean = Dense::bind(store, &format!("{name}.mu"))?;
        let log_std = Dense::bind(store, &format!("{name}.log_std"))?;
        Some(Self {
            action_dim: mean.outputs,
            mean,
            log_std,
        })
    }

    /// With `noise` (standard normal, `batch × d`) draws the reparameterized
    /// sample `tanh(μ + σ ξ)`; without it returns `tanh(μ)`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        features: Var,
        noise: Option<&Matrix>,
        trainable: bool,
    ) -> HeadOutput {
        let mu = self.mean.forward(g, store, features, trainable);
        let ls = self.log_std.forward(g, store, features, trainable);
        let ls = g.clamp(ls, LOG_STD_MIN, LOG_STD_MAX);
        let batch = g.value(mu).rows();
        let xi = match noise {
            Some(n) => {
                assert_eq!(n.shape(), (batch, self.action_dim), "noise shape");
                n.clone()
            }
            None => Matrix::zeros(batch, self.action_dim),
        };
        let pre = if noise.is_some() {
            let std = g.exp(ls);
            let xi_v = g.constant(xi.clone());
            let scaled = g.mul(std, xi_v);
            g.add(mu, scaled)
        } else {
            mu
        };
        let action = g.tanh(pre);

        // log N(pre; μ, σ) with (pre − μ)/σ = ξ, minus log|d tanh/du| written
        // as 2(ln 2 − u − softplus(−2u)) for stability.
        let gauss_const: Vec<Real> = (0..batch)
            .map(|r| xi.row(r).iter().map(|x| -0.5 * x * x - 0.5 * LN_2PI).sum())
            .collect();
        let gauss_const = g.constant(Matrix::from_vec(batch, 1, gauss_const));
        let ls_sum = g.sum_cols(ls);
        let gauss = g.sub(gauss_const, ls_sum);
        let m2u = g.scale(pre, -2.0);
        let sp = g.softplus(m2u);
        let u_sp = g.add(pre, sp);
        let neg = g.neg(u_sp);
        let shifted = g.add_scalar(neg, (2.0 as Real).ln());
        let corr = g.scale(shifted, 2.0);
        let corr_sum = g.sum_cols(corr);
        let log_prob = g.sub(gauss, corr_sum);
        HeadOutput {
            action,
            log_prob,
            mean: mu,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: Real, b: Real, tol: Real) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn layer_norm_of_one_two_three() {
        let mut g = Graph::new();
        let x = g.constant(Matrix::row_vector(vec![1.0, 2.0, 3.0]));
        let y = g.layer_norm(x, 1e-12, None);
        let v = g.value(y).data();
        assert!(close(v[0], -1.224_744_871, 1e-8));
        assert!(close(v[1], 0.0, 1e-12));
        assert!(close(v[2], 1.224_744_871, 1e-8));
    }

    #[test]
    fn layer_norm_of_constant_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(Matrix::row_vector(vec![4.2; 7]));
        let y = g.layer_norm(x, 1e-5, None);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_gru_stays_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, true, &mut rng);
        for p in store.params_mut() {
            p.value.fill(0.0);
        }
        let mut g = Graph::new();
        let x = g.constant(Matrix::zeros(1, 3));
        let h = cell.zero_state(&mut g, 1);
        let h1 = cell.step(&mut g, &store, x, h, false, None);
        assert!(g.value(h1).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_update_gate_keeps_previous_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 2, 3, false, &mut rng);
        let b = cell.bias.unwrap();
        for c in 3..6 {
            store.value_mut(b).set(0, c, -1e3);
        }
        let mut g = Graph::new();
        let x = g.constant(Matrix::row_vector(vec![0.3, -0.7]));
        let h = g.constant(Matrix::row_vector(vec![0.5, -0.25, 0.9]));
        let h1 = cell.step(&mut g, &store, x, h, false, None);
        for (a, b) in g.value(h1).data().iter().zip([0.5, -0.25, 0.9]) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn squeeze_of_constant_channel_and_half_excitation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let se = SeBlock::new(&mut store, "se", 4, 2, &mut rng);
        for p in store.params_mut() {
            p.value.fill(0.0);
        }
        let mut g = Graph::new();
        let hs: Vec<Var> = (0..3)
            .map(|t| g.constant(Matrix::row_vector(vec![2.5, t as Real, -1.0, 0.5 * t as Real])))
            .collect();
        let z = g.mean_of(&hs);
        assert!(close(g.value(z).get(0, 0), 2.5, 1e-15));
        let out = se.forward(&mut g, &store, &hs, false);
        for (&o, &h) in out.iter().zip(&hs) {
            for (a, b) in g.value(o).data().iter().zip(g.value(h).data()) {
                assert!(close(*a, 0.5 * b, 1e-15));
            }
        }
    }

    #[test]
    fn deterministic_head_is_tanh_of_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let head = SquashedGaussianHead::new(&mut store, "pi", 3, 2, &mut rng);
        let mut g = Graph::new();
        let f = g.constant(Matrix::row_vector(vec![0.4, -1.2, 2.0]));
        let out = head.forward(&mut g, &store, f, None, false);
        let mu = g.value(out.mean).clone();
        for (a, m) in g.value(out.action).data().iter().zip(mu.data()) {
            assert!(close(*a, m.tanh(), 1e-15));
        }
    }

    #[test]
    fn tiny_std_sample_approaches_tanh_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let head = SquashedGaussianHead::new(&mut store, "pi", 2, 1, &mut rng);
        let ls = head.log_std.b;
        store.value_mut(head.log_std.w).fill(0.0);
        store.value_mut(ls).fill(-20.0);
        let mut g = Graph::new();
        let f = g.constant(Matrix::row_vector(vec![0.7, 0.1]));
        let out = head.forward(&mut g, &store, f, Some(&Matrix::scalar(2.0)), false);
        let mu = g.value(out.mean).scalar_value();
        assert!(close(g.value(out.action).scalar_value(), mu.tanh(), 1e-8));
    }
}
