//! Actor and critic networks.
//!
//! Both share one layout: an optional recurrent encoder over the observation
//! window, an optional squeeze-excitation over its hidden states, then a
//! ReLU trunk. The critic appends the action to the trunk input.

use aoirelay_nn::{Dense, Graph, GruCell, HeadOutput, Matrix, ParamStore, Real, SeBlock, SquashedGaussianHead, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("parameter {0} missing or misshapen")]
    Layout(String),
}

/// Which SAC-TLS components are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablation {
    pub use_seq: bool,
    pub use_lngru: bool,
    pub use_se: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self::FULL
    }
}

impl Ablation {
    pub const FULL: Self = Self {
        use_seq: true,
        use_lngru: true,
        use_se: true,
    };
    pub const PLAIN: Self = Self {
        use_seq: false,
        use_lngru: false,
        use_se: false,
    };

    /// The four ablation runs: full, without sequence, GRU instead of
    /// LN-GRU, without SE.
    pub fn variants() -> [(&'static str, Self); 4] {
        [
            ("full", Self::FULL),
            ("no_seq", Self { use_seq: false, ..Self::FULL }),
            ("gru", Self { use_lngru: false, ..Self::FULL }),
            ("no_se", Self { use_se: false, ..Self::FULL }),
        ]
    }

    /// Number of observations the encoder reads.
    pub fn window(&self, seq_len: usize) -> usize {
        if self.use_seq {
            seq_len
        } else {
            1
        }
    }

    /// `Some(layer_norm)` when a recurrent cell is present.
    pub fn recurrent(&self) -> Option<bool> {
        if self.use_lngru {
            Some(true)
        } else if self.use_seq {
            Some(false)
        } else {
            None
        }
    }

    pub fn se_active(&self) -> bool {
        self.use_se && self.recurrent().is_some()
    }

    pub fn tag(&self) -> String {
        format!(
            "seq{}_ln{}_se{}",
            self.use_seq as u8, self.use_lngru as u8, self.use_se as u8
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub hidden: usize,
    pub trunk: usize,
    pub trunk_layers: usize,
    pub se_ratio: usize,
    pub ln_eps: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            trunk: 256,
            trunk_layers: 2,
            se_ratio: 4,
            ln_eps: 1e-5,
        }
    }
}

/// Observation window encoder.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub gru: Option<GruCell>,
    pub se: Option<SeBlock>,
    pub window: usize,
    pub obs_dim: usize,
}

impl Encoder {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        obs_dim: usize,
        seq_len: usize,
        cfg: &NetConfig,
        ablation: Ablation,
        rng: &mut R,
    ) -> Self {
        let mut gru = ablation
            .recurrent()
            .map(|ln| GruCell::new(store, "enc.gru", obs_dim, cfg.hidden, ln, rng));
        if let Some(g) = gru.as_mut() {
            g.eps = cfg.ln_eps as Real;
        }
        let se = ablation
            .se_active()
            .then(|| SeBlock::new(store, "enc.se", cfg.hidden, cfg.se_ratio, rng));
        Self {
            gru,
            se,
            window: ablation.window(seq_len),
            obs_dim,
        }
    }

    fn bind(store: &ParamStore, ablation: Ablation, seq_len: usize, eps: f64) -> Result<Self, NetError> {
        let gru = match ablation.recurrent() {
            Some(ln) => Some(
                GruCell::bind(store, "enc.gru", ln, eps as Real).ok_or_else(|| NetError::Layout("enc.gru".into()))?,
            ),
            None => None,
        };
        let se = if ablation.se_active() {
            Some(SeBlock::bind(store, "enc.se").ok_or_else(|| NetError::Layout("enc.se".into()))?)
        } else {
            None
        };
        let obs_dim = match &gru {
            Some(g) => g.inputs,
            None => 0,
        };
        Ok(Self {
            gru,
            se,
            window: ablation.window(seq_len),
            obs_dim,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.gru.as_ref().map_or(self.obs_dim, |g| g.hidden)
    }

    /// Encodes the most recent `window` steps of `steps` (oldest first).
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        steps: &[Var],
        trainable: bool,
        mask: Option<&[bool]>,
    ) -> Var {
        assert!(steps.len() >= self.window, "observation window too short");
        let recent = &steps[steps.len() - self.window..];
        match &self.gru {
            None => recent[recent.len() - 1],
            Some(cell) => {
                let hs = cell.unroll(g, store, recent, trainable, mask);
                match &self.se {
                    Some(se) => *se.forward(g, store, &hs, trainable).last().unwrap(),
                    None => *hs.last().unwrap(),
                }
            }
        }
    }
}

fn build_trunk<R: Rng + ?Sized>(store: &mut ParamStore, inputs: usize, cfg: &NetConfig, rng: &mut R) -> Vec<Dense> {
    let mut layers = Vec::with_capacity(cfg.trunk_layers);
    let mut width = inputs;
    for k in 0..cfg.trunk_layers {
        layers.push(Dense::new(store, &format!("trunk.{k}"), width, cfg.trunk, rng));
        width = cfg.trunk;
    }
    layers
}

fn bind_trunk(store: &ParamStore) -> Vec<Dense> {
    (0..).map_while(|k| Dense::bind(store, &format!("trunk.{k}"))).collect()
}

fn run_trunk(layers: &[Dense], g: &mut Graph, store: &ParamStore, mut x: Var, trainable: bool) -> Var {
    for l in layers {
        let y = l.forward(g, store, x, trainable);
        x = g.relu(y);
    }
    x
}

/// Feeds a batch of windows into the graph as one constant per time step.
/// `windows[b]` is the flattened `seq_len × obs_dim` window of sample `b`.
pub fn window_inputs(g: &mut Graph, windows: &[&[f64]], seq_len: usize, obs_dim: usize) -> Vec<Var> {
    let batch = windows.len();
    (0..seq_len)
        .map(|t| {
            let mut m = Matrix::zeros(batch, obs_dim);
            for (b, w) in windows.iter().enumerate() {
                let src = &w[t * obs_dim..(t + 1) * obs_dim];
                for (dst, &v) in m.row_mut(b).iter_mut().zip(src) {
                    *dst = v as Real;
                }
            }
            g.constant(m)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Actor {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub trunk: Vec<Dense>,
    pub head: SquashedGaussianHead,
    pub ablation: Ablation,
    pub seq_len: usize,
    pub obs_dim: usize,
    /// Active recurrent units; `None` means all.
    pub gru_mask: Option<Vec<bool>>,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        seq_len: usize,
        cfg: &NetConfig,
        ablation: Ablation,
        rng: &mut R,
    ) -> Self {
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, obs_dim, seq_len, cfg, ablation, rng);
        let trunk = build_trunk(&mut store, encoder.out_dim(), cfg, rng);
        let width = trunk.last().map_or(encoder.out_dim(), |l| l.outputs);
        let head = SquashedGaussianHead::new(&mut store, "head", width, action_dim, rng);
        Self {
            store,
            encoder,
            trunk,
            head,
            ablation,
            seq_len,
            obs_dim,
            gru_mask: None,
        }
    }

    /// Rebuilds an actor around parameters loaded from a checkpoint. Layer
    /// widths come from the stored shapes.
    pub fn from_store(
        store: ParamStore,
        ablation: Ablation,
        seq_len: usize,
        obs_dim: usize,
        ln_eps: f64,
    ) -> Result<Self, NetError> {
        let mut encoder = Encoder::bind(&store, ablation, seq_len, ln_eps)?;
        encoder.obs_dim = obs_dim;
        let trunk = bind_trunk(&store);
        let head = SquashedGaussianHead::bind(&store, "head").ok_or_else(|| NetError::Layout("head".into()))?;
        Ok(Self {
            store,
            encoder,
            trunk,
            head,
            ablation,
            seq_len,
            obs_dim,
            gru_mask: None,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.head.action_dim
    }

    pub fn forward_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        steps: &[Var],
        noise: Option<&Matrix>,
        trainable: bool,
    ) -> HeadOutput {
        let f = self.encoder.forward(g, store, steps, trainable, self.gru_mask.as_deref());
        let f = run_trunk(&self.trunk, g, store, f, trainable);
        self.head.forward(g, store, f, noise, trainable)
    }

    pub fn forward(&self, g: &mut Graph, steps: &[Var], noise: Option<&Matrix>, trainable: bool) -> HeadOutput {
        self.forward_with(g, &self.store, steps, noise, trainable)
    }

    /// Action for a single flattened window. `noise == None` gives the
    /// deterministic action `tanh(μ)`.
    pub fn act(&self, window: &[f64], noise: Option<&[Real]>) -> Vec<f64> {
        let mut g = Graph::new();
        let steps = window_inputs(&mut g, &[window], self.seq_len, self.obs_dim);
        let noise = noise.map(|n| Matrix::from_vec(1, n.len(), n.to_vec()));
        let out = self.forward(&mut g, &steps, noise.as_ref(), false);
        g.value(out.action).data().iter().map(|&v| v as f64).collect()
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }
}

#[derive(Clone, Debug)]
pub struct Critic {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub trunk: Vec<Dense>,
    pub out: Dense,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        seq_len: usize,
        cfg: &NetConfig,
        ablation: Ablation,
        rng: &mut R,
    ) -> Self {
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, obs_dim, seq_len, cfg, ablation, rng);
        let trunk = build_trunk(&mut store, encoder.out_dim() + action_dim, cfg, rng);
        let width = trunk.last().map_or(encoder.out_dim() + action_dim, |l| l.outputs);
        let out = Dense::new(&mut store, "q", width, 1, rng);
        Self {
            store,
            encoder,
            trunk,
            out,
        }
    }

    /// `Q(s, a)` as a `batch × 1` column, reading parameters from `store`.
    pub fn forward_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        steps: &[Var],
        action: Var,
        trainable: bool,
    ) -> Var {
        let f = self.encoder.forward(g, store, steps, trainable, None);
        let x = g.concat_cols(f, action);
        let h = run_trunk(&self.trunk, g, store, x, trainable);
        self.out.forward(g, store, h, trainable)
    }

    pub fn forward(&self, g: &mut Graph, steps: &[Var], action: Var, trainable: bool) -> Var {
        self.forward_with(g, &self.store, steps, action, trainable)
    }
}

/// Scalar count of a plain SAC actor: trunk on the raw observation then the
/// two head layers.
pub fn plain_actor_param_count(obs_dim: usize, action_dim: usize, cfg: &NetConfig) -> usize {
    let mut n = 0;
    let mut width = obs_dim;
    for _ in 0..cfg.trunk_layers {
        n += width * cfg.trunk + cfg.trunk;
        width = cfg.trunk;
    }
    n + 2 * (width * action_dim + action_dim)
}
