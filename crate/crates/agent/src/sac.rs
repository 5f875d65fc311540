//! Soft actor-critic with twin critics and automatic entropy tuning.

use crate::nets::{window_inputs, Ablation, Actor, Critic, NetConfig};
use crate::replay::Transition;
use aoirelay_nn::{Adam, Checkpoint, CheckpointError, Graph, Matrix, ParamStore, Real, ScalarAdam, Var};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SacError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid sac config: {field} {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("parameter layouts differ")]
    ShapeMismatch,
    #[error("non-finite loss")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("checkpoint metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Net(#[from] crate::nets::NetError),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    obs_dim: usize,
    action_dim: usize,
    config: SacConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub batch_size: usize,
    /// Gradient steps per trigger (K).
    pub updates_per_step: usize,
    /// Env steps between update triggers.
    pub update_every: usize,
    pub warmup_steps: usize,
    pub seq_len: usize,
    /// Defaults to `-action_dim` when absent.
    pub target_entropy: Option<f64>,
    pub init_alpha: f64,
    /// Tune α toward the target entropy; off keeps `init_alpha`.
    pub learn_alpha: bool,
    pub buffer_capacity: usize,
    pub episodes: usize,
    pub ablation: Ablation,
    pub net: NetConfig,
    pub grad_clip: Option<f64>,
    /// Write wall-clock milliseconds into the metrics rows. Off keeps the
    /// rows reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            batch_size: 256,
            updates_per_step: 1,
            update_every: 1,
            warmup_steps: 1000,
            seq_len: 4,
            target_entropy: None,
            init_alpha: 0.2,
            learn_alpha: true,
            buffer_capacity: 100_000,
            episodes: 4500,
            ablation: Ablation::FULL,
            net: NetConfig::default(),
            grad_clip: None,
            record_wall_time: false,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        let bad = |field: &'static str, reason: &str| {
            Err(SacError::Invalid {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma", "must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", "must lie in (0, 1]");
        }
        for (f, v) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_alpha", self.lr_alpha),
            ("init_alpha", self.init_alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(f, "must be positive");
            }
        }
        for (f, v) in [
            ("batch_size", self.batch_size),
            ("updates_per_step", self.updates_per_step),
            ("update_every", self.update_every),
            ("seq_len", self.seq_len),
            ("buffer_capacity", self.buffer_capacity),
            ("net.hidden", self.net.hidden),
            ("net.trunk", self.net.trunk),
            ("net.se_ratio", self.net.se_ratio),
        ] {
            if v < 1 {
                return bad(f, "must be >= 1");
            }
        }
        if self.batch_size > self.buffer_capacity {
            return bad("batch_size", "exceeds buffer_capacity");
        }
        if !(self.net.ln_eps > 0.0) {
            return bad("net.ln_eps", "must be positive");
        }
        Ok(())
    }
}

/// A sampled minibatch laid out for the networks.
pub struct Batch<'a> {
    pub states: Vec<&'a [f64]>,
    pub next_states: Vec<&'a [f64]>,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl<'a> Batch<'a> {
    pub fn new(items: &[&'a Transition]) -> Self {
        let d = items.first().map_or(0, |t| t.action.len());
        let mut actions = Matrix::zeros(items.len(), d);
        for (r, t) in items.iter().enumerate() {
            for (dst, &a) in actions.row_mut(r).iter_mut().zip(&t.action) {
                *dst = a as Real;
            }
        }
        Self {
            states: items.iter().map(|t| t.state.as_slice()).collect(),
            next_states: items.iter().map(|t| t.next_state.as_slice()).collect(),
            actions,
            rewards: items.iter().map(|t| t.reward).collect(),
            dones: items.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

/// `target ← τ·online + (1 − τ)·target`, parameter by parameter.
pub fn soft_update(target: &mut ParamStore, online: &ParamStore, tau: f64) -> Result<(), SacError> {
    if !target.same_layout(online) {
        return Err(SacError::ShapeMismatch);
    }
    let tau = tau as Real;
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        for (tv, &ov) in t.value.data_mut().iter_mut().zip(o.value.data()) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
    }
    Ok(())
}

/// Gradient of `J(α) = −log α · mean(log π + H̄)` with respect to `log α`.
pub fn temperature_grad(mean_log_prob: f64, target_entropy: f64) -> f64 {
    -(mean_log_prob + target_entropy)
}

/// Bellman target `r + γ(1 − done)(min Q̄ − α log π)`.
pub fn bellman_target(reward: f64, done: bool, gamma: f64, min_q_next: f64, alpha: f64, log_prob_next: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (min_q_next - alpha * log_prob_next)
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal) as Real).collect();
    Matrix::from_vec(rows, cols, data)
}

fn column(g: &Graph, v: Var) -> Vec<f64> {
    g.value(v).data().iter().map(|&x| x as f64).collect()
}

#[derive(Clone, Debug)]
pub struct Sac {
    pub config: SacConfig,
    pub actor: Actor,
    pub critics: [Critic; 2],
    pub targets: [Critic; 2],
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Group-lasso weight on the actor's hidden-unit groups.
    pub group_lasso: f64,
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    alpha_opt: ScalarAdam,
}

impl Sac {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, config: SacConfig, rng: &mut R) -> Self {
        let (n, net, abl) = (config.seq_len, &config.net, config.ablation);
        let actor = Actor::new(obs_dim, action_dim, n, net, abl, rng);
        let c1 = Critic::new(obs_dim, action_dim, n, net, abl, rng);
        let c2 = Critic::new(obs_dim, action_dim, n, net, abl, rng);
        let mut t1 = c1.clone();
        let mut t2 = c2.clone();
        t1.store.copy_values_from(&c1.store);
        t2.store.copy_values_from(&c2.store);
        Self {
            actor_opt: Adam::new(&actor.store, config.lr_actor as Real),
            critic_opts: [
                Adam::new(&c1.store, config.lr_critic as Real),
                Adam::new(&c2.store, config.lr_critic as Real),
            ],
            alpha_opt: ScalarAdam::new(config.lr_alpha as Real),
            log_alpha: config.init_alpha.ln(),
            target_entropy: config.target_entropy.unwrap_or(-(action_dim as f64)),
            actor,
            critics: [c1, c2],
            targets: [t1, t2],
            obs_dim,
            action_dim,
            group_lasso: 0.0,
            config,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    fn steps(&self, g: &mut Graph, windows: &[&[f64]]) -> Vec<Var> {
        window_inputs(g, windows, self.config.seq_len, self.obs_dim)
    }

    /// Samples `a ~ π(·|s)` for a single window.
    pub fn act<R: Rng + ?Sized>(&self, window: &[f64], rng: &mut R) -> Vec<f64> {
        let noise: Vec<Real> = (0..self.action_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) as Real)
            .collect();
        self.actor.act(window, Some(&noise))
    }

    pub fn act_deterministic(&self, window: &[f64]) -> Vec<f64> {
        self.actor.act(window, None)
    }

    /// Bellman targets for each sample, drawing `a' ~ π(·|s')` with `noise`.
    pub fn critic_targets(&self, batch: &Batch, noise: &Matrix) -> Result<Vec<f64>, SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let mut g = Graph::new();
        let next = self.steps(&mut g, &batch.next_states);
        let pi = self.actor.forward(&mut g, &next, Some(noise), false);
        let q1 = self.targets[0].forward(&mut g, &next, pi.action, false);
        let q2 = self.targets[1].forward(&mut g, &next, pi.action, false);
        let qmin = g.minimum(q1, q2);
        let (qmin, logp) = (column(&g, qmin), column(&g, pi.log_prob));
        let alpha = self.alpha();
        Ok((0..batch.len())
            .map(|i| bellman_target(batch.rewards[i], batch.dones[i], self.config.gamma, qmin[i], alpha, logp[i]))
            .collect())
    }

    /// Mean squared Bellman error of each critic against `targets`, recorded
    /// on `g`. Returns the summed loss node and the two per-critic losses.
    pub fn critic_loss(&self, g: &mut Graph, batch: &Batch, targets: &[f64]) -> Result<(Var, [f64; 2]), SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let s = self.steps(g, &batch.states);
        let a = g.constant(batch.actions.clone());
        let y = g.constant(Matrix::from_vec(
            targets.len(),
            1,
            targets.iter().map(|&v| v as Real).collect(),
        ));
        let mut parts = [0.0; 2];
        let mut losses = Vec::with_capacity(2);
        for (k, c) in self.critics.iter().enumerate() {
            let q = c.forward(g, &s, a, true);
            let d = g.sub(q, y);
            let sq = g.square(d);
            let l = g.mean_all(sq);
            parts[k] = g.value(l).scalar_value() as f64;
            losses.push(l);
        }
        Ok((g.add(losses[0], losses[1]), parts))
    }

    /// `mean(α log π(a|s) − min Q(s, a))` with `a` reparameterized by
    /// `noise`. Returns the loss node and the mean log-probability.
    pub fn actor_loss(&self, g: &mut Graph, batch: &Batch, noise: &Matrix, trainable: bool) -> Result<(Var, f64), SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let s = self.steps(g, &batch.states);
        let pi = self.actor.forward(g, &s, Some(noise), trainable);
        let q1 = self.critics[0].forward(g, &s, pi.action, false);
        let q2 = self.critics[1].forward(g, &s, pi.action, false);
        let qmin = g.minimum(q1, q2);
        let ent = g.scale(pi.log_prob, self.alpha() as Real);
        let obj = g.sub(ent, qmin);
        let loss = g.mean_all(obj);
        let n = batch.len() as f64;
        let mean_logp = g.value(pi.log_prob).data().iter().map(|&v| v as f64).sum::<f64>() / n;
        Ok((loss, mean_logp))
    }

    pub fn temperature_update(&mut self, mean_log_prob: f64) {
        let grad = temperature_grad(mean_log_prob, self.target_entropy);
        let mut v = self.log_alpha as Real;
        self.alpha_opt.update(&mut v, grad as Real);
        self.log_alpha = v as f64;
    }

    /// One full gradient step: critics, actor, temperature, targets.
    pub fn update<R: Rng + ?Sized>(&mut self, items: &[&Transition], rng: &mut R) -> Result<UpdateStats, SacError> {
        let batch = Batch::new(items);
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let (b, d) = (batch.len(), self.action_dim);
        let next_noise = standard_normal(rng, b, d);
        let targets = self.critic_targets(&batch, &next_noise)?;

        let mut g = Graph::new();
        let (loss, parts) = self.critic_loss(&mut g, &batch, &targets)?;
        if !g.value(loss).is_finite() {
            return Err(SacError::NonFinite);
        }
        g.backward(loss).expect("scalar loss");
        for (c, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            c.store.zero_grad();
            c.store.accumulate_grads(&g);
            if let Some(clip) = self.config.grad_clip {
                c.store.clip_grad_norm(clip as Real);
            }
            opt.step(&mut c.store);
        }
        drop(g);

        let noise = standard_normal(rng, b, d);
        let mut g = Graph::new();
        let (aloss, mean_logp) = self.actor_loss(&mut g, &batch, &noise, true)?;
        let mut actor_loss = g.value(aloss).scalar_value() as f64;
        if self.group_lasso > 0.0 {
            actor_loss += self.group_lasso * crate::pruning::group_lasso_penalty(&self.actor);
        }
        if !actor_loss.is_finite() {
            return Err(SacError::NonFinite);
        }
        g.backward(aloss).expect("scalar loss");
        self.actor.store.zero_grad();
        self.actor.store.accumulate_grads(&g);
        crate::pruning::add_group_lasso_grad(&mut self.actor, self.group_lasso);
        if let Some(clip) = self.config.grad_clip {
            self.actor.store.clip_grad_norm(clip as Real);
        }
        self.actor_opt.step(&mut self.actor.store);
        drop(g);

        if self.config.learn_alpha {
            self.temperature_update(mean_logp);
        }
        let tau = self.config.tau;
        for (t, c) in self.targets.iter_mut().zip(&self.critics) {
            soft_update(&mut t.store, &c.store, tau)?;
        }
        Ok(UpdateStats {
            critic_loss: 0.5 * (parts[0] + parts[1]),
            actor_loss,
            alpha: self.alpha(),
            entropy: -mean_logp,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = CheckpointMeta {
            obs_dim: self.obs_dim,
            action_dim: self.action_dim,
            config: self.config.clone(),
        };
        let mut ck = Checkpoint::new(serde_json::to_string(&meta).expect("meta serializes"));
        ck.push_store("actor", &self.actor.store);
        ck.push_store("critic0", &self.critics[0].store);
        ck.push_store("critic1", &self.critics[1].store);
        ck.push_store("target0", &self.targets[0].store);
        ck.push_store("target1", &self.targets[1].store);
        ck.push("log_alpha", &Matrix::scalar(self.log_alpha as Real));
        ck
    }

    /// Restores networks and temperature. Optimizer moments start fresh.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, LoadError> {
        let meta: CheckpointMeta = serde_json::from_str(&ck.meta).map_err(|e| LoadError::Meta(e.to_string()))?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut sac = Sac::new(meta.obs_dim, meta.action_dim, meta.config, &mut rng);
        let actor_store = ck.to_store("actor")?;
        let (n, abl, eps) = (sac.config.seq_len, sac.config.ablation, sac.config.net.ln_eps);
        let actor = Actor::from_store(actor_store, abl, n, meta.obs_dim, eps)?;
        sac.set_actor(actor);
        ck.load_into("critic0", &mut sac.critics[0].store)?;
        ck.load_into("critic1", &mut sac.critics[1].store)?;
        ck.load_into("target0", &mut sac.targets[0].store)?;
        ck.load_into("target1", &mut sac.targets[1].store)?;
        sac.log_alpha = ck.matrix("log_alpha")?.scalar_value() as f64;
        Ok(sac)
    }

    /// Replaces the actor (e.g. after pruning) and resets its optimizer.
    pub fn set_actor(&mut self, actor: Actor) {
        self.actor_opt = Adam::new(&actor.store, self.config.lr_actor as Real);
        self.actor = actor;
    }
}
