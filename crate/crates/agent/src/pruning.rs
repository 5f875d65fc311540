//! Structured pruning of the actor.
//!
//! A group is one hidden unit together with every weight feeding it: the
//! three gate columns of a recurrent unit, an SE bottleneck unit, or a trunk
//! neuron. Removing a group also drops the row that reads its output in the
//! next layer.

use crate::nets::Actor;
use aoirelay_nn::{Matrix, ParamStore, Real};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PruneError {
    #[error("ratio {0} outside (0, 1)")]
    Ratio(f64),
    #[error("pruning would remove every unit of {0}")]
    EmptyLayer(String),
}

/// A prunable layer of hidden units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Gru,
    Se,
    Trunk(usize),
}

impl Layer {
    pub fn name(&self) -> String {
        match self {
            Layer::Gru => "enc.gru".into(),
            Layer::Se => "enc.se".into(),
            Layer::Trunk(k) => format!("trunk.{k}"),
        }
    }
}

/// How one axis of a parameter follows a layer's units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    All,
    Units(Layer),
    /// Three concatenated gate blocks of the recurrent layer.
    Gates,
}

pub fn layers(actor: &Actor) -> Vec<Layer> {
    let mut out = Vec::new();
    if actor.encoder.gru.is_some() {
        out.push(Layer::Gru);
    }
    if actor.encoder.se.is_some() {
        out.push(Layer::Se);
    }
    out.extend((0..actor.trunk.len()).map(Layer::Trunk));
    out
}

pub fn layer_width(actor: &Actor, layer: Layer) -> usize {
    match layer {
        Layer::Gru => actor.encoder.gru.as_ref().unwrap().hidden,
        Layer::Se => actor.encoder.se.as_ref().unwrap().reduced,
        Layer::Trunk(k) => actor.trunk[k].outputs,
    }
}

/// Row and column axes of every actor parameter.
fn axes(actor: &Actor, name: &str) -> (Axis, Axis) {
    let encoder_out = if actor.encoder.gru.is_some() {
        Axis::Units(Layer::Gru)
    } else {
        Axis::All
    };
    let feeding = |k: usize| {
        if k == 0 {
            encoder_out
        } else {
            Axis::Units(Layer::Trunk(k - 1))
        }
    };
    match name {
        "enc.gru.w" | "enc.gru.b" => (Axis::All, Axis::Gates),
        "enc.gru.u" => (Axis::Units(Layer::Gru), Axis::Gates),
        "enc.se.fc1.w" => (Axis::Units(Layer::Gru), Axis::Units(Layer::Se)),
        "enc.se.fc1.b" => (Axis::All, Axis::Units(Layer::Se)),
        "enc.se.fc2.w" => (Axis::Units(Layer::Se), Axis::Units(Layer::Gru)),
        "enc.se.fc2.b" => (Axis::All, Axis::Units(Layer::Gru)),
        "head.mu.w" | "head.log_std.w" => (feeding(actor.trunk.len()), Axis::All),
        "head.mu.b" | "head.log_std.b" => (Axis::All, Axis::All),
        n => {
            let rest = n.strip_prefix("trunk.").expect("unknown actor parameter");
            let (k, field) = rest.split_once('.').unwrap();
            let k: usize = k.parse().unwrap();
            match field {
                "w" => (feeding(k), Axis::Units(Layer::Trunk(k))),
                _ => (Axis::All, Axis::Units(Layer::Trunk(k))),
            }
        }
    }
}

/// Units kept per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Keep(pub Vec<(Layer, Vec<bool>)>);

impl Keep {
    pub fn all(actor: &Actor) -> Self {
        Keep(layers(actor).into_iter().map(|l| (l, vec![true; layer_width(actor, l)])).collect())
    }

    pub fn get(&self, layer: Layer) -> &[bool] {
        &self.0.iter().find(|(l, _)| *l == layer).expect("layer").1
    }

    fn axis(&self, axis: Axis, len: usize) -> Vec<bool> {
        match axis {
            Axis::All => vec![true; len],
            Axis::Units(l) => self.get(l).to_vec(),
            Axis::Gates => {
                let k = self.get(Layer::Gru);
                k.iter().chain(k).chain(k).copied().collect()
            }
        }
    }
}

/// Incoming weights of unit `j` in `layer`, in parameter order.
fn group_values(actor: &Actor, layer: Layer, j: usize) -> Vec<Real> {
    let s = &actor.store;
    let col = |name: &str, c: usize| -> Vec<Real> {
        let m = s.value(s.id_of(name).unwrap());
        (0..m.rows()).map(|r| m.get(r, c)).collect()
    };
    let mut v = Vec::new();
    match layer {
        Layer::Gru => {
            let h = layer_width(actor, layer);
            for name in ["enc.gru.w", "enc.gru.u", "enc.gru.b"] {
                if s.id_of(name).is_some() {
                    for gate in 0..3 {
                        v.extend(col(name, gate * h + j));
                    }
                }
            }
        }
        Layer::Se => {
            v.extend(col("enc.se.fc1.w", j));
            v.extend(col("enc.se.fc1.b", j));
        }
        Layer::Trunk(k) => {
            v.extend(col(&format!("trunk.{k}.w"), j));
            v.extend(col(&format!("trunk.{k}.b"), j));
        }
    }
    v
}

pub fn group_norms(actor: &Actor, layer: Layer) -> Vec<f64> {
    (0..layer_width(actor, layer))
        .map(|j| {
            group_values(actor, layer, j)
                .iter()
                .map(|&x| (x as f64) * (x as f64))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// `Σ_groups ‖w_g‖₂` over every prunable layer.
pub fn group_lasso_penalty(actor: &Actor) -> f64 {
    layers(actor)
        .into_iter()
        .flat_map(|l| group_norms(actor, l))
        .sum()
}

/// Adds `λ ∂/∂w Σ‖w_g‖₂` to the actor's gradients. Zero-norm groups get a
/// zero subgradient.
pub fn add_group_lasso_grad(actor: &mut Actor, lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    let plan: Vec<(Layer, Vec<f64>)> = layers(actor).into_iter().map(|l| (l, group_norms(actor, l))).collect();
    let h = actor.encoder.gru.as_ref().map_or(0, |g| g.hidden);
    let gru_names: Vec<&str> = ["enc.gru.w", "enc.gru.u", "enc.gru.b"]
        .into_iter()
        .filter(|n| actor.store.id_of(n).is_some())
        .collect();
    let store = &mut actor.store;
    let mut scale_col = |name: &str, c: usize, coef: f64| {
        let id = store.id_of(name).unwrap();
        let p = store.get_mut(id);
        for r in 0..p.value.rows() {
            let w = p.value.get(r, c);
            let g = p.grad.get(r, c);
            p.grad.set(r, c, g + (coef as Real) * w);
        }
    };
    for (layer, norms) in plan {
        for (j, &n) in norms.iter().enumerate() {
            if n == 0.0 {
                continue;
            }
            let coef = lambda / n;
            match layer {
                Layer::Gru => {
                    for name in &gru_names {
                        for gate in 0..3 {
                            scale_col(name, gate * h + j, coef);
                        }
                    }
                }
                Layer::Se => {
                    scale_col("enc.se.fc1.w", j, coef);
                    scale_col("enc.se.fc1.b", j, coef);
                }
                Layer::Trunk(k) => {
                    scale_col(&format!("trunk.{k}.w"), j, coef);
                    scale_col(&format!("trunk.{k}.b"), j, coef);
                }
            }
        }
    }
}

/// Units to keep: in each layer the `round(ratio · n)` groups with the
/// smallest norm are dropped, ties to the lower index.
pub fn select(actor: &Actor, ratio: f64) -> Result<Keep, PruneError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PruneError::Ratio(ratio));
    }
    let mut keep = Vec::new();
    for layer in layers(actor) {
        let norms = group_norms(actor, layer);
        let n = norms.len();
        let drop = (ratio * n as f64).round() as usize;
        if drop >= n {
            return Err(PruneError::EmptyLayer(layer.name()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
        let mut k = vec![true; n];
        for &i in &order[..drop] {
            k[i] = false;
        }
        keep.push((layer, k));
    }
    Ok(Keep(keep))
}

fn masks_for(actor: &Actor, keep: &Keep, name: &str, m: &Matrix) -> (Vec<bool>, Vec<bool>) {
    let (ra, ca) = axes(actor, name);
    (keep.axis(ra, m.rows()), keep.axis(ca, m.cols()))
}

/// Same shapes, dropped weights set to zero and recurrent statistics
/// restricted to kept units.
pub fn masked(actor: &Actor, keep: &Keep) -> Actor {
    let mut out = actor.clone();
    for i in 0..out.store.len() {
        let name = out.store.params()[i].name.clone();
        let value = &out.store.params()[i].value;
        let (rk, ck) = masks_for(actor, keep, &name, value);
        let v = &mut out.store.params_mut()[i].value;
        for r in 0..v.rows() {
            for c in 0..v.cols() {
                if !(rk[r] && ck[c]) {
                    v.set(r, c, 0.0);
                }
            }
        }
    }
    if out.encoder.gru.is_some() {
        out.gru_mask = Some(keep.get(Layer::Gru).to_vec());
    }
    out
}

/// Rebuilds the actor with dropped units removed.
pub fn pruned(actor: &Actor, keep: &Keep) -> Actor {
    let mut store = ParamStore::new();
    for p in actor.store.params() {
        let (rk, ck) = masks_for(actor, keep, &p.name, &p.value);
        let rows: Vec<usize> = (0..rk.len()).filter(|&r| rk[r]).collect();
        let cols: Vec<usize> = (0..ck.len()).filter(|&c| ck[c]).collect();
        let mut m = Matrix::zeros(rows.len(), cols.len());
        for (ri, &r) in rows.iter().enumerate() {
            for (ci, &c) in cols.iter().enumerate() {
                m.set(ri, ci, p.value.get(r, c));
            }
        }
        store.insert(p.name.clone(), m, p.init);
    }
    let eps = actor.encoder.gru.as_ref().map_or(1e-5, |g| g.eps as f64);
    Actor::from_store(store, actor.ablation, actor.seq_len, actor.obs_dim, eps).expect("pruned layout")
}

/// Scalars belonging to prunable groups.
pub fn prunable_params(actor: &Actor) -> usize {
    layers(actor)
        .into_iter()
        .map(|l| group_values(actor, l, 0).len() * layer_width(actor, l))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneReport {
    pub ratio: f64,
    pub params_before: usize,
    pub params_after: usize,
    pub kept: Vec<(Layer, usize, usize)>,
}

/// Drops the fraction `ratio` of groups per layer. Returns the compact
/// network, its zero-masked full-size twin and a size report.
pub fn structured_prune(actor: &Actor, ratio: f64) -> Result<(Actor, Actor, PruneReport), PruneError> {
    let keep = select(actor, ratio)?;
    let small = pruned(actor, &keep);
    let twin = masked(actor, &keep);
    let report = PruneReport {
        ratio,
        params_before: actor.param_count(),
        params_after: small.param_count(),
        kept: keep
            .0
            .iter()
            .map(|(l, k)| (*l, k.iter().filter(|&&x| x).count(), k.len()))
            .collect(),
    };
    Ok((small, twin, report))
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    pub ratios: Vec<f64>,
    /// Group-lasso weights as log10 values.
    pub lg_lambdas: Vec<f64>,
    pub eval_episodes: usize,
    pub finetune_steps: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            ratios: vec![0.8, 0.85, 0.9, 0.93],
            lg_lambdas: (0..7).map(|k| -8.0 + 0.5 * k as f64).collect(),
            eval_episodes: 10,
            finetune_steps: 5000,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<(), PruneError> {
        for &r in &self.ratios {
            if !(r > 0.0 && r < 1.0) {
                return Err(PruneError::Ratio(r));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceRow {
    pub ratio: f64,
    pub lg_lambda: f64,
    pub mean_return: f64,
    pub retention: f64,
    pub params_after: usize,
}

pub const SURFACE_HEADER: &str = "ratio,lg_lambda,mean_return,return_retention,params_after";

pub fn surface_csv(rows: &[SurfaceRow]) -> String {
    let mut s = String::from(SURFACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.ratio, r.lg_lambda, r.mean_return, r.retention, r.params_after
        ));
    }
    s
}

pub struct Surface {
    pub unpruned_return: f64,
    pub rows: Vec<SurfaceRow>,
}

/// Finetunes once per λ, then prunes at every ratio and evaluates the
/// compact actor deterministically. Retention is relative to the
/// unpruned checkpoint under the same evaluation seeds.
pub fn sweep<E: aoirelay_core::Environment>(
    env: &mut E,
    agent: &crate::sac::Sac,
    config: &PruneConfig,
    seed: u64,
    mut progress: impl FnMut(&SurfaceRow),
) -> Result<Surface, crate::train::TrainError> {
    use crate::train::{continue_training, evaluate, mean_return};
    let eval_seed = seed ^ 0x5EED;
    let base = mean_return(&evaluate(env, &agent.actor, config.eval_episodes, eval_seed)?);
    let mut rows = Vec::with_capacity(config.ratios.len() * config.lg_lambdas.len());
    for (li, &lg) in config.lg_lambdas.iter().enumerate() {
        let mut tuned = agent.clone();
        tuned.group_lasso = 10f64.powf(lg);
        continue_training(&mut tuned, env, config.finetune_steps, seed.wrapping_add(li as u64))?;
        for &ratio in &config.ratios {
            let row = match structured_prune(&tuned.actor, ratio) {
                Ok((small, _, report)) => {
                    let r = mean_return(&evaluate(env, &small, config.eval_episodes, eval_seed)?);
                    SurfaceRow {
                        ratio,
                        lg_lambda: lg,
                        mean_return: r,
                        retention: r / base,
                        params_after: report.params_after,
                    }
                }
                Err(_) => SurfaceRow {
                    ratio,
                    lg_lambda: lg,
                    mean_return: f64::NAN,
                    retention: f64::NAN,
                    params_after: 0,
                },
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(Surface {
        unpruned_return: base,
        rows,
    })
}
