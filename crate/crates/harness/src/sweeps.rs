//! Run grids: parameter sweeps and ablations, executed on a thread pool.

use crate::config::ExperimentConfig;
use crate::runs::{execute, execute_cached, Manifest, PolicyKind, RunError, Summary};
use aoirelay_agent::Ablation;
use rayon::prelude::*;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Count {
    Aav,
    Sn,
}

impl Count {
    pub fn tag(&self) -> &'static str {
        match self {
            Count::Aav => "aav",
            Count::Sn => "sn",
        }
    }
}

/// One run per (count, policy, seed). Groups are `<prefix>/n=<count>/<policy>`.
pub fn count_sweep(
    base: &ExperimentConfig,
    what: Count,
    counts: &[usize],
    policies: &[PolicyKind],
    seeds: &[u64],
    prefix: &str,
    command: &[String],
) -> Vec<Manifest> {
    let mut out = Vec::new();
    for &n in counts {
        let mut cfg = base.clone();
        match what {
            Count::Aav => cfg.world.n_aav = n,
            Count::Sn => cfg.world.n_sn = n,
        }
        for &p in policies {
            let group = format!("{prefix}/n={n}/{}", p.name());
            for &s in seeds {
                let name = format!("{prefix}-{}{n}-{}-s{s}", what.tag(), p.name());
                out.push(Manifest::new(&name, &group, p, s, cfg.clone(), command.to_vec()));
            }
        }
    }
    out
}

/// The four ablation variants per seed, plus plain SAC when asked.
pub fn ablation(base: &ExperimentConfig, seeds: &[u64], include_plain: bool, prefix: &str, command: &[String]) -> Vec<Manifest> {
    let mut variants: Vec<(&str, PolicyKind, Ablation)> = Ablation::variants()
        .into_iter()
        .map(|(tag, a)| (tag, PolicyKind::Sactls, a))
        .collect();
    if include_plain {
        variants.push(("plain", PolicyKind::Sac, Ablation::PLAIN));
    }
    let mut out = Vec::new();
    for (tag, policy, abl) in variants {
        let mut cfg = base.clone();
        cfg.sac.ablation = abl;
        for &s in seeds {
            let name = format!("{prefix}-{tag}-s{s}");
            out.push(Manifest::new(&name, &format!("{prefix}/{tag}"), policy, s, cfg.clone(), command.to_vec()));
        }
    }
    out
}

/// Executes every manifest on `jobs` worker threads. Each run stays on one
/// thread, so results do not depend on `jobs`. With `reuse`, runs whose
/// directory already matches the manifest are read back instead.
pub fn run_all(manifests: &[Manifest], root: &Path, jobs: usize, reuse: bool) -> Result<Vec<Summary>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::Other(e.to_string()))?;
    pool.install(|| {
        manifests
            .par_iter()
            .map(|m| if reuse { execute_cached(m, root) } else { execute(m, root) })
            .collect()
    })
}
