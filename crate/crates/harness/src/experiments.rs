//! The fixed experiment plan behind the acceptance suite: the toy smoke
//! configuration, the desk-scale comparison and ablation grid, and the
//! pruning surface. Runs are cached under one directory and reused while
//! their manifests match.

use crate::config::ExperimentConfig;
use crate::runs::{self, load_checkpoint, Manifest, PolicyKind, RunError, Summary};
use crate::sweeps::{ablation, run_all};
use aoirelay_agent::pruning::{surface_csv, sweep, SurfaceRow};
use aoirelay_agent::{NetConfig, SacConfig};
use aoirelay_core::AoiEnv;
use sha2::{Digest, Sha256};
use std::path::Path;

pub const DESK_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const ABLATE_PREFIX: &str = "acc-ablate";
pub const GREEDY_PREFIX: &str = "acc-greedy";
/// Run whose checkpoint feeds the pruning surface.
pub const PRUNE_SOURCE: &str = "acc-ablate-full-s0";

/// SAC-TLS on the point-to-goal toy.
pub fn toy_config() -> SacConfig {
    SacConfig {
        batch_size: 64,
        warmup_steps: 500,
        episodes: 300,
        buffer_capacity: 10_000,
        lr_actor: 1e-3,
        lr_critic: 1e-3,
        lr_alpha: 1e-3,
        net: NetConfig {
            hidden: 16,
            trunk: 64,
            ..NetConfig::default()
        },
        ..SacConfig::default()
    }
}

/// Five ablation variants (full, three single ablations, plain SAC) on
/// every desk seed.
pub fn ablation_plan(base: &ExperimentConfig) -> Vec<Manifest> {
    ablation(base, &DESK_SEEDS, true, ABLATE_PREFIX, &["acceptance".into()])
}

pub fn greedy_plan(base: &ExperimentConfig) -> Vec<Manifest> {
    DESK_SEEDS
        .iter()
        .map(|&s| {
            Manifest::new(
                &format!("{GREEDY_PREFIX}-s{s}"),
                GREEDY_PREFIX,
                PolicyKind::Greedy,
                s,
                base.clone(),
                vec!["acceptance".into()],
            )
        })
        .collect()
}

pub struct DeskResults {
    pub runs: Vec<Summary>,
}

impl DeskResults {
    pub fn group(&self, group: &str) -> Vec<&Summary> {
        self.runs.iter().filter(|s| s.group == group).collect()
    }
}

/// Executes (or reuses) every desk run.
pub fn desk_runs(base: &ExperimentConfig, root: &Path, jobs: usize, reuse: bool) -> Result<DeskResults, RunError> {
    let mut plan = greedy_plan(base);
    plan.extend(ablation_plan(base));
    Ok(DeskResults {
        runs: run_all(&plan, root, jobs, reuse)?,
    })
}

/// Pruning surface for the source checkpoint, cached beside it together
/// with a key over the manifest and prune settings.
pub fn prune_surface(root: &Path, reuse: bool) -> Result<(f64, Vec<SurfaceRow>), RunError> {
    let dir = root.join(PRUNE_SOURCE);
    let m = Manifest::load(&dir)?;
    let key = {
        let d = Sha256::digest(format!("{}\n{}", m.to_toml(), m.config.hash()).as_bytes());
        d.iter().take(8).map(|b| format!("{b:02x}")).collect::<String>()
    };
    let (csv_path, key_path) = (dir.join("surface.csv"), dir.join("surface.key"));
    if reuse {
        if let (Ok(k), Ok(csv)) = (runs::read(&key_path), runs::read(&csv_path)) {
            let mut lines = k.lines();
            if lines.next() == Some(key.as_str()) {
                if let Some(base) = lines.next().and_then(|b| b.parse().ok()) {
                    if let Some(rows) = parse_surface(&csv) {
                        return Ok((base, rows));
                    }
                }
            }
        }
    }
    let agent = load_checkpoint(&dir.join("checkpoint"))?;
    let mut env = AoiEnv::new(m.config.env_config(m.seed))?;
    let surface = sweep(&mut env, &agent, &m.config.prune, m.seed, |_| {})?;
    runs::write(&csv_path, surface_csv(&surface.rows))?;
    runs::write(&key_path, format!("{key}\n{}\n", surface.unpruned_return))?;
    Ok((surface.unpruned_return, surface.rows))
}

pub fn parse_surface(csv: &str) -> Option<Vec<SurfaceRow>> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Some(SurfaceRow {
                ratio: f.first()?.parse().ok()?,
                lg_lambda: f.get(1)?.parse().ok()?,
                mean_return: f.get(2)?.parse().ok()?,
                retention: f.get(3)?.parse().ok()?,
                params_after: f.get(4)?.parse().ok()?,
            })
        })
        .collect()
}

/// `(x − ref) / |ref|`.
pub fn relative_gain(x: f64, reference: f64) -> f64 {
    (x - reference) / reference.abs()
}
