#![allow(dead_code)]

use std::path::{Path, PathBuf};

/// Overrides that shrink the desk preset to a few seconds of work.
pub const TINY: &[&str] = &[
    "sac.episodes=3",
    "sac.warmup_steps=15",
    "sac.batch_size=8",
    "sac.seq_len=2",
    "sac.net.hidden=4",
    "sac.net.trunk=8",
    "sac.net.trunk_layers=1",
    "env.episode_length=8",
    "run.eval_episodes=2",
    "run.smooth_window=2",
    "prune.ratios=[0.5, 0.75]",
    "prune.lg_lambdas=[-6.0, -5.0]",
    "prune.eval_episodes=2",
    "prune.finetune_steps=10",
];

pub fn tiny_args() -> Vec<String> {
    TINY.iter().flat_map(|s| ["--set".to_string(), s.to_string()]).collect()
}

pub fn cli(root: &Path, args: &[&str]) -> anyhow::Result<()> {
    let mut argv = vec!["aoirelay".to_string(), "--runs-dir".into(), root.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    aoirelay::cli::run(argv)
}

/// Runs `args` followed by the tiny overrides.
pub fn cli_tiny(root: &Path, args: &[&str]) -> anyhow::Result<()> {
    let mut all: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    all.extend(tiny_args());
    let refs: Vec<&str> = all.iter().map(String::as_str).collect();
    cli(root, &refs)
}

pub fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

pub fn subdirs(root: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    v
}
