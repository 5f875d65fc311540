mod common;

use aoirelay::aggregate::load_summaries;
use aoirelay::Manifest;
use common::{bytes, cli, cli_tiny, subdirs};
use std::process::Command;

const ARTIFACTS: [&str; 6] = ["metrics.csv", "eval.csv", "trace.jsonl", "summary.json", "checkpoint", "manifest.toml"];

#[test]
fn train_twice_gives_identical_outputs() {
    let root = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        cli_tiny(root.path(), &["train", "--seed", "7", "--name", name, "--group", "g"]).unwrap();
    }
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    for f in &ARTIFACTS[..5] {
        let (x, y) = (bytes(a.join(f)), bytes(b.join(f)));
        if *f == "summary.json" {
            let s = |v: &[u8]| String::from_utf8(v.to_vec()).unwrap().replace("\"b\"", "\"a\"").replace("\"b-", "\"a-");
            assert_eq!(s(&x), s(&y));
        } else {
            assert_eq!(x, y, "{f} differs");
        }
    }
    let (ma, mb) = (Manifest::load(&a).unwrap(), Manifest::load(&b).unwrap());
    assert_eq!(ma.config, mb.config);
    assert_eq!(ma.config_hash, mb.config_hash);
    assert!(root.path().join("a/timing.json").exists());
}

#[test]
fn manifest_alone_reproduces_the_run() {
    let root = tempfile::tempdir().unwrap();
    cli_tiny(root.path(), &["train", "--seed", "3", "--name", "orig"]).unwrap();
    let bare = tempfile::tempdir().unwrap();
    std::fs::copy(root.path().join("orig/manifest.toml"), bare.path().join("manifest.toml")).unwrap();
    let bare_path = bare.path().display().to_string();
    cli(root.path(), &["rerun", "--run", &bare_path, "--name", "again"]).unwrap();
    for f in &ARTIFACTS[..5] {
        let same = bytes(root.path().join("orig").join(f)) == bytes(root.path().join("again").join(f));
        assert!(same || *f == "summary.json", "{f} differs");
    }
}

#[test]
fn sweep_aav_gives_one_row_per_count_per_metric() {
    let root = tempfile::tempdir().unwrap();
    cli_tiny(
        root.path(),
        &["sweep-aav", "--counts", "2,3,4,5", "--seeds", "0,1", "--policies", "greedy", "--jobs", "2"],
    )
    .unwrap();
    let dirs = subdirs(root.path());
    assert_eq!(dirs.len(), 8);
    let rows = aoirelay::aggregate::aggregate(&load_summaries(&dirs).unwrap()).unwrap();
    for metric in aoirelay::runs::METRICS {
        assert_eq!(rows.iter().filter(|r| r.metric == metric).count(), 4);
    }
    let m = Manifest::load(&root.path().join("sweep-aav-aav5-greedy-s1")).unwrap();
    assert_eq!(m.config.world.n_aav, 5);
}

#[test]
fn sweep_sn_varies_sensor_count() {
    let root = tempfile::tempdir().unwrap();
    cli_tiny(root.path(), &["sweep-sn", "--counts", "6,9", "--policies", "random,greedy"]).unwrap();
    let dirs = subdirs(root.path());
    assert_eq!(dirs.len(), 4);
    let m = Manifest::load(&root.path().join("sweep-sn-sn9-random-s0")).unwrap();
    assert_eq!(m.config.world.n_sn, 9);
}

#[test]
fn ablate_runs_exactly_the_four_variants() {
    let root = tempfile::tempdir().unwrap();
    cli_tiny(root.path(), &["ablate", "--seeds", "0"]).unwrap();
    let dirs = subdirs(root.path());
    assert_eq!(dirs.len(), 4);
    let mut flags: Vec<(bool, bool, bool)> = dirs
        .iter()
        .map(|d| {
            let a = Manifest::load(d).unwrap().config.sac.ablation;
            (a.use_seq, a.use_lngru, a.use_se)
        })
        .collect();
    flags.sort();
    let mut expect = vec![(true, true, true), (false, true, true), (true, false, true), (true, true, false)];
    expect.sort();
    assert_eq!(flags, expect);
}

#[test]
fn ablate_can_add_plain_sac() {
    let root = tempfile::tempdir().unwrap();
    cli_tiny(root.path(), &["ablate", "--seeds", "0", "--include-plain"]).unwrap();
    let m = Manifest::load(&root.path().join("ablate-plain-s0")).unwrap();
    assert_eq!(m.config.sac.ablation, aoirelay_agent::Ablation::PLAIN);
    assert_eq!(subdirs(root.path()).len(), 5);
}

#[test]
fn plot_outputs_are_pure_derivations() {
    let root = tempfile::tempdir().unwrap();
    cli_tiny(root.path(), &["ablate", "--seeds", "0,1", "--jobs", "2"]).unwrap();
    let runs: Vec<String> = subdirs(root.path()).iter().map(|p| p.display().to_string()).collect();
    let out = tempfile::tempdir().unwrap();
    let out_s = out.path().join("plots").display().to_string();
    let mut args = vec!["plot", "--out", &out_s, "--window", "2", "--runs"];
    args.extend(runs.iter().map(String::as_str));
    cli(root.path(), &args).unwrap();
    let files = subdirs_files(&out.path().join("plots"));
    assert!(files.iter().any(|(n, _)| n == "convergence.svg"));
    assert!(files.iter().any(|(n, _)| n == "summary.csv"));
    std::fs::remove_dir_all(out.path().join("plots")).unwrap();
    cli(root.path(), &args).unwrap();
    assert_eq!(subdirs_files(&out.path().join("plots")), files);
}

fn subdirs_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), bytes(&p))
        })
        .collect();
    v.sort();
    v
}

#[test]
fn eval_and_prune_sweep_work_from_a_run_directory() {
    let root = tempfile::tempdir().unwrap();
    cli_tiny(root.path(), &["train", "--name", "r"]).unwrap();
    let run = root.path().join("r").display().to_string();
    let trace = root.path().join("t.jsonl").display().to_string();
    cli(root.path(), &["eval", "--run", &run, "--episodes", "1", "--trace", &trace]).unwrap();
    let lines = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(lines.lines().count(), 8);
    assert!(lines.lines().all(|l| l.contains("\"episode\":0")));
    cli(root.path(), &["prune-sweep", "--run", &run]).unwrap();
    let surface = std::fs::read_to_string(root.path().join("r/surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 1 + 2 * 2);
}

#[test]
fn baseline_eval_needs_no_checkpoint() {
    let root = tempfile::tempdir().unwrap();
    cli_tiny(root.path(), &["eval", "--policy", "greedy"]).unwrap();
    assert!(cli_tiny(root.path(), &["eval"]).is_err());
}

#[test]
fn trace_holds_every_eval_slot() {
    let root = tempfile::tempdir().unwrap();
    cli_tiny(root.path(), &["train", "--policy", "greedy", "--name", "g"]).unwrap();
    let t = std::fs::read_to_string(root.path().join("g/trace.jsonl")).unwrap();
    assert_eq!(t.lines().count(), 2 * 8);
    let v: serde_json::Value = serde_json::from_str(t.lines().last().unwrap()).unwrap();
    assert_eq!(v["episode"], 1);
    assert_eq!(v["slot"], 8);
}

#[test]
fn bad_input_fails_with_a_message() {
    let root = tempfile::tempdir().unwrap();
    let e = cli(root.path(), &["train", "--no-such-flag"]).unwrap_err();
    assert!(e.downcast_ref::<clap::Error>().is_some());
    let e = cli(root.path(), &["train", "--set", "world.h_u=-1"]).unwrap_err();
    assert!(format!("{e:#}").contains("world.h_u"), "{e:#}");
    let e = cli(root.path(), &["train", "--set", "sac.nope=1"]).unwrap_err();
    assert!(format!("{e:#}").contains("sac"), "{e:#}");
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_aoirelay");
    let root = tempfile::tempdir().unwrap();
    let out = Command::new(exe).args(["train", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(exe)
        .args(["--runs-dir", &root.path().display().to_string(), "train", "--set", "world.h_u=-1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("world.h_u"));
    let missing = root.path().join("missing.toml").display().to_string();
    let out = Command::new(exe).args(["config", "--config", &missing]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(exe).args(["config"]).output().unwrap();
    assert!(out.status.success());
    let desk: aoirelay::ExperimentConfig = aoirelay::ExperimentConfig::parse(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(desk, aoirelay::ExperimentConfig::desk());
}
