//! Command-line interface.

use crate::aggregate::{aggregate, aggregate_csv, load_summaries};
use crate::config::ExperimentConfig;
use crate::plot;
use crate::runs::{self, evaluate, load_checkpoint, runs_root, write, Agent, Manifest, PolicyKind, Summary, METRICS};
use crate::sweeps::{ablation, count_sweep, run_all, Count};
use aoirelay_agent::pruning::{surface_csv, sweep};
use aoirelay_core::AoiEnv;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "aoirelay", version, about = "AoI relay simulator and SAC-TLS experiments")]
pub struct Cli {
    /// Output root for run directories (defaults to $AOIRELAY_RUNS, then ./runs).
    #[arg(long, global = true)]
    pub runs_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML experiment config; missing keys take the preset's values only
    /// when no file is given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    /// Override one key, e.g. `--set sac.episodes=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => match self.preset {
                Preset::Desk => ExperimentConfig::desk(),
                Preset::Paper => ExperimentConfig::default(),
            },
        };
        apply_overrides(&base, &self.overrides)
    }
}

/// Applies `section.key=value` overrides through the normal parser, so they
/// get the same checks as a file.
pub fn apply_overrides(base: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentConfig> {
    if overrides.is_empty() {
        return Ok(base.clone());
    }
    let mut doc: toml::Value = toml::from_str(&base.to_toml())?;
    for o in overrides {
        let (key, raw) = o.split_once('=').with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut parts: Vec<&str> = key.trim().split('.').collect();
        let last = parts.pop().context("empty override key")?;
        let mut table = doc.as_table_mut().expect("config is a table");
        for p in parts {
            table = table
                .entry(p)
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .with_context(|| format!("override `{key}`: `{p}` is not a section"))?;
        }
        table.insert(last.to_string(), value);
    }
    Ok(ExperimentConfig::parse(&toml::to_string(&doc)?)?)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| format!("bad list item `{p}`")))
        .collect()
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train (or, for baselines, just evaluate) one run.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "sactls")]
        policy: PolicyKind,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        group: Option<String>,
    },
    /// Evaluate a trained run's checkpoint, or a baseline policy.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory whose checkpoint and manifest to use.
        #[arg(long, conflicts_with = "policy")]
        run: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        episodes: Option<usize>,
        /// Write the slot trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Vary the number of AAVs.
    SweepAav(SweepArgs),
    /// Vary the number of sensor nodes.
    SweepSn(SweepArgs),
    /// The four ablation variants per seed.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_parser = parse_list::<u64>, default_value = "0")]
        seeds: std::vec::Vec<u64>,
        /// Also run plain SAC.
        #[arg(long)]
        include_plain: bool,
        #[arg(long, default_value = "ablate")]
        prefix: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finetune, prune and evaluate a trained run over the (ratio, lambda) grid.
    PruneSweep {
        #[arg(long)]
        run: PathBuf,
        /// Defaults to `<run>/surface.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-seed mean and std per group.
    Aggregate {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregated CSVs and SVG charts from run directories.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        window: usize,
    },
    /// Print the resolved configuration as TOML.
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-execute a run from its manifest.
    Rerun {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_parser = parse_list::<usize>, required = true)]
    pub counts: std::vec::Vec<usize>,
    #[arg(long, value_parser = parse_list::<u64>, default_value = "0")]
    pub seeds: std::vec::Vec<u64>,
    #[arg(long, value_delimiter = ',', value_enum, default_value = "sactls")]
    pub policies: Vec<PolicyKind>,
    #[arg(long)]
    pub prefix: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn print_summaries(summaries: &[Summary]) -> Result<()> {
    let rows = aggregate(summaries)?;
    print!("{}", aggregate_csv(&rows));
    Ok(())
}

/// Runs the CLI on `argv` (including the program name).
pub fn run<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let command: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = Cli::try_parse_from(&argv)?;
    let root = cli.runs_dir.clone().unwrap_or_else(runs_root);
    match cli.command {
        Command::Train {
            config,
            seed,
            policy,
            name,
            group,
        } => {
            let cfg = config.load()?;
            let name = name.unwrap_or_else(|| format!("train-{}-s{seed}", policy.name()));
            let group = group.unwrap_or_else(|| policy.name().to_string());
            let m = Manifest::new(&name, &group, policy, seed, cfg, command);
            let s = runs::execute(&m, &root)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Eval {
            config,
            run,
            policy,
            seed,
            episodes,
            trace,
        } => {
            let (cfg, mut agent, seed) = match (&run, policy) {
                (Some(dir), _) => {
                    let m = Manifest::load(dir)?;
                    let sac = load_checkpoint(&dir.join("checkpoint"))?;
                    (m.config, Agent::Learned(Box::new(sac)), m.seed)
                }
                (None, Some(PolicyKind::Greedy)) => (config.load()?, Agent::Greedy, seed),
                (None, Some(PolicyKind::Random)) => (
                    config.load()?,
                    Agent::Random(aoirelay_core::baselines::RandomPolicy::new(seed ^ runs::EVAL_SALT)),
                    seed,
                ),
                _ => bail!("eval needs --run DIR or --policy greedy|random"),
            };
            let n = episodes.unwrap_or(cfg.run.eval_episodes);
            let mut env = AoiEnv::new(cfg.env_config(seed))?;
            let ev = evaluate(&mut env, &mut agent, n, seed ^ runs::EVAL_SALT)?;
            if let Some(p) = trace {
                write(&p, &ev.trace)?;
            }
            let k = ev.rows.len() as f64;
            let out = serde_json::json!({
                "episodes": ev.rows.len(),
                "eval_return": ev.rows.iter().map(|r| r.ret).sum::<f64>() / k,
                "f1": ev.rows.iter().map(|r| r.time_avg_aoi).sum::<f64>() / k,
                "f2": ev.rows.iter().map(|r| r.total_energy_j).sum::<f64>() / k,
                "violations": ev.violations,
            });
            println!("{out}");
        }
        Command::SweepAav(a) => sweep_counts(Count::Aav, a, &root, &command)?,
        Command::SweepSn(a) => sweep_counts(Count::Sn, a, &root, &command)?,
        Command::Ablate {
            config,
            seeds,
            include_plain,
            prefix,
            jobs,
        } => {
            let cfg = config.load()?;
            let ms = ablation(&cfg, &seeds, include_plain, &prefix, &command);
            print_summaries(&run_all(&ms, &root, jobs, false)?)?;
        }
        Command::PruneSweep { run, out } => {
            let m = Manifest::load(&run)?;
            let agent = load_checkpoint(&run.join("checkpoint"))?;
            let mut env = AoiEnv::new(m.config.env_config(m.seed))?;
            let surface = sweep(&mut env, &agent, &m.config.prune, m.seed, |_| {})?;
            let path = out.unwrap_or_else(|| run.join("surface.csv"));
            write(&path, surface_csv(&surface.rows))?;
            print!("{}", surface_csv(&surface.rows));
        }
        Command::Aggregate { runs, out } => {
            let csv = aggregate_csv(&aggregate(&load_summaries(&runs)?)?);
            match out {
                Some(p) => write(&p, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Plot { runs, out, window } => emit_plots(&runs, &out, window)?,
        Command::Config { config } => print!("{}", config.load()?.to_toml()),
        Command::Rerun { run, name } => {
            let s = runs::rerun(&run, &root, name.as_deref())?;
            println!("{}", serde_json::to_string(&s)?);
        }
    }
    Ok(())
}

fn sweep_counts(what: Count, a: SweepArgs, root: &Path, command: &[String]) -> Result<()> {
    let cfg = a.config.load()?;
    let prefix = a.prefix.unwrap_or_else(|| format!("sweep-{}", what.tag()));
    let ms = count_sweep(&cfg, what, &a.counts, &a.policies, &a.seeds, &prefix, command);
    for m in &ms {
        m.config.validate()?;
    }
    print_summaries(&run_all(&ms, root, a.jobs, false)?)
}

/// Writes `summary.csv`, `convergence.csv`, one bar chart per metric, a
/// convergence chart, and a surface chart per run that has `surface.csv`.
pub fn emit_plots(dirs: &[PathBuf], out: &Path, window: usize) -> Result<()> {
    let summaries = load_summaries(dirs)?;
    let rows = aggregate(&summaries)?;
    write(&out.join("summary.csv"), aggregate_csv(&rows))?;
    for metric in METRICS {
        write(
            &out.join(format!("{metric}.svg")),
            plot::bar_chart(&format!("{metric} by group"), metric, &rows),
        )?;
    }
    let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut surfaces = Vec::new();
    for (dir, s) in dirs.iter().zip(&summaries) {
        let csv = runs::read(&dir.join("metrics.csv"))?;
        let col = plot::returns_column(&csv).map_err(|e| anyhow::anyhow!("{}: {e}", dir.display()))?;
        groups.entry(s.group.clone()).or_default().push(col);
        let sp = dir.join("surface.csv");
        if sp.exists() {
            surfaces.push((s.name.clone(), runs::read(&sp)?));
        }
    }
    let (csv, series) = plot::convergence(&groups, window);
    write(&out.join("convergence.csv"), csv)?;
    write(
        &out.join("convergence.svg"),
        plot::line_chart("Training return", "episode", "smoothed return", &series),
    )?;
    surfaces.sort();
    for (name, csv) in surfaces {
        let series = plot::surface_series(&csv).map_err(|e| anyhow::anyhow!("{name}: {e}"))?;
        write(
            &out.join(format!("surface_{name}.svg")),
            plot::line_chart(&format!("Pruning retention, {name}"), "pruning ratio", "retention", &series),
        )?;
    }
    Ok(())
}
