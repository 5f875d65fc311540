//! Cross-seed summaries.

use crate::runs::{RunError, Summary, METRICS};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("no runs to aggregate")]
    Empty,
    #[error("group `{group}` mixes configs {a} and {b}")]
    MixedConfigs { group: String, a: String, b: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggRow {
    pub group: String,
    pub config_hash: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Groups runs by their group label, sorted by group then metric name.
pub fn aggregate(runs: &[Summary]) -> Result<Vec<AggRow>, AggregateError> {
    if runs.is_empty() {
        return Err(AggregateError::Empty);
    }
    let mut groups: BTreeMap<&str, Vec<&Summary>> = BTreeMap::new();
    for r in runs {
        groups.entry(&r.group).or_default().push(r);
    }
    let mut metrics = METRICS.to_vec();
    metrics.sort_unstable();
    let mut out = Vec::new();
    for (group, members) in groups {
        let hash = &members[0].config_hash;
        if let Some(other) = members.iter().find(|m| &m.config_hash != hash) {
            return Err(AggregateError::MixedConfigs {
                group: group.to_string(),
                a: hash.clone(),
                b: other.config_hash.clone(),
            });
        }
        for metric in &metrics {
            let xs: Vec<f64> = members.iter().map(|m| m.metric(metric).expect("known metric")).collect();
            let (mean, std) = mean_std(&xs);
            out.push(AggRow {
                group: group.to_string(),
                config_hash: hash.clone(),
                metric: metric.to_string(),
                n: xs.len(),
                mean,
                std,
            });
        }
    }
    Ok(out)
}

pub const AGG_HEADER: &str = "group,config_hash,metric,n,mean,std";

pub fn aggregate_csv(rows: &[AggRow]) -> String {
    let mut s = String::from(AGG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{}\n", r.group, r.config_hash, r.metric, r.n, r.mean, r.std));
    }
    s
}

pub fn load_summaries<P: AsRef<Path>>(dirs: &[P]) -> Result<Vec<Summary>, RunError> {
    dirs.iter().map(|d| Summary::load(d.as_ref())).collect()
}

/// Looks up one aggregated value.
pub fn lookup<'a>(rows: &'a [AggRow], group: &str, metric: &str) -> Option<&'a AggRow> {
    rows.iter().find(|r| r.group == group && r.metric == metric)
}
