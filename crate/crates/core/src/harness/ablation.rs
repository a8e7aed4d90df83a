//! Feature-group ablations. Every configuration is tuned and trained from
//! scratch on its own column subset.

use serde::{Deserialize, Serialize};

use super::benchmark::{train_and_evaluate, ExperimentConfig};
use crate::error::{Error, Result};
use crate::learner::{Family, Task};
use crate::matrix::{format_float, FeatureGroup, FeatureMatrix};

/// Additive order used when none is given.
pub const DEFAULT_ORDER: [FeatureGroup; 5] =
    [FeatureGroup::CF, FeatureGroup::FF, FeatureGroup::SPF, FeatureGroup::GVF, FeatureGroup::AF];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: String,
    pub groups: Vec<FeatureGroup>,
    pub features: Vec<String>,
    pub qwk: f64,
    pub pearson_r: f64,
    pub mse: f64,
    /// Relative QWK change against the full set, in percent (leave-one-out only).
    pub pct_change: Option<f64>,
    pub model_digest: String,
}

fn run_config(
    prompt: &str,
    matrix: &FeatureMatrix,
    groups: &[FeatureGroup],
    name: String,
    family: Family,
    task: Task,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<AblationRow> {
    let sub = matrix.select_groups(groups);
    if sub.n_cols() == 0 {
        return Err(Error::MissingGroup(format!("{name}: no columns for {groups:?}")));
    }
    let run = train_and_evaluate(prompt, &sub, family, task, config, seed)?;
    Ok(AblationRow {
        configuration: name,
        groups: groups.to_vec(),
        features: run.model.feature_names().to_vec(),
        qwk: run.test.qwk,
        pearson_r: run.test.pearson_r,
        mse: run.test.mse,
        pct_change: None,
        model_digest: run.model_digest(),
    })
}

fn check_groups(matrix: &FeatureMatrix, order: &[FeatureGroup]) -> Result<()> {
    let present = matrix.groups_present();
    match order.iter().find(|g| !present.contains(g)) {
        Some(g) => Err(Error::MissingGroup(g.to_string())),
        None if order.is_empty() => Err(Error::Invalid("ablation needs at least one group".into())),
        None => Ok(()),
    }
}

fn join(groups: &[FeatureGroup]) -> String {
    groups.iter().map(|g| g.tag()).collect::<Vec<_>>().join("+")
}

/// Stage k uses the first k groups of `order`.
pub fn ablation_additive(
    prompt: &str,
    matrix: &FeatureMatrix,
    order: &[FeatureGroup],
    family: Family,
    task: Task,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    check_groups(matrix, order)?;
    (1..=order.len())
        .map(|k| run_config(prompt, matrix, &order[..k], join(&order[..k]), family, task, config, seed))
        .collect()
}

/// The full set first, then the set without each group in turn.
pub fn ablation_leave_one_out(
    prompt: &str,
    matrix: &FeatureMatrix,
    groups: &[FeatureGroup],
    family: Family,
    task: Task,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    check_groups(matrix, groups)?;
    let mut full = run_config(prompt, matrix, groups, "all".into(), family, task, config, seed)?;
    full.pct_change = Some(0.0);
    let mut rows = vec![full];
    for g in groups {
        let rest: Vec<FeatureGroup> = groups.iter().copied().filter(|h| h != g).collect();
        if rest.is_empty() {
            continue;
        }
        let mut row = run_config(prompt, matrix, &rest, format!("-{g}"), family, task, config, seed)?;
        let q_full = rows[0].qwk;
        row.pct_change = (q_full != 0.0).then(|| 100.0 * (row.qwk - q_full) / q_full);
        rows.push(row);
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["configuration", "groups", "n_features", "qwk", "r", "mse", "pct_change", "model_digest"]).unwrap();
    for r in rows {
        w.write_record([
            r.configuration.clone(),
            join(&r.groups),
            r.features.len().to_string(),
            format_float(r.qwk),
            format_float(r.pearson_r),
            format_float(r.mse),
            r.pct_change.map(format_float).unwrap_or_default(),
            r.model_digest.clone(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}
