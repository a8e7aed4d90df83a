use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_model, Family, Params, Task};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::metrics::{mse, qwk_detail};
use crate::seeding::{derive_seed, rng_for};

/// Ordered grid: the Cartesian product is enumerated with the last knob
/// varying fastest, which fixes "first in grid" for tie-breaking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub grid: Vec<(String, Vec<f64>)>,
    pub folds: usize,
    pub seed: u64,
}

impl GridSpec {
    pub fn new(grid: Vec<(&str, Vec<f64>)>, folds: usize, seed: u64) -> Self {
        GridSpec { grid: grid.into_iter().map(|(k, v)| (k.to_string(), v)).collect(), folds, seed }
    }

    /// Documented default grid for a family.
    pub fn default_for(family: Family, seed: u64) -> Self {
        let grid = match family {
            Family::Gbt => vec![
                ("max_depth", vec![3.0, 4.0, 6.0]),
                ("n_stages", vec![100.0, 300.0]),
                ("learning_rate", vec![0.05, 0.1]),
                ("min_samples_leaf", vec![1.0, 5.0, 20.0]),
            ],
            Family::DecisionTree => vec![("max_depth", vec![3.0, 4.0, 6.0]), ("min_samples_leaf", vec![1.0, 5.0, 20.0])],
            Family::RandomForest => vec![("max_depth", vec![6.0, 12.0]), ("min_samples_leaf", vec![1.0, 5.0])],
            Family::Linear | Family::LengthOnly => vec![],
        };
        GridSpec::new(grid, 5, seed)
    }

    pub fn settings(&self) -> Vec<Vec<(String, f64)>> {
        let mut out: Vec<Vec<(String, f64)>> = vec![vec![]];
        for (name, values) in &self.grid {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut s = prefix.clone();
                        s.push((name.clone(), *v));
                        s
                    })
                })
                .collect();
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Invalid(format!("grid search needs at least 2 folds, got {}", self.folds)));
        }
        if self.grid.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::Invalid("grid has a knob with no candidates".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub setting: Vec<(String, f64)>,
    pub params: Params,
    pub fold_qwk: Vec<f64>,
    pub fold_mse: Vec<f64>,
    pub mean_qwk: f64,
    pub mean_mse: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub family: Family,
    pub task: Task,
    pub best: usize,
    pub best_params: Params,
    pub table: Vec<CvRow>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let knobs: Vec<&str> = self.table.first().map(|r| r.setting.iter().map(|(k, _)| k.as_str()).collect()).unwrap_or_default();
        let mut header: Vec<String> = knobs.iter().map(|k| k.to_string()).collect();
        header.extend(["mean_qwk", "mean_mse", "selected", "flags"].map(String::from));
        let folds = self.table.first().map_or(0, |r| r.fold_qwk.len());
        header.extend((0..folds).map(|f| format!("qwk_fold{f}")));
        w.write_record(&header).unwrap();
        for (i, row) in self.table.iter().enumerate() {
            let mut rec: Vec<String> = row.setting.iter().map(|(_, v)| crate::matrix::format_float(*v)).collect();
            rec.push(crate::matrix::format_float(row.mean_qwk));
            rec.push(crate::matrix::format_float(row.mean_mse));
            rec.push(if i == self.best { "1".into() } else { "0".into() });
            rec.push(row.flags.join("; "));
            rec.extend(row.fold_qwk.iter().map(|q| crate::matrix::format_float(*q)));
            w.write_record(&rec).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Fold index per row, stratified by grade: each grade's rows are shuffled
/// and dealt round-robin, continuing the rotation from the previous grade.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut fold = vec![0; labels.len()];
    let top = labels.iter().copied().max().unwrap_or(0);
    let mut next = 0;
    for g in 0..=top {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
        rows.shuffle(&mut rng_for(seed, g as u64));
        for r in rows {
            fold[r] = next % k;
            next += 1;
        }
    }
    fold
}

/// Exhaustive k-fold search over `spec.grid`, scored by mean validation QWK.
/// Ties go to lower mean MSE, then to the earlier grid point.
pub fn grid_search(
    spec: &GridSpec,
    family: Family,
    task: Task,
    base: &Params,
    train: &FeatureMatrix,
    n_grades: usize,
) -> Result<GridResult> {
    spec.validate()?;
    let labels = train.targets()?;
    if labels.len() < spec.folds {
        return Err(Error::Invalid(format!("{} rows cannot fill {} folds", labels.len(), spec.folds)));
    }
    let settings = spec.settings();
    let mut configs = Vec::with_capacity(settings.len());
    for s in &settings {
        let mut p = *base;
        for (k, v) in s {
            p.set(k, *v)?;
        }
        configs.push(p);
    }
    let fold_of = stratified_folds(&labels, spec.folds, spec.seed);
    let present: Vec<bool> = (0..n_grades).map(|g| labels.contains(&g)).collect();

    let cells: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..spec.folds).map(move |f| (c, f))).collect();
    let results: Vec<Result<(f64, f64, Vec<String>)>> = cells
        .par_iter()
        .map(|&(c, f)| {
            let tr: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
            let va: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            let mut flags = Vec::new();
            for g in (0..n_grades).filter(|&g| present[g]) {
                if !tr.iter().any(|&i| labels[i] == g) {
                    flags.push(format!("fold {f}: grade {g} absent from training part"));
                }
                if !va.iter().any(|&i| labels[i] == g) {
                    flags.push(format!("fold {f}: grade {g} absent from validation part"));
                }
            }
            let model = fit_model(family, task, &configs[c], derive_seed(spec.seed, f as u64), &train.select_rows(&tr), n_grades)?;
            let vm = train.select_rows(&va);
            let pred = model.grades(&vm)?;
            let gold: Vec<usize> = va.iter().map(|&i| labels[i]).collect();
            let kappa = qwk_detail(&gold, &pred, n_grades)?;
            if kappa.degenerate {
                flags.push(format!("fold {f}: single shared grade"));
            }
            let e = mse(
                &gold.iter().map(|&g| g as f64).collect::<Vec<_>>(),
                &pred.iter().map(|&g| g as f64).collect::<Vec<_>>(),
            )?;
            Ok((kappa.value, e, flags))
        })
        .collect();

    let mut table = Vec::with_capacity(configs.len());
    let mut it = results.into_iter();
    for (setting, params) in settings.into_iter().zip(&configs) {
        let mut row = CvRow { setting, params: *params, fold_qwk: vec![], fold_mse: vec![], mean_qwk: 0.0, mean_mse: 0.0, flags: vec![] };
        for _ in 0..spec.folds {
            let (q, e, flags) = it.next().unwrap()?;
            row.fold_qwk.push(q);
            row.fold_mse.push(e);
            row.flags.extend(flags);
        }
        row.mean_qwk = row.fold_qwk.iter().sum::<f64>() / spec.folds as f64;
        row.mean_mse = row.fold_mse.iter().sum::<f64>() / spec.folds as f64;
        table.push(row);
    }
    let mut best = 0;
    for (i, row) in table.iter().enumerate().skip(1) {
        let b = &table[best];
        if row.mean_qwk > b.mean_qwk || (row.mean_qwk == b.mean_qwk && row.mean_mse < b.mean_mse) {
            best = i;
        }
    }
    Ok(GridResult { family, task, best, best_params: table[best].params, table })
}
