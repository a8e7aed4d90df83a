//! Tree learners, linear baselines and model selection.

pub mod forest;
pub mod gbt;
pub mod grid;
pub mod linear;
pub mod model;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, ForestParams};
pub use gbt::{fit_gbt_classifier, fit_gbt_regressor, GbtParams};
pub use grid::{grid_search, CvRow, GridResult, GridSpec};
pub use linear::{fit_linear, fit_logistic, LinearModel, LogisticModel};
pub use model::{softmax, EnsembleKind, Family, FittedModel, Model, Task, TreeEnsemble};
pub use tree::{fit_tree, Node, Targets, Tree, TreeParams};

use crate::corpus::Standardizer;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Name of the word-count column used by the length-only baseline.
pub const LENGTH_FEATURE: &str = "W";

/// Balanced weights `n / (K * n_k)` over the classes that occur.
pub fn class_weights(labels: &[usize]) -> Vec<f64> {
    let k_max = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k_max];
    for &l in labels {
        counts[l] += 1;
    }
    let k = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = labels.len() as f64;
    labels.iter().map(|&l| n / (k * counts[l] as f64)).collect()
}

/// Every tunable knob of every family. Families ignore the knobs they do not use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Features tried per split; 0 means all for single trees and boosting
    /// and `max(1, p/3)` for forests.
    pub mtry: usize,
    pub n_trees: usize,
    pub bootstrap: bool,
    pub n_stages: usize,
    pub learning_rate: f64,
    /// Balanced class weights for the classification formulation.
    pub class_weighting: bool,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            max_depth: 4,
            min_samples_leaf: 1,
            min_samples_split: 2,
            mtry: 0,
            n_trees: 100,
            bootstrap: true,
            n_stages: 100,
            learning_rate: 0.1,
            class_weighting: true,
        }
    }
}

impl Params {
    pub const KNOBS: [&'static str; 8] =
        ["max_depth", "min_samples_leaf", "min_samples_split", "mtry", "n_trees", "bootstrap", "n_stages", "learning_rate"];

    /// Sets a knob from a grid value.
    pub fn set(&mut self, name: &str, v: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Invalid(format!("{name} must be a non-negative integer, got {v}")))
            }
        };
        match name {
            "max_depth" => self.max_depth = count(v)?,
            "min_samples_leaf" => self.min_samples_leaf = count(v)?,
            "min_samples_split" => self.min_samples_split = count(v)?,
            "mtry" => self.mtry = count(v)?,
            "n_trees" => self.n_trees = count(v)?.max(1),
            "bootstrap" => self.bootstrap = v != 0.0,
            "n_stages" => self.n_stages = count(v)?.max(1),
            "learning_rate" => {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::Invalid(format!("learning_rate must be in (0, 1], got {v}")));
                }
                self.learning_rate = v
            }
            _ => return Err(Error::Invalid(format!("unknown hyperparameter {name:?}"))),
        }
        Ok(())
    }

    fn tree(&self, mtry: Option<usize>) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            min_samples_split: self.min_samples_split,
            mtry,
        }
    }
}

/// Number of grade levels a prompt uses: one past the highest ordinal seen.
pub fn n_grades_of(m: &FeatureMatrix) -> Result<usize> {
    let t = m.targets()?;
    Ok(t.iter().copied().max().map_or(2, |g| (g + 1).max(2)))
}

/// Fits one model on every row of `train`. Inputs are standardized with
/// statistics of these rows; the length-only family keeps only `W`.
pub fn fit_model(
    family: Family,
    task: Task,
    params: &Params,
    seed: u64,
    train: &FeatureMatrix,
    n_grades: usize,
) -> Result<FittedModel> {
    let train = if family == Family::LengthOnly {
        let j = train
            .column_index(LENGTH_FEATURE)
            .ok_or_else(|| Error::MissingGroup(format!("GVF (the length-only baseline needs column {LENGTH_FEATURE})")))?;
        train.select_columns(&[j])
    } else {
        train.clone()
    };
    if train.n_cols() == 0 {
        return Err(Error::Invalid("no feature columns to train on".into()));
    }
    let labels = train.targets()?;
    if let Some(&g) = labels.iter().find(|&&g| g >= n_grades) {
        return Err(Error::Invalid(format!("grade ordinal {g} outside the {n_grades} levels")));
    }
    let standardizer = Standardizer::fit(&train)?;
    let x = standardizer.apply(&train)?.data;
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features"));
    }
    let names = train.names();
    let y: Vec<f64> = labels.iter().map(|&g| g as f64).collect();
    let weights = if task == Task::Classification && params.class_weighting {
        class_weights(&labels)
    } else {
        vec![1.0; labels.len()]
    };
    let p = names.len();
    let model = match (family, task) {
        (Family::Linear, Task::Regression) => Model::Linear(fit_linear(&x, &y, names)?),
        (Family::Linear, Task::Classification) => Model::Logistic(fit_logistic(&x, &labels, n_grades, &weights, names)?),
        (Family::DecisionTree, _) => {
            let tp = params.tree((params.mtry > 0).then_some(params.mtry));
            let targets = targets_for(task, &y, &labels, n_grades);
            Model::Trees(TreeEnsemble::single(fit_tree(&x, &targets, &weights, &tp), task, names))
        }
        (Family::RandomForest | Family::LengthOnly, _) => {
            let mtry = if params.mtry > 0 { params.mtry } else { (p / 3).max(1) };
            let fp = ForestParams { n_trees: params.n_trees, bootstrap: params.bootstrap, tree: params.tree(Some(mtry)), seed };
            let targets = targets_for(task, &y, &labels, n_grades);
            Model::Trees(fit_forest(&x, &targets, &weights, &fp, task, names))
        }
        (Family::Gbt, _) => {
            let gp = GbtParams {
                n_stages: params.n_stages,
                learning_rate: params.learning_rate,
                tree: params.tree((params.mtry > 0).then_some(params.mtry)),
            };
            let (m, _) = match task {
                Task::Regression => fit_gbt_regressor(&x, &y, &weights, &gp, names),
                Task::Classification => fit_gbt_classifier(&x, &labels, n_grades, &weights, &gp, names),
            };
            Model::Trees(m)
        }
    };
    Ok(FittedModel { family, task, n_grades, standardizer, model })
}

fn targets_for(task: Task, y: &[f64], labels: &[usize], n_grades: usize) -> Targets {
    match task {
        Task::Regression => Targets::scalar(y),
        Task::Classification => Targets::one_hot(labels, n_grades),
    }
}
