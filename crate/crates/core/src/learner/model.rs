use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::linear::{LinearModel, LogisticModel};
use super::tree::Tree;
use crate::corpus::Standardizer;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::metrics::round_to_grade;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Regression, Task::Classification];

    pub fn name(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Invalid(format!("unknown formulation {s:?} (regression|classification)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    SingleTree,
    Forest,
    GbtRegressor,
    GbtClassifier,
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Trees plus the scale each tree's output is multiplied by: `1/n` for a
/// forest (averaging) and the learning rate for boosting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: EnsembleKind,
    pub task: Task,
    /// For `GbtClassifier`, stage-major with one tree per class.
    pub trees: Vec<Tree>,
    pub tree_weight: f64,
    pub base_score: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl TreeEnsemble {
    pub fn single(tree: Tree, task: Task, feature_names: Vec<String>) -> Self {
        let k = tree.n_outputs();
        TreeEnsemble { kind: EnsembleKind::SingleTree, task, trees: vec![tree], tree_weight: 1.0, base_score: vec![0.0; k], feature_names }
    }

    pub fn n_outputs(&self) -> usize {
        self.base_score.len()
    }

    /// Additive output before any link: `base + w * sum(tree outputs)`.
    pub fn raw(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_outputs()];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict(x)) {
                *o += v;
            }
        }
        out.iter().zip(&self.base_score).map(|(o, b)| b + self.tree_weight * o).collect()
    }

    pub fn proba(&self, x: &[f64]) -> Option<Vec<f64>> {
        match (self.task, self.kind) {
            (Task::Regression, _) => None,
            (Task::Classification, EnsembleKind::GbtClassifier) => Some(softmax(&self.raw(x))),
            (Task::Classification, _) => Some(self.raw(x)),
        }
    }

    pub fn predict_class(&self, x: &[f64]) -> usize {
        argmax(&self.proba(x).unwrap_or_else(|| self.raw(x)))
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.feature_names.len();
        for (i, t) in self.trees.iter().enumerate() {
            if t.max_feature().is_some_and(|f| f >= p) {
                return Err(Error::Invalid(format!("tree {i} references a feature beyond the {p} named")));
            }
            if t.n_outputs() != self.n_outputs() {
                return Err(Error::Invalid(format!("tree {i} has {} outputs, expected {}", t.n_outputs(), self.n_outputs())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Trees(TreeEnsemble),
    Linear(LinearModel),
    Logistic(LogisticModel),
}

impl Model {
    pub fn task(&self) -> Task {
        match self {
            Model::Trees(t) => t.task,
            Model::Linear(_) => Task::Regression,
            Model::Logistic(_) => Task::Classification,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            Model::Trees(t) => &t.feature_names,
            Model::Linear(m) => &m.feature_names,
            Model::Logistic(m) => &m.feature_names,
        }
    }

    pub fn proba(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            Model::Trees(t) => t.proba(x),
            Model::Linear(_) => None,
            Model::Logistic(m) => Some(m.proba(x)),
        }
    }

    /// Real-valued score: the regression output, or the expected grade
    /// under the class probabilities.
    pub fn score(&self, x: &[f64]) -> f64 {
        match (self, self.proba(x)) {
            (_, Some(p)) => p.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
            (Model::Trees(t), None) => t.raw(x)[0],
            (Model::Linear(m), None) => m.predict(x),
            (Model::Logistic(_), None) => unreachable!(),
        }
    }

    pub fn grade(&self, x: &[f64], n_grades: usize) -> usize {
        match self.proba(x) {
            Some(p) => argmax(&p).min(n_grades.saturating_sub(1)),
            None => round_to_grade(self.score(x), n_grades),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    DecisionTree,
    RandomForest,
    /// Gradient-boosted trees; fills the slot of the off-the-shelf booster.
    Gbt,
    LengthOnly,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Linear, Family::DecisionTree, Family::RandomForest, Family::Gbt, Family::LengthOnly];

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::DecisionTree => "decision_tree",
            Family::RandomForest => "random_forest",
            Family::Gbt => "gbt",
            Family::LengthOnly => "length_only",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Invalid(format!("unknown model family {s:?}")))
    }
}

/// A model together with the standardizer fitted on its training rows.
/// Inputs are selected from a matrix by name, so a model trained on a column
/// subset can score a wider matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub family: Family,
    pub task: Task,
    pub n_grades: usize,
    pub standardizer: Standardizer,
    pub model: Model,
}

impl FittedModel {
    pub fn feature_names(&self) -> &[String] {
        self.model.feature_names()
    }

    /// Column positions of the model's features in `m`.
    pub fn column_map(&self, m: &FeatureMatrix) -> Result<Vec<usize>> {
        let missing: Vec<&String> = self.feature_names().iter().filter(|n| m.column_index(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::ColumnMismatch(format!("matrix lacks model features {missing:?}")));
        }
        Ok(self.feature_names().iter().map(|n| m.column_index(n).unwrap()).collect())
    }

    /// Standardized model inputs for every row of `m`.
    pub fn design(&self, m: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        let cols = self.column_map(m)?;
        Ok(m.data.iter().map(|r| self.prepare(&cols.iter().map(|&j| r[j]).collect::<Vec<_>>())).collect())
    }

    /// Standardizes a raw row already in model feature order.
    pub fn prepare(&self, raw: &[f64]) -> Vec<f64> {
        let mut row = raw.to_vec();
        self.standardizer.transform_row(&mut row);
        row
    }

    pub fn score_raw(&self, raw: &[f64]) -> f64 {
        self.model.score(&self.prepare(raw))
    }

    pub fn scores(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.design(m)?.iter().map(|r| self.model.score(r)).collect())
    }

    pub fn grades(&self, m: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(self.design(m)?.iter().map(|r| self.model.grade(r, self.n_grades)).collect())
    }

    pub fn to_json(&self) -> String {
        // Plain data with finite floats always serializes.
        serde_json::to_string_pretty(self).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("model json: {e}")))?;
        if let Model::Trees(t) = &m.model {
            t.validate()?;
        }
        if m.standardizer.columns != m.feature_names() {
            return Err(Error::Invalid("model json: standardizer columns differ from model features".into()));
        }
        Ok(m)
    }
}
