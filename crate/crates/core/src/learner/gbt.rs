use serde::{Deserialize, Serialize};

use super::model::{softmax, EnsembleKind, Task, TreeEnsemble};
use super::tree::{fit_tree_presorted, Presorted, Targets, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams { n_stages: 100, learning_rate: 0.1, tree: TreeParams { max_depth: 3, ..Default::default() } }
    }
}

fn weighted_mse(y: &[f64], f: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    y.iter().zip(f).zip(w).map(|((y, f), w)| w * (y - f).powi(2)).sum::<f64>() / total
}

/// Squared-loss boosting. Returns the model and the weighted training MSE
/// before the first stage and after every stage.
pub fn fit_gbt_regressor(
    x: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    params: &GbtParams,
    feature_names: Vec<String>,
) -> (TreeEnsemble, Vec<f64>) {
    let nu = params.learning_rate;
    let total: f64 = weights.iter().sum();
    let base = y.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total;
    let mut f = vec![base; y.len()];
    let presorted = Presorted::new(x);
    let counts = vec![1u32; y.len()];
    let mut trees = Vec::with_capacity(params.n_stages);
    let mut loss = vec![weighted_mse(y, &f, weights)];
    for _ in 0..params.n_stages.max(1) {
        let residual: Vec<f64> = y.iter().zip(&f).map(|(y, f)| y - f).collect();
        let tree = fit_tree_presorted(x, &presorted, &Targets::scalar(&residual), weights, &counts, &params.tree, None);
        for (fi, row) in f.iter_mut().zip(x) {
            *fi += nu * tree.predict(row)[0];
        }
        loss.push(weighted_mse(y, &f, weights));
        trees.push(tree);
    }
    let model = TreeEnsemble {
        kind: EnsembleKind::GbtRegressor,
        task: Task::Regression,
        trees,
        tree_weight: nu,
        base_score: vec![base],
        feature_names,
    };
    (model, loss)
}

fn log_loss(labels: &[usize], f: &[Vec<f64>], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    labels
        .iter()
        .zip(f)
        .zip(w)
        .map(|((&l, s), w)| -w * softmax(s)[l].max(1e-300).ln())
        .sum::<f64>()
        / total
}

/// Softmax boosting with one tree per class per stage. Each class tree is
/// grown on the negative gradient and its leaves take a one-step Newton value.
pub fn fit_gbt_classifier(
    x: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    weights: &[f64],
    params: &GbtParams,
    feature_names: Vec<String>,
) -> (TreeEnsemble, Vec<f64>) {
    let k = n_classes.max(2);
    let nu = params.learning_rate;
    let total: f64 = weights.iter().sum();
    let mut prior = vec![0.0; k];
    for (&l, w) in labels.iter().zip(weights) {
        prior[l] += w / total;
    }
    let base: Vec<f64> = prior.iter().map(|p| p.max(1e-6).ln()).collect();
    let mut f: Vec<Vec<f64>> = vec![base.clone(); labels.len()];
    let presorted = Presorted::new(x);
    let counts = vec![1u32; labels.len()];
    let mut trees = Vec::new();
    let mut loss = vec![log_loss(labels, &f, weights)];
    let scale = (k as f64 - 1.0) / k as f64;
    for _ in 0..params.n_stages.max(1) {
        let probs: Vec<Vec<f64>> = f.iter().map(|s| softmax(s)).collect();
        let mut stage = Vec::with_capacity(k);
        for class in 0..k {
            let g: Vec<f64> = labels
                .iter()
                .zip(&probs)
                .map(|(&l, p)| if l == class { 1.0 } else { 0.0 } - p[class])
                .collect();
            let mut tree = fit_tree_presorted(x, &presorted, &Targets::scalar(&g), weights, &counts, &params.tree, None);
            let mut num = vec![0.0; tree.nodes.len()];
            let mut den = vec![0.0; tree.nodes.len()];
            for ((row, gi), w) in x.iter().zip(&g).zip(weights) {
                let leaf = tree.leaf_index(row);
                num[leaf] += w * gi;
                den[leaf] += w * gi.abs() * (1.0 - gi.abs());
            }
            for (i, value) in tree.leaf_values_mut() {
                let gamma = if den[i] > 1e-12 { scale * num[i] / den[i] } else { 0.0 };
                let mut v = vec![0.0; k];
                v[class] = gamma;
                *value = v;
            }
            stage.push(tree);
        }
        for (fi, row) in f.iter_mut().zip(x) {
            for (class, tree) in stage.iter().enumerate() {
                fi[class] += nu * tree.predict(row)[class];
            }
        }
        loss.push(log_loss(labels, &f, weights));
        trees.extend(stage);
    }
    let model = TreeEnsemble {
        kind: EnsembleKind::GbtClassifier,
        task: Task::Classification,
        trees,
        tree_weight: nu,
        base_score: base,
        feature_names,
    };
    (model, loss)
}
