use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::learner::{Node, TreeEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    Gain,
    SplitCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub method: ImportanceMethod,
    /// Descending by importance, ties by name. Empty for a split-free model.
    pub entries: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ImportanceRanking {
    pub fn get(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == feature).map(|(_, v)| *v)
    }

    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == feature)
    }
}

fn rank(model: &TreeEnsemble, method: ImportanceMethod) -> ImportanceRanking {
    let mut totals: BTreeMap<usize, f64> = BTreeMap::new();
    for tree in &model.trees {
        for node in &tree.nodes {
            if let Node::Split { feature, gain, .. } = node {
                let v = match method {
                    ImportanceMethod::Gain => *gain,
                    ImportanceMethod::SplitCount => 1.0,
                };
                *totals.entry(*feature).or_default() += v;
            }
        }
    }
    let sum: f64 = totals.values().sum();
    if totals.is_empty() || sum <= 0.0 {
        return ImportanceRanking { method, entries: vec![], flags: vec!["model has no splits".into()] };
    }
    let mut entries: Vec<(String, f64)> = model
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), totals.get(&j).copied().unwrap_or(0.0) / sum))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ImportanceRanking { method, entries, flags: vec![] }
}

/// Total split gain per feature over all trees, normalized to sum to one.
/// Gains are weighted squared-error reductions, so they already scale with
/// the cover of the node that was split.
pub fn gain_importance(model: &TreeEnsemble) -> ImportanceRanking {
    rank(model, ImportanceMethod::Gain)
}

pub fn split_count_importance(model: &TreeEnsemble) -> ImportanceRanking {
    rank(model, ImportanceMethod::SplitCount)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{fit_gbt_regressor, GbtParams, Task, Tree, TreeParams};
    use crate::seeding::rng_for;
    use rand::Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn only_split_feature_gets_everything() {
        let t = Tree {
            nodes: vec![
                Node::Split { feature: 3, threshold: 0.0, left: 1, right: 2, cover: 4.0, gain: 2.5 },
                Node::Leaf { value: vec![0.0], cover: 2.0 },
                Node::Leaf { value: vec![1.0], cover: 2.0 },
            ],
        };
        let r = gain_importance(&TreeEnsemble::single(t, Task::Regression, names(5)));
        assert_eq!(r.entries[0], ("x3".to_string(), 1.0));
        assert!(r.entries[1..].iter().all(|(_, v)| *v == 0.0));
        assert_eq!(r.entries[1].0, "x0");
    }

    #[test]
    fn leaf_only_model_is_empty() {
        let r = gain_importance(&TreeEnsemble::single(Tree::leaf(vec![2.0], 3.0), Task::Regression, names(2)));
        assert!(r.entries.is_empty());
        assert_eq!(r.flags.len(), 1);
    }

    #[test]
    fn symmetric_additive_model() {
        let mut rng = rng_for(21, 0);
        let x: Vec<Vec<f64>> = (0..600).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
        let params = GbtParams { n_stages: 100, learning_rate: 0.1, tree: TreeParams { max_depth: 3, ..Default::default() } };
        let (m, _) = fit_gbt_regressor(&x, &y, &vec![1.0; 600], &params, names(2));
        let r = gain_importance(&m);
        let total: f64 = r.entries.iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!((r.get("x0").unwrap() - r.get("x1").unwrap()).abs() < 0.1, "{:?}", r.entries);
        let c = split_count_importance(&m);
        assert!((c.entries.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
