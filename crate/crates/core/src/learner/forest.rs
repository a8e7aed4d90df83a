use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{EnsembleKind, Task, TreeEnsemble};
use super::tree::{fit_tree_presorted, Presorted, Targets, TreeParams};
use crate::seeding::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, bootstrap: true, tree: TreeParams { max_depth: 12, ..Default::default() }, seed: 0 }
    }
}

/// Bagged trees. Tree `t` draws its bootstrap sample and feature subsets
/// from stream `t` of the seed, so the result does not depend on how trees
/// are scheduled across threads.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &Targets,
    weights: &[f64],
    params: &ForestParams,
    task: Task,
    feature_names: Vec<String>,
) -> TreeEnsemble {
    let n_trees = params.n_trees.max(1);
    let presorted = Presorted::new(x);
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(params.seed, t as u64);
            let mut counts = vec![0u32; x.len()];
            if params.bootstrap {
                for _ in 0..x.len() {
                    counts[rng.gen_range(0..x.len())] += 1;
                }
            } else {
                counts.iter_mut().for_each(|c| *c = 1);
            }
            fit_tree_presorted(x, &presorted, y, weights, &counts, &params.tree, Some(&mut rng))
        })
        .collect();
    TreeEnsemble {
        kind: EnsembleKind::Forest,
        task,
        trees,
        tree_weight: 1.0 / n_trees as f64,
        base_score: vec![0.0; y.dim],
        feature_names,
    }
}
