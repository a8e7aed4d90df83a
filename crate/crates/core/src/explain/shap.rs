use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{EnsembleKind, FittedModel, Model, Node, Tree, TreeEnsemble};
use crate::matrix::FeatureMatrix;

pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Linear read-out of the ensemble's outputs that is being explained. The
/// explained value is `sum_k coef[k] * raw_k(x)`.
pub fn output_coefficients(model: &TreeEnsemble, output: Option<usize>) -> Vec<f64> {
    let k = model.n_outputs();
    match output {
        Some(o) => (0..k).map(|i| if i == o { 1.0 } else { 0.0 }).collect(),
        None if k == 1 => vec![1.0],
        // Averaged class scores: the expected grade is linear in them.
        None if model.kind != EnsembleKind::GbtClassifier => (0..k).map(|i| i as f64).collect(),
        // Softmax margins are not additive in probability; default to the top grade.
        None => (0..k).map(|i| if i + 1 == k { 1.0 } else { 0.0 }).collect(),
    }
}

fn leaf_scalar(value: &[f64], coef: &[f64]) -> f64 {
    value.iter().zip(coef).map(|(v, c)| v * c).sum()
}

fn check_cover(tree: &Tree) -> Result<()> {
    for (i, n) in tree.nodes.iter().enumerate() {
        if let Node::Split { cover, .. } = n {
            if !(*cover > 0.0) {
                return Err(Error::DegenerateCover { node: i });
            }
        }
    }
    Ok(())
}

/// Cover-weighted mean leaf output of one tree.
fn expected_value(tree: &Tree, coef: &[f64]) -> f64 {
    fn go(t: &Tree, i: usize, coef: &[f64]) -> f64 {
        match &t.nodes[i] {
            Node::Leaf { value, .. } => leaf_scalar(value, coef),
            Node::Split { left, right, cover, .. } => {
                let (l, r) = (&t.nodes[*left], &t.nodes[*right]);
                (l.cover() * go(t, *left, coef) + r.cover() * go(t, *right, coef)) / cover
            }
        }
    }
    go(tree, 0, coef)
}

pub fn base_value(model: &TreeEnsemble, coef: &[f64]) -> f64 {
    leaf_scalar(&model.base_score, coef) + model.trees.iter().map(|t| model.tree_weight * expected_value(t, coef)).sum::<f64>()
}

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: usize,
    zero: f64,
    one: f64,
    weight: f64,
}

/// Feature index used for the root sentinel on a path.
const NO_FEATURE: usize = usize::MAX;

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: usize) {
    let d = path.len();
    path.push(PathElem { feature, zero, one, weight: if d == 0 { 1.0 } else { 0.0 } });
    for i in (0..d).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / (d + 1) as f64;
        path[i].weight = zero * path[i].weight * (d - i) as f64 / (d + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElem>, idx: usize) {
    let d = path.len() - 1;
    let PathElem { zero, one, .. } = path[idx];
    let mut next_one = path[d].weight;
    for j in (0..d).rev() {
        if one != 0.0 {
            let tmp = path[j].weight;
            path[j].weight = next_one * (d + 1) as f64 / ((j + 1) as f64 * one);
            next_one = tmp - path[j].weight * zero * (d - j) as f64 / (d + 1) as f64;
        } else {
            path[j].weight = path[j].weight * (d + 1) as f64 / (zero * (d - j) as f64);
        }
    }
    for j in idx..d {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

/// Total weight of `path` with element `idx` removed, without modifying it.
fn unwound_sum(path: &[PathElem], idx: usize) -> f64 {
    let d = path.len() - 1;
    let PathElem { zero, one, .. } = path[idx];
    let mut next_one = path[d].weight;
    let mut total = 0.0;
    for j in (0..d).rev() {
        if one != 0.0 {
            let tmp = next_one * (d + 1) as f64 / ((j + 1) as f64 * one);
            total += tmp;
            next_one = path[j].weight - tmp * zero * (d - j) as f64 / (d + 1) as f64;
        } else if zero != 0.0 {
            total += path[j].weight / zero / ((d - j) as f64 / (d + 1) as f64);
        }
    }
    total
}

struct Walk<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    coef: &'a [f64],
    scale: f64,
    phi: &'a mut [f64],
}

impl Walk<'_> {
    fn recurse(&mut self, node: usize, mut path: Vec<PathElem>, zero: f64, one: f64, feature: usize) {
        extend(&mut path, zero, one, feature);
        match &self.tree.nodes[node] {
            Node::Leaf { value, .. } => {
                let v = self.scale * leaf_scalar(value, self.coef);
                for i in 1..path.len() {
                    let w = unwound_sum(&path, i);
                    self.phi[path[i].feature] += w * (path[i].one - path[i].zero) * v;
                }
            }
            Node::Split { feature: f, threshold, left, right, cover, .. } => {
                let (hot, cold) = if self.x[*f] <= *threshold { (*left, *right) } else { (*right, *left) };
                let (mut iz, mut io) = (1.0, 1.0);
                if let Some(k) = (1..path.len()).find(|&k| path[k].feature == *f) {
                    iz = path[k].zero;
                    io = path[k].one;
                    unwind(&mut path, k);
                }
                let hot_frac = self.tree.nodes[hot].cover() / cover;
                let cold_frac = self.tree.nodes[cold].cover() / cover;
                self.recurse(hot, path.clone(), iz * hot_frac, io, *f);
                self.recurse(cold, path, iz * cold_frac, 0.0, *f);
            }
        }
    }
}

/// Exact path-dependent Shapley values of one sample, plus the base value.
/// `base + sum(phi)` equals the explained output at `x`.
pub fn tree_shap(model: &TreeEnsemble, x: &[f64], coef: &[f64]) -> Result<(Vec<f64>, f64)> {
    let p = model.feature_names.len();
    let mut phi = vec![0.0; p];
    for tree in &model.trees {
        check_cover(tree)?;
        if matches!(tree.nodes[0], Node::Leaf { .. }) {
            continue;
        }
        let mut walk = Walk { tree, x, coef, scale: model.tree_weight, phi: &mut phi };
        walk.recurse(0, Vec::with_capacity(16), 1.0, 1.0, NO_FEATURE);
    }
    Ok((phi, base_value(model, coef)))
}

/// Value of coalition `mask`: features in the mask follow `x`, the others
/// are averaged out by child cover.
fn coalition_value(model: &TreeEnsemble, x: &[f64], coef: &[f64], mask: u32) -> f64 {
    fn go(t: &Tree, i: usize, x: &[f64], coef: &[f64], mask: u32) -> f64 {
        match &t.nodes[i] {
            Node::Leaf { value, .. } => leaf_scalar(value, coef),
            Node::Split { feature, threshold, left, right, cover, .. } => {
                if mask & (1 << feature) != 0 {
                    go(t, if x[*feature] <= *threshold { *left } else { *right }, x, coef, mask)
                } else {
                    (t.nodes[*left].cover() * go(t, *left, x, coef, mask)
                        + t.nodes[*right].cover() * go(t, *right, x, coef, mask))
                        / cover
                }
            }
        }
    }
    leaf_scalar(&model.base_score, coef)
        + model.trees.iter().map(|t| model.tree_weight * go(t, 0, x, coef, mask)).sum::<f64>()
}

/// Shapley values by enumerating every coalition. Exponential; used to check
/// `tree_shap`.
pub fn brute_force_shap(model: &TreeEnsemble, x: &[f64], coef: &[f64]) -> Result<Vec<f64>> {
    let p = model.feature_names.len();
    if p > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyFeatures(p));
    }
    for t in &model.trees {
        check_cover(t)?;
    }
    let v: Vec<f64> = (0..1u32 << p).map(|m| coalition_value(model, x, coef, m)).collect();
    let fact: Vec<f64> = (0..=p).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    }).collect();
    let mut phi = vec![0.0; p];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        for mask in 0..1u32 << p {
            if mask & (1 << i) != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact[s] * fact[p - s - 1] / fact[p];
            *phi_i += w * (v[(mask | (1 << i)) as usize] - v[mask as usize]);
        }
    }
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub feature_names: Vec<String>,
    pub row_ids: Vec<String>,
    pub base_value: f64,
    /// `phi[row][feature]`.
    pub phi: Vec<Vec<f64>>,
    /// Original (unstandardized) feature values, for coloring summaries.
    pub feature_values: Vec<Vec<f64>>,
    /// Explained output at each row.
    pub prediction: Vec<f64>,
}

/// SHAP for every row of `m`. Classifier outputs are read out with
/// `output_coefficients(_, output)`.
pub fn explain_matrix(model: &FittedModel, m: &FeatureMatrix, output: Option<usize>) -> Result<ShapExplanation> {
    let Model::Trees(ensemble) = &model.model else {
        return Err(Error::Invalid(format!("SHAP is only defined here for tree models, not {}", model.family)));
    };
    if m.n_rows() == 0 {
        return Err(Error::Invalid("nothing to explain: matrix has no rows".into()));
    }
    let coef = output_coefficients(ensemble, output);
    let cols = model.column_map(m)?;
    let raw: Vec<Vec<f64>> = m.data.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
    let results: Vec<Result<(Vec<f64>, f64, f64)>> = raw
        .par_iter()
        .map(|r| {
            let x = model.prepare(r);
            let (phi, base) = tree_shap(ensemble, &x, &coef)?;
            let pred = leaf_scalar(&ensemble.raw(&x), &coef);
            Ok((phi, base, pred))
        })
        .collect();
    let mut phi = Vec::with_capacity(raw.len());
    let mut prediction = Vec::with_capacity(raw.len());
    let mut base_value = 0.0;
    for r in results {
        let (p, b, y) = r?;
        phi.push(p);
        prediction.push(y);
        base_value = b;
    }
    Ok(ShapExplanation {
        feature_names: model.feature_names().to_vec(),
        row_ids: m.row_ids.clone(),
        base_value,
        phi,
        feature_values: raw,
        prediction,
    })
}

impl ShapExplanation {
    /// Largest `|base + sum(phi) - prediction|` over rows.
    pub fn max_local_error(&self) -> f64 {
        self.phi
            .iter()
            .zip(&self.prediction)
            .map(|(p, y)| (self.base_value + p.iter().sum::<f64>() - y).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub feature: String,
    pub row_id: String,
    pub phi: f64,
    /// Feature value z-scored over the explained rows (0 for a constant column).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    /// (feature, mean |phi|), descending, ties by name.
    pub ranking: Vec<(String, f64)>,
    /// Points in ranking order, rows in input order within a feature.
    pub points: Vec<SummaryPoint>,
}

impl ShapSummary {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.ranking.iter().position(|(n, _)| n == feature)
    }
}

pub fn shap_summary(e: &ShapExplanation) -> ShapSummary {
    let n = e.phi.len() as f64;
    let p = e.feature_names.len();
    let mut ranking: Vec<(String, f64)> = (0..p)
        .map(|j| (e.feature_names[j].clone(), e.phi.iter().map(|r| r[j].abs()).sum::<f64>() / n))
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut points = Vec::with_capacity(e.phi.len() * p);
    for (name, _) in &ranking {
        let j = e.feature_names.iter().position(|f| f == name).unwrap();
        let col: Vec<f64> = e.feature_values.iter().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        for (i, v) in col.iter().enumerate() {
            points.push(SummaryPoint {
                feature: name.clone(),
                row_id: e.row_ids[i].clone(),
                phi: e.phi[i][j],
                value: if sd > 0.0 { (v - mean) / sd } else { 0.0 },
            });
        }
    }
    ShapSummary { ranking, points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{fit_gbt_regressor, GbtParams, Task, TreeParams};
    use crate::seeding::rng_for;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("x{i}")).collect()
    }

    fn stump(a: f64, b: f64, cl: f64, cr: f64) -> TreeEnsemble {
        let t = Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.0, left: 1, right: 2, cover: cl + cr, gain: 1.0 },
                Node::Leaf { value: vec![a], cover: cl },
                Node::Leaf { value: vec![b], cover: cr },
            ],
        };
        TreeEnsemble::single(t, Task::Regression, names(2))
    }

    #[test]
    fn two_leaf_by_hand() {
        let m = stump(1.0, 5.0, 3.0, 3.0);
        let (phi, base) = tree_shap(&m, &[1.0, 0.0], &[1.0]).unwrap();
        assert!((base - 3.0).abs() < 1e-12);
        assert!((phi[0] - 2.0).abs() < 1e-12);
        assert_eq!(phi[1], 0.0);
    }

    #[test]
    fn leaf_only_tree() {
        let m = TreeEnsemble::single(Tree::leaf(vec![4.0], 2.0), Task::Regression, names(3));
        let (phi, base) = tree_shap(&m, &[0.0; 3], &[1.0]).unwrap();
        assert_eq!(phi, vec![0.0; 3]);
        assert_eq!(base, 4.0);
    }

    #[test]
    fn zero_cover_is_an_error() {
        let m = stump(1.0, 2.0, 0.0, 0.0);
        assert!(matches!(tree_shap(&m, &[0.0, 0.0], &[1.0]), Err(Error::DegenerateCover { node: 0 })));
    }

    #[test]
    fn single_feature_efficiency() {
        let m = stump(-2.0, 7.0, 1.0, 4.0);
        let x = [-3.0, 0.0];
        let phi = brute_force_shap(&m, &x, &[1.0]).unwrap();
        assert!((phi[0] - (-2.0 - base_value(&m, &[1.0]))).abs() < 1e-12);
    }

    #[test]
    fn too_many_features_is_refused() {
        let m = TreeEnsemble::single(Tree::leaf(vec![0.0], 1.0), Task::Regression, names(13));
        assert!(matches!(brute_force_shap(&m, &[0.0; 13], &[1.0]), Err(Error::TooManyFeatures(13))));
    }

    #[test]
    fn duplicated_structure_gives_equal_phi() {
        // x0 and x1 split identically at every level with the same covers.
        let t = Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, cover: 8.0, gain: 1.0 },
                Node::Split { feature: 1, threshold: 0.5, left: 3, right: 4, cover: 4.0, gain: 1.0 },
                Node::Split { feature: 1, threshold: 0.5, left: 5, right: 6, cover: 4.0, gain: 1.0 },
                Node::Leaf { value: vec![0.0], cover: 2.0 },
                Node::Leaf { value: vec![1.0], cover: 2.0 },
                Node::Leaf { value: vec![1.0], cover: 2.0 },
                Node::Leaf { value: vec![2.0], cover: 2.0 },
            ],
        };
        let m = TreeEnsemble::single(t, Task::Regression, names(2));
        let (phi, _) = tree_shap(&m, &[1.0, 1.0], &[1.0]).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-12);
    }

    /// Random tree of depth at most 3 over `p` features with positive covers.
    fn random_tree(rng: &mut ChaCha8Rng, p: usize) -> Tree {
        fn grow(rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>, depth: usize, p: usize, cover: f64) -> usize {
            let id = nodes.len();
            nodes.push(Node::Leaf { value: vec![rng.gen_range(-5.0..5.0)], cover });
            if depth < 3 && rng.gen_bool(0.75) {
                let frac = rng.gen_range(0.05..0.95);
                let feature = rng.gen_range(0..p);
                let threshold = rng.gen_range(-1.0..1.0);
                let left = grow(rng, nodes, depth + 1, p, cover * frac);
                let right = grow(rng, nodes, depth + 1, p, cover * (1.0 - frac));
                nodes[id] = Node::Split { feature, threshold, left, right, cover, gain: 1.0 };
            }
            id
        }
        let mut nodes = Vec::new();
        let cover = rng.gen_range(1.0..100.0);
        grow(rng, &mut nodes, 0, p, cover);
        Tree { nodes }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_brute_force(seed in any::<u64>(), p in 1usize..=8, n_trees in 1usize..=3) {
            let mut rng = rng_for(seed, 0);
            let trees = (0..n_trees).map(|_| random_tree(&mut rng, p)).collect();
            let m = TreeEnsemble {
                kind: EnsembleKind::GbtRegressor,
                task: Task::Regression,
                trees,
                tree_weight: 0.3,
                base_score: vec![rng.gen_range(-1.0..1.0)],
                feature_names: names(p),
            };
            let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let (phi, base) = tree_shap(&m, &x, &[1.0]).unwrap();
            let oracle = brute_force_shap(&m, &x, &[1.0]).unwrap();
            for (a, b) in phi.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9, "{phi:?} vs {oracle:?}");
            }
            prop_assert!((base + phi.iter().sum::<f64>() - m.raw(&x)[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn trained_gbt_local_accuracy_and_dummy() {
        let mut rng = rng_for(5, 1);
        let x: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        // x3 is constant so no tree can use it.
        let x: Vec<Vec<f64>> = x.into_iter().map(|mut r| { r[3] = 0.25; r }).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1] + r[2]).collect();
        let params = GbtParams { n_stages: 50, learning_rate: 0.1, tree: TreeParams { max_depth: 4, ..Default::default() } };
        let (m, _) = fit_gbt_regressor(&x, &y, &vec![1.0; 300], &params, names(4));
        for row in &x {
            let (phi, base) = tree_shap(&m, row, &[1.0]).unwrap();
            assert!((base + phi.iter().sum::<f64>() - m.raw(row)[0]).abs() < 1e-6);
            assert_eq!(phi[3], 0.0);
        }
    }

    #[test]
    fn summary_ranks_by_mean_abs_phi() {
        let e = ShapExplanation {
            feature_names: names(3),
            row_ids: vec!["a".into(), "b".into()],
            base_value: 0.0,
            phi: vec![vec![0.0, 1.0, 0.0], vec![0.0, -3.0, 0.0]],
            feature_values: vec![vec![1.0, 2.0, 3.0], vec![1.0, 4.0, 5.0]],
            prediction: vec![1.0, -3.0],
        };
        let s = shap_summary(&e);
        assert_eq!(s.ranking[0], ("x1".to_string(), 2.0));
        assert_eq!(s.ranking[1].0, "x0");
        assert_eq!(s.ranking[2].0, "x2");
        assert_eq!(s.points.len(), 6);
        assert_eq!(s.points[0].value, -1.0);
        assert_eq!(s.points[2].value, 0.0);
    }
}
