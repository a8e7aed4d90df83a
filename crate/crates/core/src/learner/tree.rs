//! CART trees with cover bookkeeping.

use rand::seq::index;
use rand::RngCore;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: f64,
        gain: f64,
    },
    Leaf {
        value: Vec<f64>,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Node array with the root at index 0. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: Vec<f64>, cover: f64) -> Tree {
        Tree { nodes: vec![Node::Leaf { value, cover }] }
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn n_outputs(&self) -> usize {
        self.nodes
            .iter()
            .find_map(|n| match n {
                Node::Leaf { value, .. } => Some(value.len()),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                _ => None,
            })
            .max()
    }

    pub fn leaf_values_mut(&mut self) -> impl Iterator<Item = (usize, &mut Vec<f64>)> {
        self.nodes.iter_mut().enumerate().filter_map(|(i, n)| match n {
            Node::Leaf { value, .. } => Some((i, value)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Features tried per split; `None` tries all.
    pub mtry: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 6, min_samples_leaf: 1, min_samples_split: 2, mtry: None }
    }
}

/// Row indices of every feature column, sorted by value (ties by row).
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, |r| r.len());
        let order = (0..p)
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.len() as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { order }
    }
}

/// Row-major targets with `dim` outputs per row.
#[derive(Debug, Clone)]
pub struct Targets {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Targets {
    pub fn scalar(y: &[f64]) -> Self {
        Targets { dim: 1, values: y.to_vec() }
    }

    pub fn one_hot(labels: &[usize], k: usize) -> Self {
        let mut values = vec![0.0; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            values[i * k + l] = 1.0;
        }
        Targets { dim: k, values }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

struct Builder<'a, 'r> {
    x: &'a [Vec<f64>],
    y: &'a Targets,
    /// Per-row weight times bootstrap multiplicity.
    w: Vec<f64>,
    counts: &'a [u32],
    params: TreeParams,
    rng: Option<&'r mut dyn RngCore>,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_, '_> {
    fn sums(&self, rows: &[u32]) -> (f64, usize, Vec<f64>) {
        let mut s = vec![0.0; self.y.dim];
        let (mut w, mut n) = (0.0, 0);
        for &r in rows {
            let r = r as usize;
            w += self.w[r];
            n += self.counts[r] as usize;
            for (acc, v) in s.iter_mut().zip(self.y.row(r)) {
                *acc += self.w[r] * v;
            }
        }
        (w, n, s)
    }

    fn is_pure(&self, rows: &[u32]) -> bool {
        let first = self.y.row(rows[0] as usize);
        rows.iter().all(|&r| self.y.row(r as usize) == first)
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x[0].len();
        match (self.params.mtry, self.rng.as_mut()) {
            (Some(m), Some(rng)) if m < p => {
                let mut f = index::sample(&mut **rng, p, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, sorted: &[Vec<u32>], total_w: f64, total_n: usize, total_s: &[f64]) -> Option<Best> {
        let d = self.y.dim;
        let parent = total_s.iter().map(|s| s * s).sum::<f64>() / total_w;
        let msl = self.params.min_samples_leaf.max(1);
        let mut best: Option<Best> = None;
        let mut sl = vec![0.0; d];
        for f in self.candidate_features() {
            let rows = &sorted[f];
            sl.iter_mut().for_each(|v| *v = 0.0);
            let (mut wl, mut nl) = (0.0, 0usize);
            for k in 0..rows.len() - 1 {
                let r = rows[k] as usize;
                wl += self.w[r];
                nl += self.counts[r] as usize;
                for (acc, v) in sl.iter_mut().zip(self.y.row(r)) {
                    *acc += self.w[r] * v;
                }
                let a = self.x[r][f];
                let b = self.x[rows[k + 1] as usize][f];
                if a >= b || nl < msl || total_n - nl < msl {
                    continue;
                }
                let wr = total_w - wl;
                if wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                let mut score = 0.0;
                for j in 0..d {
                    let sr = total_s[j] - sl[j];
                    score += sl[j] * sl[j] / wl + sr * sr / wr;
                }
                let gain = score - parent;
                if gain > 0.0 && best.as_ref().is_none_or(|bst| gain > bst.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if !(threshold < b) {
                        threshold = a;
                    }
                    best = Some(Best { feature: f, threshold, gain });
                }
            }
        }
        best
    }

    fn build(&mut self, sorted: Vec<Vec<u32>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let (w, n, s) = self.sums(rows);
        let id = self.nodes.len();
        let leaf = Node::Leaf { value: s.iter().map(|v| v / w).collect(), cover: w };
        self.nodes.push(leaf);
        if depth >= self.params.max_depth
            || n < self.params.min_samples_split.max(2)
            || n < 2 * self.params.min_samples_leaf.max(1)
            || self.is_pure(rows)
        {
            return id;
        }
        let Some(best) = self.best_split(&sorted, w, n, &s) else {
            return id;
        };
        for &r in &sorted[0] {
            self.goes_left[r as usize] = self.x[r as usize][best.feature] <= best.threshold;
        }
        let (mut left, mut right): (Vec<Vec<u32>>, Vec<Vec<u32>>) = (Vec::new(), Vec::new());
        for col in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = col.into_iter().partition(|&r| self.goes_left[r as usize]);
            left.push(l);
            right.push(r);
        }
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        let cover = self.nodes[l].cover() + self.nodes[r].cover();
        self.nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left: l, right: r, cover, gain: best.gain.max(0.0) };
        id
    }
}

/// Greedy CART fit. `counts[i]` is row i's multiplicity (0 excludes it);
/// impurity is the weighted squared error of the target vectors, which for
/// one-hot class targets equals weighted Gini impurity.
pub fn fit_tree_presorted(
    x: &[Vec<f64>],
    presorted: &Presorted,
    y: &Targets,
    weights: &[f64],
    counts: &[u32],
    params: &TreeParams,
    rng: Option<&mut dyn RngCore>,
) -> Tree {
    let w: Vec<f64> = weights.iter().zip(counts).map(|(w, c)| w * *c as f64).collect();
    let sorted: Vec<Vec<u32>> = if presorted.order.is_empty() {
        vec![(0..x.len() as u32).filter(|&r| counts[r as usize] > 0).collect()]
    } else {
        presorted
            .order
            .iter()
            .map(|col| col.iter().copied().filter(|&r| counts[r as usize] > 0).collect())
            .collect()
    };
    let mut b = Builder { x, y, w, counts, params: *params, rng, nodes: Vec::new(), goes_left: vec![false; x.len()] };
    if sorted[0].is_empty() {
        return Tree::leaf(vec![0.0; y.dim], 0.0);
    }
    b.build(sorted, 0);
    Tree { nodes: b.nodes }
}

pub fn fit_tree(x: &[Vec<f64>], y: &Targets, weights: &[f64], params: &TreeParams) -> Tree {
    let counts = vec![1u32; x.len()];
    fit_tree_presorted(x, &Presorted::new(x), y, weights, &counts, params, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn two_level_step() {
        let t = fit_tree(&col(&[1.0, 2.0, 3.0, 4.0]), &Targets::scalar(&[0.0, 0.0, 10.0, 10.0]), &[1.0; 4], &TreeParams::default());
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
            }
            _ => panic!("root should split"),
        }
        assert_eq!(t.nodes.len(), 3);
        for (x, y) in [(1.0, 0.0), (2.0, 0.0), (3.0, 10.0), (4.0, 10.0)] {
            assert_eq!(t.predict(&[x]), &[y]);
        }
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let t = fit_tree(&col(&[1.0, 2.0, 3.0]), &Targets::scalar(&[0.1, 0.1, 0.1]), &[1.0; 3], &TreeParams::default());
        assert_eq!(t.nodes.len(), 1);
        assert!((t.predict(&[0.0])[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn depth_zero_is_one_leaf() {
        let p = TreeParams { max_depth: 0, ..Default::default() };
        let t = fit_tree(&col(&[1.0, 2.0]), &Targets::scalar(&[0.0, 4.0]), &[1.0; 2], &p);
        assert_eq!(t.nodes, vec![Node::Leaf { value: vec![2.0], cover: 2.0 }]);
    }

    #[test]
    fn oversized_leaf_minimum_gives_leaf() {
        let p = TreeParams { min_samples_leaf: 3, ..Default::default() };
        let t = fit_tree(&col(&[1.0, 2.0, 3.0, 4.0]), &Targets::scalar(&[0.0, 0.0, 1.0, 1.0]), &[1.0; 4], &p);
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn ties_go_to_lowest_feature() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|v| vec![*v, *v]).collect();
        let t = fit_tree(&x, &Targets::scalar(&[0.0, 0.0, 1.0, 1.0]), &[1.0; 4], &TreeParams::default());
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn gini_split_on_classes() {
        let t = fit_tree(&col(&[1.0, 2.0, 3.0, 4.0]), &Targets::one_hot(&[0, 0, 1, 1], 2), &[1.0; 4], &TreeParams::default());
        assert_eq!(t.predict(&[1.5]), &[1.0, 0.0]);
        assert_eq!(t.predict(&[3.5]), &[0.0, 1.0]);
        // parent gini 0.5 * weight 4
        assert!(matches!(t.nodes[0], Node::Split { gain, .. } if (gain - 2.0).abs() < 1e-12));
    }

    #[test]
    fn weights_move_the_leaf_mean() {
        let p = TreeParams { max_depth: 0, ..Default::default() };
        let t = fit_tree(&col(&[1.0, 2.0]), &Targets::scalar(&[0.0, 3.0]), &[1.0, 2.0], &p);
        assert_eq!(t.predict(&[0.0]), &[2.0]);
        assert_eq!(t.nodes[0].cover(), 3.0);
    }

    /// Best first split by exhaustive enumeration and direct SSE.
    fn best_stump_oracle(x: &[Vec<f64>], y: &[f64]) -> Option<(usize, f64, f64)> {
        let sse = |idx: &[usize]| {
            let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
            idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
        };
        let all: Vec<usize> = (0..y.len()).collect();
        let parent = sse(&all);
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[i][f] <= t);
                let gain = parent - sse(&l) - sse(&r);
                if best.is_none_or(|b| gain > b.2 + 1e-9) {
                    best = Some((f, t, gain));
                }
            }
        }
        best.filter(|b| b.2 > 1e-9)
    }

    fn check_covers(t: &Tree) {
        for n in &t.nodes {
            if let Node::Split { left, right, cover, gain, .. } = n {
                assert_eq!(*cover, t.nodes[*left].cover() + t.nodes[*right].cover());
                assert!(*gain >= 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn stump_matches_exhaustive_search(
            rows in proptest::collection::vec((0u8..6, 0u8..6, -5i8..5), 4..25)
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0 as f64, r.1 as f64]).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.2 as f64).collect();
            let p = TreeParams { max_depth: 1, ..Default::default() };
            let t = fit_tree(&x, &Targets::scalar(&y), &vec![1.0; y.len()], &p);
            match (best_stump_oracle(&x, &y), &t.nodes[0]) {
                (Some((f, thr, gain)), Node::Split { feature, threshold, gain: g, .. }) => {
                    prop_assert!((gain - g).abs() < 1e-9);
                    if (f, thr) != (*feature, *threshold) {
                        // only a numerical tie may pick a different split
                        let alt = best_stump_oracle(&x, &y).unwrap().2;
                        prop_assert!((alt - g).abs() < 1e-9);
                    }
                }
                (None, Node::Leaf { .. }) => {}
                (o, n) => prop_assert!(false, "oracle {:?} vs node {:?}", o, n),
            }
        }

        #[test]
        fn cover_is_additive(
            rows in proptest::collection::vec((proptest::collection::vec(-10.0f64..10.0, 3), -3.0f64..3.0, 0.1f64..3.0), 2..60),
            depth in 0usize..6,
            leaf in 1usize..4,
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let w: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let p = TreeParams { max_depth: depth, min_samples_leaf: leaf, ..Default::default() };
            let t = fit_tree(&x, &Targets::scalar(&y), &w, &p);
            check_covers(&t);
            prop_assert!(t.depth() <= depth);
            let total: f64 = w.iter().sum();
            prop_assert!((t.nodes[0].cover() - total).abs() < 1e-9 * total);
        }
    }
}
