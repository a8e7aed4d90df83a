use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AlignedResponse, Grade};
use crate::error::{Error, Result};
use crate::seeding::rng_for;

pub const SPLIT_RATIOS: [f64; 3] = [0.70, 0.10, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub valid: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitAssignment {
    pub fn ids(&self, split: Split) -> &BTreeSet<String> {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    fn ids_mut(&mut self, split: Split) -> &mut BTreeSet<String> {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|s| self.ids(*s).contains(id))
    }
}

/// Stratified split by grade.
///
/// Split sizes come from largest-remainder rounding of `n * ratio`. Per-grade
/// counts are then rounded from `n_g * size_s / n` so that every cell is the
/// floor or ceiling of its exact share while rows sum to the grade count and
/// columns to the split size; remainders are granted largest-first. Each
/// grade's ids are shuffled with a seeded generator before allocation.
pub fn stratified_split(
    corpus: &[AlignedResponse],
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || ratios.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Invalid(format!("bad split ratios {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    let ratios = ratios.map(|r| r / total);

    let mut by_grade: BTreeMap<Grade, Vec<&str>> = BTreeMap::new();
    for r in corpus {
        let g = r.grade.ok_or_else(|| Error::Ungraded(r.response_id.clone()))?;
        by_grade.entry(g).or_default().push(&r.response_id);
    }
    for (g, ids) in &by_grade {
        if ids.len() < 3 {
            return Err(Error::SparseGrade {
                grade: g.to_string(),
                count: ids.len(),
            });
        }
    }
    let n = corpus.len();
    let mut out = SplitAssignment {
        train: BTreeSet::new(),
        valid: BTreeSet::new(),
        test: BTreeSet::new(),
        ratios,
        seed,
    };
    if n == 0 {
        return Ok(out);
    }

    let sizes = largest_remainder(n, &ratios);
    let grade_counts: Vec<usize> = by_grade.values().map(Vec::len).collect();
    let cells = controlled_rounding(&grade_counts, &sizes);

    for ((grade, ids), row) in by_grade.into_iter().zip(cells) {
        let mut ids: Vec<&str> = ids;
        ids.sort_unstable();
        let mut rng = rng_for(seed, grade.ordinal() as u64);
        ids.shuffle(&mut rng);
        let mut it = ids.into_iter();
        for (split, count) in Split::ALL.into_iter().zip(row) {
            let dest = out.ids_mut(split);
            for id in it.by_ref().take(count) {
                dest.insert(id.to_string());
            }
        }
    }
    Ok(out)
}

/// Rounds `n * weights` to integers summing to `n`; ties go to the earlier slot.
pub(crate) fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Integer matrix with row sums `rows` and column sums `cols`, each cell the
/// floor or ceiling of `rows[i] * cols[j] / n`.
fn controlled_rounding(rows: &[usize], cols: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = rows.iter().sum();
    let exact: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| r as f64 * c as f64 / n as f64).collect())
        .collect();
    let mut cells: Vec<Vec<usize>> = exact
        .iter()
        .map(|row| row.iter().map(|x| (x + 1e-9).floor() as usize).collect())
        .collect();
    let mut row_need: Vec<usize> = rows
        .iter()
        .zip(&cells)
        .map(|(&r, row)| r - row.iter().sum::<usize>())
        .collect();
    let mut col_need: Vec<usize> = (0..cols.len())
        .map(|j| cols[j] - cells.iter().map(|row| row[j]).sum::<usize>())
        .collect();

    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (i, row) in exact.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let frac = x - cells[i][j] as f64;
            if frac > 1e-9 {
                candidates.push((i, j, frac));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));

    let mut open: Vec<bool> = vec![true; candidates.len()];
    for k in 0..candidates.len() {
        let (i, j, _) = candidates[k];
        open[k] = false;
        if row_need[i] == 0 || col_need[j] == 0 {
            continue;
        }
        row_need[i] -= 1;
        col_need[j] -= 1;
        let remaining: Vec<(usize, usize)> = candidates
            .iter()
            .zip(&open)
            .filter(|(_, o)| **o)
            .map(|(c, _)| (c.0, c.1))
            .collect();
        if can_complete(&row_need, &col_need, &remaining) {
            cells[i][j] += 1;
        } else {
            row_need[i] += 1;
            col_need[j] += 1;
        }
    }
    debug_assert!(row_need.iter().all(|&x| x == 0) && col_need.iter().all(|&x| x == 0));
    cells
}

/// Whether unit increments on `edges` can meet every row and column need
/// (bipartite b-matching via augmenting paths).
fn can_complete(row_need: &[usize], col_need: &[usize], edges: &[(usize, usize)]) -> bool {
    let need: usize = row_need.iter().sum();
    if need != col_need.iter().sum::<usize>() {
        return false;
    }
    let mut used = vec![false; edges.len()];
    let mut row_left = row_need.to_vec();
    let mut col_left = col_need.to_vec();
    let mut flow = 0;
    // Each augmentation: row with capacity -> alternating path -> column with capacity.
    loop {
        let mut found = false;
        for r in 0..row_left.len() {
            if row_left[r] == 0 {
                continue;
            }
            let mut seen_rows = vec![false; row_left.len()];
            if augment(r, &mut used, &mut col_left, edges, &mut seen_rows) {
                row_left[r] -= 1;
                flow += 1;
                found = true;
                break;
            }
        }
        if !found {
            break;
        }
    }
    flow == need
}

fn augment(
    row: usize,
    used: &mut [bool],
    col_left: &mut [usize],
    edges: &[(usize, usize)],
    seen_rows: &mut [bool],
) -> bool {
    seen_rows[row] = true;
    for (k, &(r, c)) in edges.iter().enumerate() {
        if r != row || used[k] {
            continue;
        }
        if col_left[c] > 0 {
            col_left[c] -= 1;
            used[k] = true;
            return true;
        }
        // Reroute: some used edge (r2, c) could move to another column.
        for (k2, &(r2, c2)) in edges.iter().enumerate() {
            if c2 == c && used[k2] && !seen_rows[r2] && augment(r2, used, col_left, edges, seen_rows) {
                used[k2] = false;
                used[k] = true;
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(counts: &[(Grade, usize)]) -> Vec<AlignedResponse> {
        let mut out = Vec::new();
        for (g, c) in counts {
            for i in 0..*c {
                out.push(AlignedResponse {
                    response_id: format!("{g}-{i:04}"),
                    prompt_id: "p".into(),
                    words: vec![],
                    tokens: vec![],
                    syntax: None,
                    transcript: String::new(),
                    audio: None,
                    grade: Some(*g),
                    second_grade: None,
                });
            }
        }
        out
    }

    fn grade_count(c: &[AlignedResponse], ids: &BTreeSet<String>, g: Grade) -> usize {
        c.iter()
            .filter(|r| r.grade == Some(g) && ids.contains(&r.response_id))
            .count()
    }

    #[test]
    fn hundred_responses_fifty_thirty_twenty() {
        let c = corpus(&[(Grade::A2, 50), (Grade::LB1, 30), (Grade::HB1, 20)]);
        let s = stratified_split(&c, SPLIT_RATIOS, 1).unwrap();
        assert_eq!(s.train.len(), 70);
        assert_eq!(s.valid.len(), 10);
        assert_eq!(s.test.len(), 20);
        assert_eq!(grade_count(&c, &s.test, Grade::A2), 10);
        assert_eq!(grade_count(&c, &s.test, Grade::LB1), 6);
        assert_eq!(grade_count(&c, &s.test, Grade::HB1), 4);
    }

    #[test]
    fn deterministic_for_seed() {
        let c = corpus(&[(Grade::A2, 17), (Grade::LB1, 23), (Grade::HB1, 9)]);
        assert_eq!(
            stratified_split(&c, SPLIT_RATIOS, 5).unwrap(),
            stratified_split(&c, SPLIT_RATIOS, 5).unwrap()
        );
        assert_ne!(
            stratified_split(&c, SPLIT_RATIOS, 5).unwrap().test,
            stratified_split(&c, SPLIT_RATIOS, 6).unwrap().test
        );
    }

    #[test]
    fn sparse_grade_is_named() {
        let c = corpus(&[(Grade::A2, 10), (Grade::HB2, 1)]);
        match stratified_split(&c, SPLIT_RATIOS, 0) {
            Err(Error::SparseGrade { grade, count }) => {
                assert_eq!(grade, "HB2");
                assert_eq!(count, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(100, &SPLIT_RATIOS), vec![70, 10, 20]);
        assert_eq!(largest_remainder(7, &SPLIT_RATIOS).iter().sum::<usize>(), 7);
    }

    proptest! {
        #[test]
        fn stratification_within_one_response(
            counts in proptest::collection::vec(3usize..60, 2..=5),
            seed in 0u64..1000,
        ) {
            let spec: Vec<(Grade, usize)> = counts.iter().enumerate().map(|(i, c)| (Grade::ALL[i], *c)).collect();
            let c = corpus(&spec);
            let s = stratified_split(&c, SPLIT_RATIOS, seed).unwrap();
            let n = c.len();
            let covered = s.train.len() + s.valid.len() + s.test.len();
            prop_assert_eq!(covered, n);
            prop_assert!(s.train.is_disjoint(&s.valid) && s.train.is_disjoint(&s.test) && s.valid.is_disjoint(&s.test));
            for split in Split::ALL {
                let ids = s.ids(split);
                if ids.is_empty() { continue; }
                for (g, ng) in &spec {
                    let p_split = grade_count(&c, ids, *g) as f64 / ids.len() as f64;
                    let p_corpus = *ng as f64 / n as f64;
                    prop_assert!((p_split - p_corpus).abs() <= 1.0 / ids.len() as f64 + 1e-12);
                }
            }
        }
    }
}
