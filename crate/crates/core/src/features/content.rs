//! Response-based TF-IDF content vectors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;

pub const DEFAULT_MIN_DF: usize = 2;
pub const DEFAULT_MAX_TERMS: usize = 1000;
pub const TFIDF_PREFIX: &str = "tfidf:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVocabulary {
    pub terms: Vec<String>,
    pub document_frequency: BTreeMap<String, usize>,
    pub n_documents: usize,
    pub idf: BTreeMap<String, f64>,
}

/// Lowercase, split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn smoothed_idf(n_documents: usize, df: usize) -> f64 {
    ((1.0 + n_documents as f64) / (1.0 + df as f64)).ln() + 1.0
}

pub fn fit_vocabulary<S: AsRef<str>>(train: &[S], min_df: usize, max_terms: usize) -> Result<TfidfVocabulary> {
    let docs: Vec<Vec<String>> = train.iter().map(|t| tokenize(t.as_ref())).collect();
    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::Invalid("cannot fit a vocabulary on empty transcripts".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in &docs {
        let mut seen: Vec<&String> = doc.iter().collect();
        seen.sort();
        seen.dedup();
        for t in seen {
            *df.entry(t.clone()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, c)| *c >= min_df).collect();
    if kept.len() > max_terms {
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(max_terms);
    }
    kept.sort_by(|a, b| a.0.cmp(&b.0));
    let n = docs.len();
    Ok(TfidfVocabulary {
        terms: kept.iter().map(|(t, _)| t.clone()).collect(),
        idf: kept.iter().map(|(t, c)| (t.clone(), smoothed_idf(n, *c))).collect(),
        document_frequency: kept.into_iter().collect(),
        n_documents: n,
    })
}

impl TfidfVocabulary {
    pub fn column_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| format!("{TFIDF_PREFIX}{t}")).collect()
    }

    /// Dense vector in `terms` order, L2-normalized.
    pub fn vectorize_dense(&self, transcript: &str) -> Vec<f64> {
        let mut tf: BTreeMap<&str, f64> = BTreeMap::new();
        let tokens = tokenize(transcript);
        for t in &tokens {
            *tf.entry(t.as_str()).or_default() += 1.0;
        }
        let mut v: Vec<f64> = self
            .terms
            .iter()
            .map(|t| tf.get(t.as_str()).copied().unwrap_or(0.0) * self.idf[t])
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    pub fn vectorize(&self, transcript: &str) -> FeatureMap {
        let mut out = FeatureMap::new();
        let v = self.vectorize_dense(transcript);
        if v.iter().all(|x| *x == 0.0) {
            out.flag("no in-vocabulary tokens: zero content vector");
        }
        for (name, x) in self.column_names().into_iter().zip(v) {
            out.insert(name, x);
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            let _ = writeln!(s, "{t}\t{}\t{}", self.document_frequency[t], crate::matrix::format_float(self.idf[t]));
        }
        s
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// `n_documents` is not stored in the TSV and must be supplied.
    pub fn parse_tsv(text: &str, n_documents: usize) -> Result<Self> {
        let mut v = TfidfVocabulary { terms: vec![], document_frequency: BTreeMap::new(), n_documents, idf: BTreeMap::new() };
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split('\t').collect();
            let bad = || Error::parse("vocabulary", "<tsv>", format!("line {}: expected term<TAB>df<TAB>idf", i + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let df: usize = parts[1].parse().map_err(|_| bad())?;
            let idf: f64 = parts[2].parse().map_err(|_| bad())?;
            v.terms.push(parts[0].to_string());
            v.document_frequency.insert(parts[0].to_string(), df);
            v.idf.insert(parts[0].to_string(), idf);
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn min_df_one_keeps_all_terms() {
        let v = fit_vocabulary(&["a b", "b c"], 1, 100).unwrap();
        assert_eq!(v.terms, ["a", "b", "c"]);
        assert_eq!(v.document_frequency["b"], 2);
    }

    #[test]
    fn min_df_two_keeps_shared_term() {
        let v = fit_vocabulary(&["a b", "b c"], 2, 100).unwrap();
        assert_eq!(v.terms, ["b"]);
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(fit_vocabulary(&["", " ."], 1, 10).is_err());
        assert!(fit_vocabulary::<&str>(&[], 1, 10).is_err());
    }

    #[test]
    fn max_terms_keeps_highest_df() {
        let v = fit_vocabulary(&["a b z", "b z", "z y"], 1, 2).unwrap();
        assert_eq!(v.terms, ["b", "z"]);
        // tie at df 1 between a and y: lexicographic
        let v = fit_vocabulary(&["y a", "q"], 1, 1).unwrap();
        assert_eq!(v.terms, ["a"]);
    }

    #[test]
    fn idf_formula() {
        let v = fit_vocabulary(&["a b", "b c"], 1, 100).unwrap();
        assert!((v.idf["b"] - 1.0).abs() < 1e-12);
        assert!((v.idf["a"] - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn single_term_normalizes_to_one() {
        let v = fit_vocabulary(&["b x", "b y"], 2, 10).unwrap();
        let f = v.vectorize("b b");
        assert_eq!(f.get("tfidf:b"), Some(1.0));
    }

    #[test]
    fn equal_idf_gives_equal_components() {
        let v = fit_vocabulary(&["a b", "a b"], 1, 10).unwrap();
        let f = v.vectorize("a b");
        assert!((f.get("tfidf:a").unwrap() - 0.70710678).abs() < 1e-6);
        assert!((f.get("tfidf:b").unwrap() - 0.70710678).abs() < 1e-6);
    }

    #[test]
    fn oov_document_is_zero_and_flagged() {
        let v = fit_vocabulary(&["a b", "a b"], 1, 10).unwrap();
        let f = v.vectorize("zzz qqq");
        assert!(f.is_flagged());
        assert!(f.iter().all(|(_, x)| x == 0.0));
    }

    #[test]
    fn tsv_round_trip() {
        let v = fit_vocabulary(&["the cat", "the dog", "a cat"], 1, 10).unwrap();
        let back = TfidfVocabulary::parse_tsv(&v.to_tsv(), v.n_documents).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn vectorizing_does_not_touch_vocabulary() {
        let v = fit_vocabulary(&["a b", "b c"], 1, 10).unwrap();
        let before = v.clone();
        let _ = v.vectorize("a a c d");
        assert_eq!(v, before);
    }

    proptest! {
        #[test]
        fn nonzero_vectors_have_unit_norm(
            docs in proptest::collection::vec("[a-e ]{0,20}", 1..10),
            probe in "[a-f ]{0,30}",
        ) {
            prop_assume!(docs.iter().any(|d| !tokenize(d).is_empty()));
            let v = fit_vocabulary(&docs, 1, 1000).unwrap();
            let x = v.vectorize_dense(&probe);
            let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
            let again = fit_vocabulary(&docs, 1, 1000).unwrap();
            prop_assert_eq!(again.to_tsv(), v.to_tsv());
        }
    }
}
