//! Corpus-level feature assembly: one group-tagged matrix per prompt.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AlignedResponse, LexicalResources, Provenance, Split, SplitAssignment};
use crate::error::{Error, Result};
use crate::features::acoustic::{self, PitchConfig};
use crate::features::content::{fit_vocabulary, TfidfVocabulary, DEFAULT_MAX_TERMS, DEFAULT_MIN_DF};
use crate::features::fluency::fluency_features;
use crate::features::grammar::{grammar_features, GrammarConfig};
use crate::features::prosody::{prosody_features, StressConfig};
use crate::features::FeatureMap;
use crate::matrix::{Column, FeatureGroup, FeatureMatrix};
use crate::seeding::stable_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub groups: Vec<FeatureGroup>,
    pub stress: StressConfig,
    pub grammar: GrammarConfig,
    pub pitch: PitchConfig,
    pub min_df: usize,
    pub max_terms: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            groups: FeatureGroup::ALL.to_vec(),
            stress: StressConfig::default(),
            grammar: GrammarConfig::default(),
            pitch: PitchConfig::default(),
            min_df: DEFAULT_MIN_DF,
            max_terms: DEFAULT_MAX_TERMS,
        }
    }
}

impl ExtractConfig {
    fn wants(&self, g: FeatureGroup) -> bool {
        self.groups.contains(&g)
    }
}

/// Per-response features for every group except content, keyed by group.
#[derive(Debug, Clone, Default)]
pub struct ResponseFeatures {
    pub groups: BTreeMap<FeatureGroup, FeatureMap>,
    pub provenance: Option<Provenance>,
}

impl ResponseFeatures {
    pub fn flags(&self) -> Vec<String> {
        self.groups.values().flat_map(|m| m.flags.iter().cloned()).collect()
    }
}

pub fn extract_response(
    response: &AlignedResponse,
    resources: &LexicalResources,
    config: &ExtractConfig,
    seed: u64,
) -> Result<ResponseFeatures> {
    let mut out = ResponseFeatures::default();
    if config.wants(FeatureGroup::FF) {
        out.groups.insert(FeatureGroup::FF, fluency_features(response, resources)?);
    }
    if config.wants(FeatureGroup::SPF) {
        out.groups.insert(FeatureGroup::SPF, prosody_features(response, config.stress)?);
    }
    if config.wants(FeatureGroup::GVF) {
        let response_seed = seed ^ stable_hash(&response.response_id);
        let (map, units) = grammar_features(response, resources, &config.grammar, response_seed)?;
        out.groups.insert(FeatureGroup::GVF, map);
        out.provenance = Some(units.provenance);
    }
    if config.wants(FeatureGroup::AF) {
        let audio = response
            .audio
            .as_ref()
            .ok_or_else(|| Error::MissingAudio(response.response_id.clone()))?;
        let buffer = acoustic::load_audio(audio, None)?;
        out.groups.insert(FeatureGroup::AF, acoustic::analyze(&buffer, &config.pitch)?);
    }
    for map in out.groups.values() {
        if let Some((name, _)) = map.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!("feature {name} is not finite")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseIssue {
    pub response_id: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub matrices: BTreeMap<String, FeatureMatrix>,
    pub vocabularies: BTreeMap<String, TfidfVocabulary>,
    /// Responses whose features could not be computed; they have no row.
    pub rejects: Vec<ResponseIssue>,
    /// Degenerate-case flags on rows that were kept.
    pub flags: Vec<ResponseIssue>,
    pub heuristic_syntax: usize,
}

/// Extracts features for a whole corpus. The content vocabulary of each
/// prompt is fitted on that prompt's training rows only (all rows when no
/// split is given). Missing audio with AF requested aborts the run.
pub fn extract_corpus(
    corpus: &[AlignedResponse],
    split: Option<&SplitAssignment>,
    resources: &LexicalResources,
    config: &ExtractConfig,
    seed: u64,
) -> Result<Extraction> {
    let results: Vec<Result<ResponseFeatures>> = corpus
        .par_iter()
        .map(|r| extract_response(r, resources, config, seed))
        .collect();

    let mut out = Extraction::default();
    let mut by_prompt: BTreeMap<&str, Vec<(&AlignedResponse, ResponseFeatures)>> = BTreeMap::new();
    for (r, res) in corpus.iter().zip(results) {
        match res {
            Ok(f) => {
                for msg in f.flags() {
                    out.flags.push(ResponseIssue { response_id: r.response_id.clone(), kind: "degenerate".into(), message: msg });
                }
                if f.provenance == Some(Provenance::Heuristic) {
                    out.heuristic_syntax += 1;
                }
                by_prompt.entry(&r.prompt_id).or_default().push((r, f));
            }
            Err(e @ Error::MissingAudio(_)) => return Err(e),
            Err(e) => out.rejects.push(ResponseIssue {
                response_id: r.response_id.clone(),
                kind: e.kind().into(),
                message: e.to_string(),
            }),
        }
    }

    for (prompt, rows) in by_prompt {
        let split_of = |id: &str| split.and_then(|s| s.split_of(id));
        let vocabulary = if config.wants(FeatureGroup::CF) {
            let train: Vec<&str> = rows
                .iter()
                .filter(|(r, _)| split.is_none() || split_of(&r.response_id) == Some(Split::Train))
                .map(|(r, _)| r.transcript.as_str())
                .collect();
            let v = fit_vocabulary(&train, config.min_df, config.max_terms)?;
            out.vocabularies.insert(prompt.to_string(), v.clone());
            Some(v)
        } else {
            None
        };

        let mut columns = Vec::new();
        if let Some(v) = &vocabulary {
            columns.extend(v.column_names().into_iter().map(|name| Column { name, group: FeatureGroup::CF }));
        }
        let first = &rows[0].1;
        for g in FeatureGroup::ALL.iter().filter(|g| **g != FeatureGroup::CF) {
            if let Some(m) = first.groups.get(g) {
                columns.extend(m.names().map(|n| Column { name: n.to_string(), group: *g }));
            }
        }
        let mut matrix = FeatureMatrix::new(columns);
        let dense: Vec<Vec<f64>> = rows
            .par_iter()
            .map(|(r, _)| vocabulary.as_ref().map(|v| v.vectorize_dense(&r.transcript)).unwrap_or_default())
            .collect();
        for ((r, f), mut values) in rows.iter().zip(dense) {
            for m in f.groups.values() {
                values.extend(m.iter().map(|(_, v)| v));
            }
            matrix.push_row(r.response_id.clone(), split_of(&r.response_id), r.grade, r.second_grade, values);
        }
        out.matrices.insert(prompt.to_string(), matrix);
    }
    Ok(out)
}
