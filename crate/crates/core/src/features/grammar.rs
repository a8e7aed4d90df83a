//! Lexical, syntactic, count-based and text-complexity features.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AlignedResponse, LexicalResources, Pos, Provenance, TokenAnnotation};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::seeding::rng_for;

pub const DEFAULT_SOPHISTICATION_RANK: u32 = 2000;
pub const DIVERSITY_WINDOW: usize = 50;
pub const DIVERSITY_SAMPLES: usize = 10;

pub const DEFAULT_SUBORDINATORS: [&str; 19] = [
    "after", "although", "because", "before", "if", "once", "since", "that", "though", "unless", "until", "when",
    "whenever", "where", "whereas", "whether", "which", "while", "who",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarConfig {
    /// Words ranked above this (or absent from the list) are sophisticated.
    pub sophistication_rank: u32,
    pub subordinators: Vec<String>,
    pub diversity_samples: usize,
    /// `ld` as lexical density (default) or as lexical-type diversity.
    pub ld_as_density: bool,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            sophistication_rank: DEFAULT_SOPHISTICATION_RANK,
            subordinators: DEFAULT_SUBORDINATORS.iter().map(|s| s.to_string()).collect(),
            diversity_samples: DIVERSITY_SAMPLES,
            ld_as_density: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LexicalProfile {
    pub word_tokens: usize,
    pub word_types: usize,
    pub lexical_tokens: usize,
    pub lexical_types: usize,
    pub sophisticated_lexical_tokens: usize,
    pub sophisticated_lexical_types: usize,
    pub sophisticated_word_types: usize,
    pub verb_tokens: usize,
    pub verb_types: usize,
    pub sophisticated_verb_types: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UnitCounts {
    pub w: usize,
    pub s: usize,
    pub vp: usize,
    pub c: usize,
    pub t: usize,
    pub dc: usize,
    pub ct: usize,
    pub cp: usize,
    pub cn: usize,
    pub provenance: Provenance,
}

fn is_sophisticated(word: &str, resources: &LexicalResources, config: &GrammarConfig) -> bool {
    resources.rank(word).is_none_or(|r| r > config.sophistication_rank)
}

fn words(tokens: &[TokenAnnotation]) -> Vec<&TokenAnnotation> {
    tokens.iter().filter(|t| t.is_word()).collect()
}

pub fn lexical_profile(tokens: &[TokenAnnotation], resources: &LexicalResources, config: &GrammarConfig) -> LexicalProfile {
    let ws = words(tokens);
    let soph = |w: &str| is_sophisticated(w, resources, config);
    let types: BTreeSet<&str> = ws.iter().map(|t| t.token.as_str()).collect();
    let lexical: Vec<&str> = ws.iter().filter(|t| t.pos.is_lexical()).map(|t| t.token.as_str()).collect();
    let lexical_types: BTreeSet<&str> = lexical.iter().copied().collect();
    let verbs: Vec<&str> = ws.iter().filter(|t| t.pos == Pos::Verb).map(|t| t.token.as_str()).collect();
    let verb_types: BTreeSet<&str> = verbs.iter().copied().collect();
    LexicalProfile {
        word_tokens: ws.len(),
        word_types: types.len(),
        lexical_tokens: lexical.len(),
        lexical_types: lexical_types.len(),
        sophisticated_lexical_tokens: lexical.iter().filter(|w| soph(w)).count(),
        sophisticated_lexical_types: lexical_types.iter().filter(|w| soph(w)).count(),
        sophisticated_word_types: types.iter().filter(|w| soph(w)).count(),
        verb_tokens: verbs.len(),
        verb_types: verb_types.len(),
        sophisticated_verb_types: verb_types.iter().filter(|w| soph(w)).count(),
    }
}

fn ndw(tokens: &[&str]) -> usize {
    tokens.iter().collect::<BTreeSet<_>>().len()
}

pub const LEXICAL_FEATURES: [&str; 10] = ["ld", "ls1", "ls2", "vs1", "vs2", "ndw", "ndwz", "ndwerz", "ndwesz", "ttr"];

pub fn lexical_features(
    tokens: &[TokenAnnotation],
    resources: &LexicalResources,
    config: &GrammarConfig,
    seed: u64,
) -> Result<FeatureMap> {
    let p = lexical_profile(tokens, resources, config);
    if p.word_tokens == 0 {
        return Err(Error::EmptyResponse);
    }
    let seq: Vec<&str> = words(tokens).iter().map(|t| t.token.as_str()).collect();
    let mut out = FeatureMap::new();
    let frac = |a: usize, b: usize| if b > 0 { a as f64 / b as f64 } else { 0.0 };
    let ld = if config.ld_as_density {
        frac(p.lexical_tokens, p.word_tokens)
    } else {
        frac(p.lexical_types, p.lexical_tokens)
    };
    out.insert("ld", ld);
    if p.lexical_tokens == 0 {
        out.flag("no lexical tokens: ls1 set to 0");
    }
    out.insert("ls1", frac(p.sophisticated_lexical_tokens, p.lexical_tokens));
    out.insert("ls2", frac(p.sophisticated_word_types, p.word_types));
    if p.verb_tokens == 0 {
        out.flag("no verb tokens: vs1 and vs2 set to 0");
    }
    out.insert("vs1", frac(p.sophisticated_verb_types, p.verb_tokens));
    out.insert("vs2", frac(p.sophisticated_verb_types.pow(2), p.verb_tokens));
    out.insert("ndw", p.word_types as f64);
    out.insert("ndwz", ndw(&seq[..seq.len().min(DIVERSITY_WINDOW)]) as f64);

    let (erz, esz) = if seq.len() < DIVERSITY_WINDOW {
        out.flag("fewer than 50 words: sampled diversity uses all words");
        (p.word_types as f64, p.word_types as f64)
    } else {
        let mut rng = rng_for(seed, 0);
        let n = config.diversity_samples.max(1);
        let mut random = 0.0;
        let mut windows = 0.0;
        for _ in 0..n {
            let pick: Vec<&str> = index::sample(&mut rng, seq.len(), DIVERSITY_WINDOW).into_iter().map(|i| seq[i]).collect();
            random += ndw(&pick) as f64;
            let start = rng.gen_range(0..=seq.len() - DIVERSITY_WINDOW);
            windows += ndw(&seq[start..start + DIVERSITY_WINDOW]) as f64;
        }
        (random / n as f64, windows / n as f64)
    };
    out.insert("ndwerz", erz);
    out.insert("ndwesz", esz);
    out.insert("ttr", frac(p.word_types, p.word_tokens));
    Ok(out)
}

pub const SYNTACTIC_FEATURES: [&str; 13] = [
    "MLS", "MLT", "MLC", "C/T", "VP/T", "DC/C", "DC/T", "T/S", "CT/T", "CP/T", "CP/C", "CN/T", "CN/C",
];

pub fn syntactic_features(u: &UnitCounts) -> FeatureMap {
    let mut out = FeatureMap::new();
    let defs: [(&str, usize, usize, &str); 13] = [
        ("MLS", u.w, u.s, "S"),
        ("MLT", u.w, u.t, "T"),
        ("MLC", u.w, u.c, "C"),
        ("C/T", u.c, u.t, "T"),
        ("VP/T", u.vp, u.t, "T"),
        ("DC/C", u.dc, u.c, "C"),
        ("DC/T", u.dc, u.t, "T"),
        ("T/S", u.t, u.s, "S"),
        ("CT/T", u.ct, u.t, "T"),
        ("CP/T", u.cp, u.t, "T"),
        ("CP/C", u.cp, u.c, "C"),
        ("CN/T", u.cn, u.t, "T"),
        ("CN/C", u.cn, u.c, "C"),
    ];
    let mut zero = BTreeSet::new();
    for (name, num, den, den_name) in defs {
        if den == 0 {
            zero.insert(den_name);
            out.insert(name, 0.0);
        } else {
            out.insert(name, num as f64 / den as f64);
        }
    }
    for d in zero {
        out.flag(format!("{d} = 0: ratios over {d} set to 0"));
    }
    out
}

pub const COUNT_FEATURES: [&str; 24] = [
    "total_adjectives",
    "total_adverbs",
    "total_nouns",
    "total_verbs",
    "total_pronoun",
    "total_conjunctions",
    "total_determiners",
    "total_text_complexity_no_sw_mAvg",
    "average_word_complexity_no_sw_mAvg",
    "total_text_complexity_mAvg",
    "average_word_complexity_mAvg",
    "average_syllables_in_words",
    "total_text_complexity_no_sw_mMod",
    "average_word_complexity_no_sw_mMod",
    "total_text_complexity_mMod",
    "average_word_complexity_mMod",
    "W",
    "VP",
    "C",
    "T",
    "DC",
    "CT",
    "CP",
    "CN",
];

fn is_stop(t: &TokenAnnotation, resources: &LexicalResources) -> bool {
    t.is_stopword || resources.is_stopword(&t.token)
}

/// POS totals, lexicon-based text complexity and syllables per content word.
pub fn count_and_complexity_features(tokens: &[TokenAnnotation], resources: &LexicalResources) -> FeatureMap {
    let mut out = FeatureMap::new();
    let ws = words(tokens);
    for (name, pos) in [
        ("total_adjectives", Pos::Adj),
        ("total_adverbs", Pos::Adv),
        ("total_nouns", Pos::Noun),
        ("total_verbs", Pos::Verb),
        ("total_pronoun", Pos::Pron),
        ("total_conjunctions", Pos::Conj),
        ("total_determiners", Pos::Det),
    ] {
        out.insert(name, ws.iter().filter(|t| t.pos == pos).count() as f64);
    }
    let content: Vec<&TokenAnnotation> = ws.iter().copied().filter(|t| !is_stop(t, resources)).collect();
    let complexity = |toks: &[&TokenAnnotation], lexicon: &std::collections::BTreeMap<String, f64>| {
        let scores: Vec<f64> = toks.iter().filter_map(|t| lexicon.get(&t.token).copied()).collect();
        let total: f64 = scores.iter().sum();
        (total, if scores.is_empty() { None } else { Some(total / scores.len() as f64) })
    };
    for (suffix, lexicon) in [("mAvg", &resources.complexity_avg), ("mMod", &resources.complexity_mode)] {
        for (variant, toks) in [("no_sw_", &content), ("", &ws)] {
            let (total, avg) = complexity(toks, lexicon);
            if avg.is_none() {
                out.flag(format!("no {variant}{suffix} lexicon matches: complexity set to 0"));
            }
            out.insert(format!("total_text_complexity_{variant}{suffix}"), total);
            out.insert(format!("average_word_complexity_{variant}{suffix}"), avg.unwrap_or(0.0));
        }
    }
    if content.is_empty() {
        out.flag("no non-stopword words: average_syllables_in_words set to 0");
    }
    let syllables: Vec<f64> = content.iter().map(|t| t.syllable_count as f64).collect();
    out.insert("average_syllables_in_words", crate::features::mean(&syllables));
    // Re-insert in table order.
    let mut ordered = FeatureMap::new();
    for name in &COUNT_FEATURES[..16] {
        ordered.insert(*name, out.get(name).unwrap());
    }
    ordered.flags = out.flags;
    ordered
}

pub fn unit_count_features(u: &UnitCounts) -> FeatureMap {
    let mut out = FeatureMap::new();
    for (name, v) in [("W", u.w), ("VP", u.vp), ("C", u.c), ("T", u.t), ("DC", u.dc), ("CT", u.ct), ("CP", u.cp), ("CN", u.cn)] {
        out.insert(name, v as f64);
    }
    out
}

fn is_sentence_punct(t: &TokenAnnotation) -> bool {
    t.pos == Pos::Punct && t.token.chars().any(|c| matches!(c, '.' | '!' | '?'))
}

fn is_verbal(t: &TokenAnnotation) -> bool {
    matches!(t.pos, Pos::Verb | Pos::Aux)
}

/// Rule-based unit counts from POS tags and punctuation alone.
pub fn heuristic_syntax(tokens: &[TokenAnnotation], config: &GrammarConfig) -> UnitCounts {
    let is_sub = |t: &TokenAnnotation| config.subordinators.iter().any(|s| s.eq_ignore_ascii_case(&t.token));
    let is_coord = |t: &TokenAnnotation| t.pos == Pos::Conj && !is_sub(t);
    let n = tokens.len();
    let w = tokens.iter().filter(|t| t.is_word()).count();

    // Verb groups: maximal AUX/VERB runs, identified by their first index.
    let mut group_start = vec![false; n];
    for i in 0..n {
        if is_verbal(&tokens[i]) && (i == 0 || !is_verbal(&tokens[i - 1])) {
            group_start[i] = true;
        }
    }
    let vp = group_start.iter().filter(|g| **g).count();
    let c = (0..n)
        .filter(|&i| group_start[i] && !(i > 0 && tokens[i - 1].token.eq_ignore_ascii_case("to")))
        .count();

    let mut sentences: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 0..=n {
        if i == n || is_sentence_punct(&tokens[i]) {
            if tokens[start..i].iter().any(|t| t.is_word()) {
                sentences.push((start, i));
            }
            start = i + 1;
        }
    }
    let s = if w == 0 { 0 } else { sentences.len().max(1) };

    // Clause-initial coordinators split sentences into T-units.
    let mut t_units: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in &sentences {
        let mut unit_start = a;
        let mut seen_verb = false;
        for i in a..b {
            let tok = &tokens[i];
            if tok.pos == Pos::Punct || is_coord(tok) {
                if is_coord(tok) && seen_verb && subject_then_verb(tokens, i + 1, b, &is_coord) {
                    t_units.push((unit_start, i));
                    unit_start = i;
                    seen_verb = false;
                } else if tok.pos == Pos::Punct {
                    seen_verb = false;
                }
                continue;
            }
            if group_start[i] {
                seen_verb = true;
            }
        }
        t_units.push((unit_start, b));
    }
    let t = t_units.len().max(s);

    let dc_marker = |i: usize| -> bool {
        if !is_sub(&tokens[i]) {
            return false;
        }
        tokens[i + 1..]
            .iter()
            .take_while(|t| t.pos != Pos::Punct)
            .any(is_verbal)
    };
    let dc = (0..n).filter(|&i| dc_marker(i)).count().min(c);
    let ct = t_units.iter().filter(|(a, b)| (*a..*b).any(dc_marker)).count().min(t);
    let cp = (1..n.saturating_sub(1))
        .filter(|&i| is_coord(&tokens[i]) && tokens[i - 1].pos == tokens[i + 1].pos && tokens[i - 1].pos != Pos::Punct)
        .count();
    let cn = (0..n)
        .filter(|&i| {
            tokens[i].pos == Pos::Noun
                && ((i > 0 && tokens[i - 1].pos == Pos::Adj) || (i + 1 < n && tokens[i + 1].pos == Pos::Prep))
        })
        .count();
    UnitCounts { w, s, vp, c, t, dc, ct, cp, cn, provenance: Provenance::Heuristic }
}

/// True when a NOUN/PRON is followed by a verb before the next coordinator or punctuation.
fn subject_then_verb(tokens: &[TokenAnnotation], from: usize, to: usize, is_coord: &dyn Fn(&TokenAnnotation) -> bool) -> bool {
    let mut subject = false;
    for t in &tokens[from..to] {
        if t.pos == Pos::Punct || is_coord(t) {
            return false;
        }
        if matches!(t.pos, Pos::Noun | Pos::Pron) {
            subject = true;
        } else if subject && is_verbal(t) {
            return true;
        }
    }
    false
}

/// Annotated spans take precedence; the heuristic fills in otherwise.
pub fn unit_counts(response: &AlignedResponse, config: &GrammarConfig) -> UnitCounts {
    match &response.syntax {
        Some(sp) => UnitCounts {
            w: response.tokens.iter().filter(|t| t.is_word()).count(),
            s: sp.sentences.len(),
            vp: sp.verb_phrases.len(),
            c: sp.clauses.len(),
            t: sp.t_units.len(),
            dc: sp.dependent_clauses.len(),
            ct: sp.complex_t_units.len(),
            cp: sp.coordinate_phrases.len(),
            cn: sp.complex_nominals.len(),
            provenance: sp.provenance,
        },
        None => heuristic_syntax(&response.tokens, config),
    }
}

/// All grammar and vocabulary features for one response.
pub fn grammar_features(
    response: &AlignedResponse,
    resources: &LexicalResources,
    config: &GrammarConfig,
    seed: u64,
) -> Result<(FeatureMap, UnitCounts)> {
    let mut out = lexical_features(&response.tokens, resources, config, seed)?;
    let units = unit_counts(response, config);
    out.extend(syntactic_features(&units));
    out.extend(count_and_complexity_features(&response.tokens, resources));
    out.extend(unit_count_features(&units));
    Ok((out, units))
}
