//! Response data model: time-aligned words and phonemes, token annotations,
//! syntactic spans, grades, plus loading, splitting and standardization.

mod lexicon;
mod load;
mod split;
mod standardize;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lexicon::LexicalResources;
pub use load::{load_corpus, load_response_file, write_corpus, write_response_file, LoadReport, Reject};
pub(crate) use split::largest_remainder;
pub use split::{stratified_split, Split, SplitAssignment, SPLIT_RATIOS};
pub use standardize::Standardizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhonemeClass {
    Vowel,
    Consonant,
    Silence,
}

/// Lexical stress as emitted by ARPAbet-style aligners (0, 1, 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stress {
    None,
    Primary,
    Secondary,
}

impl TryFrom<u8> for Stress {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            0 => Ok(Stress::None),
            1 => Ok(Stress::Primary),
            2 => Ok(Stress::Secondary),
            other => Err(format!("stress must be 0, 1 or 2, got {other}")),
        }
    }
}

impl From<Stress> for u8 {
    fn from(s: Stress) -> u8 {
        match s {
            Stress::None => 0,
            Stress::Primary => 1,
            Stress::Secondary => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPhoneme {
    pub label: String,
    #[serde(rename = "class")]
    pub klass: PhonemeClass,
    #[serde(default = "stress_none")]
    pub stress: Stress,
    pub start: f64,
    pub end: f64,
}

fn stress_none() -> Stress {
    Stress::None
}

impl AlignedPhoneme {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedWord {
    pub text: String,
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub phonemes: Vec<AlignedPhoneme>,
}

impl AlignedWord {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Coarse part-of-speech tag set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Aux,
    Adj,
    Adv,
    Pron,
    Det,
    Conj,
    Prep,
    Num,
    Intj,
    Punct,
    Other,
}

impl Pos {
    pub fn is_lexical(self) -> bool {
        matches!(self, Pos::Noun | Pos::Verb | Pos::Adj | Pos::Adv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub token: String,
    pub pos: Pos,
    #[serde(rename = "stopword", default)]
    pub is_stopword: bool,
    #[serde(rename = "syllables", default)]
    pub syllable_count: u32,
}

impl TokenAnnotation {
    /// A word token is any non-punctuation token containing a letter.
    pub fn is_word(&self) -> bool {
        self.pos != Pos::Punct && self.token.chars().any(char::is_alphabetic)
    }
}

/// Half-open token-index range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan(pub usize, pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Annotated,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SyntaxSpans {
    #[serde(default)]
    pub sentences: Vec<TokenSpan>,
    #[serde(default)]
    pub t_units: Vec<TokenSpan>,
    #[serde(default)]
    pub clauses: Vec<TokenSpan>,
    #[serde(default)]
    pub dependent_clauses: Vec<TokenSpan>,
    #[serde(default)]
    pub complex_t_units: Vec<TokenSpan>,
    #[serde(default)]
    pub coordinate_phrases: Vec<TokenSpan>,
    #[serde(default)]
    pub complex_nominals: Vec<TokenSpan>,
    #[serde(default)]
    pub verb_phrases: Vec<TokenSpan>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl SyntaxSpans {
    fn all_spans(&self) -> impl Iterator<Item = &TokenSpan> {
        self.sentences
            .iter()
            .chain(&self.t_units)
            .chain(&self.clauses)
            .chain(&self.dependent_clauses)
            .chain(&self.complex_t_units)
            .chain(&self.coordinate_phrases)
            .chain(&self.complex_nominals)
            .chain(&self.verb_phrases)
    }
}

/// Proficiency grade. Ordinals are fixed: A2=0, LB1=1, HB1=2, LB2=3, HB2=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Grade {
    A2,
    LB1,
    HB1,
    LB2,
    HB2,
}

impl Grade {
    pub const ALL: [Grade; 5] = [Grade::A2, Grade::LB1, Grade::HB1, Grade::LB2, Grade::HB2];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Grade> {
        Grade::ALL.get(ordinal).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Grade::A2 => "A2",
            Grade::LB1 => "LB1",
            Grade::HB1 => "HB1",
            Grade::LB2 => "LB2",
            Grade::HB2 => "HB2",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Grade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Grade::ALL
            .iter()
            .copied()
            .find(|g| g.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Invalid(format!("unknown grade label {s:?}")))
    }
}

/// Parameters of a deterministic synthetic voice tone, standing in for a
/// recording when a corpus is generated rather than collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneSpec {
    pub f0: f64,
    /// Relative per-cycle period perturbation (0.01 = ±1 %).
    pub jitter: f64,
    /// Relative per-cycle amplitude perturbation.
    pub shimmer: f64,
    pub duration: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AudioRef {
    Wav(PathBuf),
    Tone(ToneSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedResponse {
    pub response_id: String,
    pub prompt_id: String,
    pub words: Vec<AlignedWord>,
    pub tokens: Vec<TokenAnnotation>,
    /// Annotated spans when supplied; `None` means the heuristic fallback applies.
    pub syntax: Option<SyntaxSpans>,
    pub transcript: String,
    pub audio: Option<AudioRef>,
    pub grade: Option<Grade>,
    /// Independent second rating, used for human-human agreement rows.
    pub second_grade: Option<Grade>,
}

impl AlignedResponse {
    /// Last word end minus first word start; 0 for an empty response.
    pub fn total_duration(&self) -> f64 {
        match (self.words.first(), self.words.last()) {
            (Some(first), Some(last)) => last.end - first.start,
            _ => 0.0,
        }
    }

    pub fn word_tokens(&self) -> impl Iterator<Item = &TokenAnnotation> {
        self.tokens.iter().filter(|t| t.is_word())
    }

    pub fn phonemes(&self) -> impl Iterator<Item = &AlignedPhoneme> {
        self.words.iter().flat_map(|w| w.phonemes.iter())
    }

    /// Checks the structural invariants, returning the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (i, w) in self.words.iter().enumerate() {
            if !(w.start.is_finite() && w.end.is_finite()) {
                return Err(format!("word {i} has non-finite times"));
            }
            if w.start < 0.0 {
                return Err(format!("word {i} starts before 0"));
            }
            if w.end <= w.start {
                return Err(format!("word {i} has end <= start"));
            }
            for (j, p) in w.phonemes.iter().enumerate() {
                if p.end < p.start {
                    return Err(format!("word {i} phoneme {j} has end < start"));
                }
                if p.start < w.start - TIME_EPS || p.end > w.end + TIME_EPS {
                    return Err(format!("word {i} phoneme {j} lies outside the word span"));
                }
                if p.klass != PhonemeClass::Vowel && p.stress != Stress::None {
                    return Err(format!("word {i} phoneme {j} carries stress but is not a vowel"));
                }
            }
        }
        for (i, pair) in self.words.windows(2).enumerate() {
            if pair[1].start < pair[0].end - TIME_EPS {
                return Err(format!("overlapping words at {} and {}", i, i + 1));
            }
        }
        let n_word_tokens = self.tokens.iter().filter(|t| t.pos != Pos::Punct).count();
        if !self.tokens.is_empty() && !self.words.is_empty() && n_word_tokens != self.words.len() {
            return Err(format!(
                "token count {} does not match word count {}",
                n_word_tokens,
                self.words.len()
            ));
        }
        if let Some(syntax) = &self.syntax {
            let n = self.tokens.len();
            if let Some(bad) = syntax.all_spans().find(|s| s.0 > s.1 || s.1 > n) {
                return Err(format!("syntax span [{}, {}) out of token bounds {n}", bad.0, bad.1));
            }
            if let Some(dc) = syntax
                .dependent_clauses
                .iter()
                .find(|dc| !syntax.clauses.contains(dc))
            {
                return Err(format!(
                    "dependent clause [{}, {}) is not listed among clauses",
                    dc.0, dc.1
                ));
            }
        }
        Ok(())
    }
}

/// Tolerance for alignment timestamps, which aligners round to 10 ms or finer.
pub(crate) const TIME_EPS: f64 = 1e-9;

/// Spelling-based syllable estimate: number of vowel-letter groups, at least 1
/// for alphabetic tokens.
pub fn heuristic_syllables(token: &str) -> u32 {
    let lower = token.to_lowercase();
    let mut groups = 0;
    let mut in_vowel = false;
    for c in lower.chars() {
        let v = matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
        if v && !in_vowel {
            groups += 1;
        }
        in_vowel = v;
    }
    if lower.ends_with('e') && !lower.ends_with("le") && groups > 1 {
        groups -= 1;
    }
    if groups == 0 && lower.chars().any(char::is_alphabetic) {
        1
    } else {
        groups
    }
}
