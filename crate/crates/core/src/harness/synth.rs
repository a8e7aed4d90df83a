//! Synthetic spoken-response corpora with a known scoring function.
//!
//! Each response draws independent latent levels in [0, 1] for speaking
//! rate, pause structure, filler use, lexical diversity and length, and
//! realizes them as a word/phoneme timeline plus tagged tokens. The score
//! is a weighted mean of the *measured* quantities (computed with the same
//! extractors the pipeline uses and z-scored across the corpus, so weights
//! are relative importances) plus Gaussian noise; grades are score quantiles.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    heuristic_syllables, AlignedPhoneme, AlignedResponse, AlignedWord, AudioRef, Grade, LexicalResources, PhonemeClass,
    Pos, Stress, TokenAnnotation, ToneSpec,
};
use crate::error::{Error, Result};
use crate::features::fluency::fluency_features;
use crate::features::grammar::{lexical_features, GrammarConfig};
use crate::seeding::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Latent {
    /// Measured as `speaking_rate` (non-filler words per second).
    SpeakingRate,
    /// Measured as `longpfreq` (long silences per word), higher is worse.
    PauseStructure,
    /// Measured as `filled_pause_rate`, higher is worse.
    FillerRate,
    /// Measured as `ttr`.
    LexicalDiversity,
    /// Measured as the word count.
    ResponseLength,
}

impl Latent {
    pub const ALL: [Latent; 5] =
        [Latent::SpeakingRate, Latent::PauseStructure, Latent::FillerRate, Latent::LexicalDiversity, Latent::ResponseLength];

    /// Feature column carrying the measured quantity.
    pub fn feature(self) -> &'static str {
        match self {
            Latent::SpeakingRate => "speaking_rate",
            Latent::PauseStructure => "longpfreq",
            Latent::FillerRate => "filled_pause_rate",
            Latent::LexicalDiversity => "ttr",
            Latent::ResponseLength => "W",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTerm {
    pub latent: Latent,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    pub grade_levels: usize,
    pub seed: u64,
    pub prompts: usize,
    pub score: Vec<ScoreTerm>,
    /// Standard deviation of the Gaussian score noise, in the units of the
    /// z-scored terms.
    pub noise: f64,
    /// Target grade proportions; uniform when empty.
    pub grade_weights: Vec<f64>,
    pub min_words: usize,
    pub max_words: usize,
    pub acoustic: bool,
    /// Probability that a simulated second rater differs by one grade.
    pub second_rater: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 500,
            grade_levels: 3,
            seed: 0,
            prompts: 1,
            score: vec![
                ScoreTerm { latent: Latent::SpeakingRate, weight: 1.0 },
                ScoreTerm { latent: Latent::LexicalDiversity, weight: 0.7 },
                ScoreTerm { latent: Latent::PauseStructure, weight: 0.5 },
            ],
            noise: 0.15,
            grade_weights: vec![],
            min_words: 40,
            max_words: 120,
            acoustic: false,
            second_rater: None,
        }
    }
}

pub struct SynthCorpus {
    pub responses: Vec<AlignedResponse>,
    pub resources: LexicalResources,
    /// Noise-free normalized score per response, in corpus order.
    pub clean_scores: Vec<f64>,
}

const NOUNS: [&str; 60] = [
    "park", "school", "house", "city", "family", "friend", "teacher", "book", "river", "market", "garden", "street",
    "music", "food", "game", "team", "child", "mother", "father", "village", "country", "museum", "beach", "forest",
    "holiday", "weekend", "morning", "evening", "station", "library", "hospital", "office", "computer", "phone", "movie",
    "story", "language", "culture", "festival", "mountain", "island", "kitchen", "restaurant", "neighbor", "student",
    "lesson", "problem", "idea", "journey", "memory", "tradition", "community", "environment", "opportunity",
    "architecture", "landscape", "atmosphere", "archipelago", "curriculum", "metropolis",
];
const VERBS: [&str; 40] = [
    "like", "visit", "see", "play", "eat", "read", "watch", "enjoy", "help", "make", "take", "find", "love", "want",
    "need", "use", "know", "remember", "explore", "describe", "prefer", "discover", "celebrate", "organize", "recommend",
    "appreciate", "consider", "encourage", "imagine", "improve", "admire", "cherish", "contemplate", "investigate",
    "navigate", "accommodate", "anticipate", "elaborate", "illustrate", "emphasize",
];
const ADJECTIVES: [&str; 40] = [
    "big", "small", "good", "nice", "old", "new", "happy", "busy", "quiet", "beautiful", "famous", "popular", "local",
    "modern", "traditional", "interesting", "important", "different", "comfortable", "delicious", "crowded", "peaceful",
    "friendly", "wonderful", "ancient", "colorful", "magnificent", "spectacular", "remarkable", "sophisticated",
    "picturesque", "vibrant", "diverse", "memorable", "breathtaking", "authentic", "tranquil", "elaborate", "exquisite",
    "renowned",
];
const ADVERBS: [&str; 20] = [
    "often", "always", "usually", "sometimes", "really", "very", "quickly", "slowly", "together", "early", "especially",
    "frequently", "particularly", "definitely", "genuinely", "occasionally", "remarkably", "thoroughly", "invariably",
    "wholeheartedly",
];
const DETERMINERS: [&str; 5] = ["the", "a", "my", "this", "our"];
const PRONOUNS: [&str; 5] = ["i", "we", "they", "you", "she"];
const PREPOSITIONS: [&str; 6] = ["in", "at", "near", "with", "from", "to"];
const AUXILIARIES: [&str; 3] = ["can", "will", "should"];
const SUBORDINATORS: [&str; 3] = ["because", "when", "although"];
const FILLERS: [&str; 2] = ["uh", "um"];
/// Words at or after this index of each content pool are given ranks past
/// the default sophistication cut-off.
const RARE_FROM: usize = 20;

#[derive(Clone, Copy)]
enum Slot {
    Det,
    Pron,
    Prep,
    Aux,
    Sub,
    And,
    Noun,
    Verb,
    Adj,
    Adv,
}

const TEMPLATES: [&[Slot]; 5] = {
    use Slot::*;
    [
        &[Pron, Verb, Det, Adj, Noun],
        &[Det, Noun, Aux, Verb, Prep, Det, Noun],
        &[Pron, Verb, Det, Noun, And, Pron, Verb, Adv],
        &[Prep, Det, Noun, Pron, Verb, Det, Adj, Noun],
        &[Pron, Verb, Det, Noun, Sub, Pron, Verb, Adv],
    ]
};

/// Lexical resources matching the bundled word lists.
pub fn synth_resources() -> LexicalResources {
    let mut res = LexicalResources::default();
    let mut rank = 1u32;
    let function: Vec<&str> = DETERMINERS
        .iter()
        .chain(&PRONOUNS)
        .chain(&PREPOSITIONS)
        .chain(&AUXILIARIES)
        .chain(&SUBORDINATORS)
        .chain(&["and"])
        .copied()
        .collect();
    for w in &function {
        res.frequency_rank.insert(w.to_string(), rank);
        res.stopwords.insert(w.to_string());
        rank += 1;
    }
    for pool in [&NOUNS[..], &VERBS[..], &ADJECTIVES[..], &ADVERBS[..]] {
        for (i, w) in pool.iter().enumerate() {
            let r = if i < RARE_FROM { 100 + rank } else { 2500 + rank };
            res.frequency_rank.insert(w.to_string(), r);
            rank += 1;
        }
    }
    for w in res.frequency_rank.keys().cloned().collect::<Vec<_>>() {
        let syl = heuristic_syllables(&w) as f64;
        let avg = (1.0 + 0.9 * (syl - 1.0)).min(6.0);
        res.complexity_avg.insert(w.clone(), avg);
        res.complexity_mode.insert(w, avg.round());
    }
    res
}

struct Latents {
    rate: f64,
    pause: f64,
    filler: f64,
    diversity: f64,
    length: f64,
    articulation: f64,
}

fn draw_token(rng: &mut ChaCha8Rng, slot: Slot, fresh: f64, used: &mut [Vec<&'static str>; 4]) -> (&'static str, Pos) {
    let pick = |rng: &mut ChaCha8Rng, pool: &[&'static str]| pool[rng.gen_range(0..pool.len())];
    let content = |rng: &mut ChaCha8Rng, k: usize, pool: &[&'static str], used: &mut [Vec<&'static str>; 4]| {
        if used[k].is_empty() || rng.gen_bool(fresh) {
            let w = pool[rng.gen_range(0..pool.len())];
            used[k].push(w);
            w
        } else {
            used[k][rng.gen_range(0..used[k].len())]
        }
    };
    match slot {
        Slot::Det => (pick(rng, &DETERMINERS), Pos::Det),
        Slot::Pron => (pick(rng, &PRONOUNS), Pos::Pron),
        Slot::Prep => (pick(rng, &PREPOSITIONS), Pos::Prep),
        Slot::Aux => (pick(rng, &AUXILIARIES), Pos::Aux),
        Slot::Sub => (pick(rng, &SUBORDINATORS), Pos::Conj),
        Slot::And => ("and", Pos::Conj),
        Slot::Noun => (content(rng, 0, &NOUNS, used), Pos::Noun),
        Slot::Verb => (content(rng, 1, &VERBS, used), Pos::Verb),
        Slot::Adj => (content(rng, 2, &ADJECTIVES, used), Pos::Adj),
        Slot::Adv => (content(rng, 3, &ADVERBS, used), Pos::Adv),
    }
}

/// `n_words` non-filler tokens in template sentences, with fillers (tagged
/// as interjections) inserted before words with probability `p_filler`.
fn tokens_for(rng: &mut ChaCha8Rng, n_words: usize, z: &Latents, stop: &BTreeSet<String>) -> Vec<TokenAnnotation> {
    let fresh = 0.15 + 0.8 * z.diversity;
    let p_filler = 0.01 + 0.14 * (1.0 - z.filler);
    let mut used: [Vec<&'static str>; 4] = Default::default();
    let mut out = Vec::new();
    let mut words = 0;
    while words < n_words {
        let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
        for &slot in template {
            if words == n_words {
                break;
            }
            if words > 0 && rng.gen_bool(p_filler) {
                let f = FILLERS[rng.gen_range(0..FILLERS.len())];
                out.push(TokenAnnotation { token: f.into(), pos: Pos::Intj, is_stopword: false, syllable_count: 1 });
            }
            let (w, pos) = draw_token(rng, slot, fresh, &mut used);
            out.push(TokenAnnotation { token: w.to_string(), pos, is_stopword: stop.contains(w), syllable_count: heuristic_syllables(w) });
            words += 1;
        }
        out.push(TokenAnnotation { token: ".".into(), pos: Pos::Punct, is_stopword: false, syllable_count: 0 });
    }
    out
}

const CONSONANTS: [&str; 6] = ["T", "K", "S", "M", "L", "D"];
const VOWELS: [&str; 5] = ["AH", "IY", "EH", "AO", "UW"];

/// Phonemes of one word starting at `t_ms`; returns the end time in ms.
fn phonemes_for(rng: &mut ChaCha8Rng, text: &str, t_ms: i64, syllable_ms: f64, out: &mut Vec<AlignedPhoneme>) -> i64 {
    let n = heuristic_syllables(text).max(1);
    let stressed = rng.gen_range(0..n);
    let mut t = t_ms;
    for s in 0..n {
        let c = ((syllable_ms * 0.35 * rng.gen_range(0.8..1.2)).round() as i64).max(20);
        let v = ((syllable_ms * 0.65 * rng.gen_range(0.7..1.3)).round() as i64).max(30);
        let stress = if s == stressed { Stress::Primary } else { Stress::None };
        let digit = if s == stressed { 1 } else { 0 };
        out.push(AlignedPhoneme {
            label: CONSONANTS[rng.gen_range(0..CONSONANTS.len())].into(),
            klass: PhonemeClass::Consonant,
            stress: Stress::None,
            start: t as f64 / 1000.0,
            end: (t + c) as f64 / 1000.0,
        });
        t += c;
        out.push(AlignedPhoneme {
            label: format!("{}{digit}", VOWELS[rng.gen_range(0..VOWELS.len())]),
            klass: PhonemeClass::Vowel,
            stress,
            start: t as f64 / 1000.0,
            end: (t + v) as f64 / 1000.0,
        });
        t += v;
    }
    t
}

fn timeline(rng: &mut ChaCha8Rng, tokens: &[TokenAnnotation], z: &Latents) -> Vec<AlignedWord> {
    let syllable_ms = 150.0 + 80.0 * z.articulation;
    let p_short = 0.05 + 0.45 * (1.0 - z.rate);
    let p_long = 0.01 + 0.19 * (1.0 - z.pause);
    let mut words = Vec::new();
    let mut t: i64 = rng.gen_range(100..400);
    for tok in tokens.iter().filter(|t| t.is_word()) {
        let filler = tok.pos == Pos::Intj;
        let mut ph = Vec::new();
        let end = phonemes_for(rng, &tok.token, t, if filler { syllable_ms * 1.4 } else { syllable_ms }, &mut ph);
        words.push(AlignedWord { text: tok.token.clone(), start: t as f64 / 1000.0, end: end as f64 / 1000.0, phonemes: ph });
        let gap = if filler {
            rng.gen_range(20..120)
        } else if rng.gen_bool(p_long) {
            rng.gen_range(550..1800)
        } else if rng.gen_bool(p_short) {
            rng.gen_range(160..450)
        } else {
            rng.gen_range(0..120)
        };
        t = end + gap;
    }
    words
}

/// +1 when a larger measurement means a better response.
fn orientation(latent: Latent) -> f64 {
    match latent {
        Latent::PauseStructure | Latent::FillerRate => -1.0,
        _ => 1.0,
    }
}

/// Population z-scores; a constant column maps to zeros.
fn zscores(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    v.iter().map(|x| if sd > 0.0 { (x - m) / sd } else { 0.0 }).collect()
}

fn validate(spec: &SynthSpec) -> Result<()> {
    if spec.n < 50 {
        return Err(Error::Invalid(format!("synthetic corpus needs n >= 50, got {}", spec.n)));
    }
    if !(2..=Grade::ALL.len()).contains(&spec.grade_levels) {
        return Err(Error::Unsatisfiable(format!("{} grade levels requested; between 2 and 5 are available", spec.grade_levels)));
    }
    if spec.score.iter().all(|t| t.weight == 0.0) && spec.noise <= 0.0 {
        return Err(Error::Unsatisfiable("score function is constant, so grades cannot form distinct bands".into()));
    }
    if !spec.grade_weights.is_empty()
        && (spec.grade_weights.len() != spec.grade_levels || spec.grade_weights.iter().any(|w| !(*w > 0.0)))
    {
        return Err(Error::Unsatisfiable(format!(
            "grade_weights must hold {} positive values, got {:?}",
            spec.grade_levels, spec.grade_weights
        )));
    }
    if spec.min_words < 5 || spec.max_words < spec.min_words || spec.prompts == 0 {
        return Err(Error::Invalid("word range must satisfy 5 <= min_words <= max_words, and prompts >= 1".into()));
    }
    if let Some(p) = spec.second_rater {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Invalid(format!("second_rater probability {p} outside [0, 1]")));
        }
    }
    Ok(())
}

pub fn synth_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    validate(spec)?;
    let resources = synth_resources();
    let mut responses = Vec::with_capacity(spec.n);
    let mut draws = Vec::with_capacity(spec.n);
    let mut measures: Vec<Vec<f64>> = vec![Vec::with_capacity(spec.n); spec.score.len()];
    let total_weight: f64 = spec.score.iter().map(|t| t.weight.abs()).sum::<f64>().max(1e-12);
    for i in 0..spec.n {
        let mut rng = rng_for(spec.seed, i as u64);
        let z = Latents {
            rate: rng.gen(),
            pause: rng.gen(),
            filler: rng.gen(),
            diversity: rng.gen(),
            length: rng.gen(),
            articulation: rng.gen(),
        };
        let n_words = spec.min_words + (z.length * (spec.max_words - spec.min_words) as f64).round() as usize;
        let tokens = tokens_for(&mut rng, n_words, &z, &resources.stopwords);
        let words = timeline(&mut rng, &tokens, &z);
        let transcript = tokens.iter().map(|t| t.token.as_str()).collect::<Vec<_>>().join(" ");
        let audio = spec.acoustic.then(|| {
            AudioRef::Tone(ToneSpec {
                f0: 90.0 + 130.0 * rng.gen::<f64>(),
                jitter: 0.02 * rng.gen::<f64>(),
                shimmer: 0.08 * rng.gen::<f64>(),
                duration: 0.5,
                sample_rate: 8000,
                seed: rng.gen(),
            })
        });
        let noise: f64 = {
            // Box-Muller; two uniforms per response keep streams aligned.
            let (u1, u2): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let rater_draw: f64 = rng.gen();
        let rater_dir: bool = rng.gen();
        let response = AlignedResponse {
            response_id: format!("s{:05}", i),
            prompt_id: format!("p{}", i % spec.prompts + 1),
            words,
            tokens,
            syntax: None,
            transcript,
            audio,
            grade: None,
            second_grade: None,
        };
        let fluency = fluency_features(&response, &resources)?;
        let lexical = lexical_features(&response.tokens, &resources, &GrammarConfig::default(), 0)?;
        let measured = |l: Latent| -> f64 {
            match l {
                Latent::LexicalDiversity => lexical.get("ttr").unwrap_or(0.0),
                Latent::ResponseLength => n_words as f64,
                other => fluency.get(other.feature()).unwrap_or(0.0),
            }
        };
        for (t, col) in spec.score.iter().zip(measures.iter_mut()) {
            col.push(measured(t.latent));
        }
        draws.push((noise, rater_draw, rater_dir));
        responses.push(response);
    }
    let mut clean_scores = vec![0.0; spec.n];
    for (t, col) in spec.score.iter().zip(&measures) {
        for (c, z) in clean_scores.iter_mut().zip(zscores(col)) {
            *c += t.weight * orientation(t.latent) * z / total_weight;
        }
    }
    let scores: Vec<(f64, f64, bool)> =
        clean_scores.iter().zip(&draws).map(|(c, (noise, draw, dir))| (c + spec.noise * noise, *draw, *dir)).collect();

    let weights = if spec.grade_weights.is_empty() { vec![1.0; spec.grade_levels] } else { spec.grade_weights.clone() };
    let total: f64 = weights.iter().sum();
    let counts = crate::corpus::largest_remainder(spec.n, &weights.iter().map(|w| w / total).collect::<Vec<_>>());
    let mut order: Vec<usize> = (0..spec.n).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0).then(a.cmp(&b)));
    let mut grade_of = vec![0usize; spec.n];
    let mut k = 0;
    for (g, c) in counts.iter().enumerate() {
        for &i in &order[k..k + c] {
            grade_of[i] = g;
        }
        k += c;
    }
    let top = spec.grade_levels - 1;
    for (i, r) in responses.iter_mut().enumerate() {
        let g = grade_of[i];
        r.grade = Grade::from_ordinal(g);
        if let Some(p) = spec.second_rater {
            let (draw, up) = (scores[i].1, scores[i].2);
            let g2 = if draw < p {
                match (g, up) {
                    (0, _) => 1,
                    (g, _) if g == top => g - 1,
                    (g, true) => g + 1,
                    (g, false) => g - 1,
                }
            } else {
                g
            };
            r.second_grade = Grade::from_ordinal(g2);
        }
    }
    // Interleave prompts so ids stay unique and ordered within each prompt.
    responses.sort_by(|a, b| (&a.prompt_id, &a.response_id).cmp(&(&b.prompt_id, &b.response_id)));
    let mut idx: Vec<usize> = (0..spec.n).collect();
    idx.sort_by(|&a, &b| (a % spec.prompts, a).cmp(&(b % spec.prompts, b)));
    let clean_scores = idx.iter().map(|&i| clean_scores[i]).collect();
    Ok(SynthCorpus { responses, resources, clean_scores })
}

/// Shuffled copy; handy for checking that downstream results do not depend
/// on input order.
pub fn shuffled(corpus: &[AlignedResponse], seed: u64) -> Vec<AlignedResponse> {
    let mut v = corpus.to_vec();
    v.shuffle(&mut rng_for(seed, u64::MAX));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pearson;

    fn spec(n: usize, seed: u64) -> SynthSpec {
        SynthSpec { n, seed, ..Default::default() }
    }

    #[test]
    fn grade_histogram_matches_targets() {
        let c = synth_corpus(&spec(500, 7)).unwrap();
        let mut hist = [0usize; 3];
        for r in &c.responses {
            hist[r.grade.unwrap().ordinal()] += 1;
        }
        for h in hist {
            assert!((h as f64 - 500.0 / 3.0).abs() <= 0.1 * 500.0 / 3.0, "{hist:?}");
        }
        let c = synth_corpus(&SynthSpec { grade_weights: vec![0.2, 0.5, 0.3], ..spec(500, 7) }).unwrap();
        let n1 = c.responses.iter().filter(|r| r.grade == Some(Grade::LB1)).count();
        assert_eq!(n1, 250);
    }

    #[test]
    fn responses_are_valid_and_deterministic() {
        let a = synth_corpus(&SynthSpec { acoustic: true, second_rater: Some(0.3), ..spec(60, 3) }).unwrap();
        let b = synth_corpus(&SynthSpec { acoustic: true, second_rater: Some(0.3), ..spec(60, 3) }).unwrap();
        assert_eq!(a.responses, b.responses);
        for r in &a.responses {
            r.validate().unwrap();
            assert!(r.second_grade.is_some());
            assert!(matches!(r.audio, Some(AudioRef::Tone(_))));
        }
        let c = synth_corpus(&spec(60, 4)).unwrap();
        assert_ne!(a.responses[0].words, c.responses[0].words);
    }

    #[test]
    fn speaking_rate_tracks_grade() {
        let s = SynthSpec { score: vec![ScoreTerm { latent: Latent::SpeakingRate, weight: 1.0 }], ..spec(300, 11) };
        let c = synth_corpus(&s).unwrap();
        let res = synth_resources();
        let rate: Vec<f64> = c.responses.iter().map(|r| fluency_features(r, &res).unwrap().get("speaking_rate").unwrap()).collect();
        let grade: Vec<f64> = c.responses.iter().map(|r| r.grade.unwrap().ordinal() as f64).collect();
        assert!(pearson(&rate, &grade).unwrap() > 0.6);
    }

    #[test]
    fn bad_specs() {
        assert!(matches!(synth_corpus(&SynthSpec { grade_levels: 6, ..spec(100, 0) }), Err(Error::Unsatisfiable(_))));
        assert!(matches!(synth_corpus(&SynthSpec { score: vec![], noise: 0.0, ..spec(100, 0) }), Err(Error::Unsatisfiable(_))));
        assert!(synth_corpus(&spec(10, 0)).is_err());
    }

    #[test]
    fn multiple_prompts() {
        let c = synth_corpus(&SynthSpec { prompts: 2, ..spec(60, 1) }).unwrap();
        assert_eq!(c.responses.iter().filter(|r| r.prompt_id == "p2").count(), 30);
        assert_eq!(c.clean_scores.len(), 60);
    }
}
