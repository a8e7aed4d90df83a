//! Stress- and interval-based suprasegmental features.

use serde::{Deserialize, Serialize};

use crate::corpus::{AlignedPhoneme, AlignedResponse, PhonemeClass, Stress};
use crate::error::{Error, Result};
use crate::features::{mean, mean_abs_deviation, population_sd, FeatureMap};

#[derive(Debug, Clone, PartialEq)]
pub struct Syllable {
    pub onset: Vec<AlignedPhoneme>,
    pub nucleus: AlignedPhoneme,
    pub coda: Vec<AlignedPhoneme>,
    pub start: f64,
    pub end: f64,
    pub stressed: bool,
}

impl Syllable {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StressConfig {
    /// Count secondary stress as stressed (primary always counts).
    pub include_secondary: bool,
}

impl StressConfig {
    fn is_stressed(&self, s: Stress) -> bool {
        match s {
            Stress::Primary => true,
            Stress::Secondary => self.include_secondary,
            Stress::None => false,
        }
    }
}

/// One syllable per vowel, built word by word. Consonants between two nuclei
/// all join the onset of the later syllable; consonants after a word's last
/// vowel form its coda. Words without vowels contribute no syllable.
pub fn syllabify(response: &AlignedResponse, config: StressConfig) -> Result<Vec<Syllable>> {
    let mut out = Vec::new();
    for word in &response.words {
        let phones: Vec<&AlignedPhoneme> = word
            .phonemes
            .iter()
            .filter(|p| p.klass != PhonemeClass::Silence)
            .collect();
        let mut pending: Vec<AlignedPhoneme> = Vec::new();
        let first_syllable = out.len();
        for p in phones {
            if p.klass == PhonemeClass::Vowel {
                let onset = std::mem::take(&mut pending);
                let start = onset.first().map_or(p.start, |c| c.start);
                out.push(Syllable {
                    onset,
                    nucleus: p.clone(),
                    coda: vec![],
                    start,
                    end: p.end,
                    stressed: config.is_stressed(p.stress),
                });
            } else {
                pending.push(p.clone());
            }
        }
        if out.len() > first_syllable {
            let last = out.last_mut().unwrap();
            if let Some(c) = pending.last() {
                last.end = c.end;
            }
            last.coda = pending;
        }
    }
    if out.is_empty() {
        return Err(Error::NoNuclei);
    }
    Ok(out)
}

pub const STRESS_FEATURES: [&str; 5] = [
    "StressedSyllPercent",
    "StressDistanceSyllMean",
    "StressDistanceSyllSD",
    "StressDistanceMean",
    "StressDistanceSD",
];

/// Distances between consecutive stressed syllables, in syllables (index
/// difference) and seconds (nucleus onset difference). "SD" variants are mean
/// absolute deviations.
pub fn stress_features(syllables: &[Syllable]) -> Result<FeatureMap> {
    if syllables.is_empty() {
        return Err(Error::Invalid("no syllables".into()));
    }
    let stressed: Vec<usize> = (0..syllables.len()).filter(|&i| syllables[i].stressed).collect();
    let mut out = FeatureMap::new();
    out.insert(
        "StressedSyllPercent",
        100.0 * stressed.len() as f64 / syllables.len() as f64,
    );
    if stressed.len() < 2 {
        out.flag("fewer than two stressed syllables: distance features set to 0");
        for n in &STRESS_FEATURES[1..] {
            out.insert(*n, 0.0);
        }
        return Ok(out);
    }
    let syl: Vec<f64> = stressed.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let secs: Vec<f64> = stressed
        .windows(2)
        .map(|w| syllables[w[1]].nucleus.start - syllables[w[0]].nucleus.start)
        .collect();
    out.insert("StressDistanceSyllMean", mean(&syl));
    out.insert("StressDistanceSyllSD", mean_abs_deviation(&syl));
    out.insert("StressDistanceMean", mean(&secs));
    out.insert("StressDistanceSD", mean_abs_deviation(&secs));
    Ok(out)
}

/// Interval durations in milliseconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSequence {
    pub vocalic: Vec<f64>,
    pub consonantal: Vec<f64>,
    pub syllabic: Vec<f64>,
}

/// Maximal runs of same-class phonemes, broken by silence phonemes and by
/// any temporal discontinuity. Zero-length phonemes are skipped.
pub fn interval_sequence(response: &AlignedResponse, syllables: &[Syllable]) -> IntervalSequence {
    let mut seq = IntervalSequence::default();
    let mut run: Option<(PhonemeClass, f64, f64)> = None;
    let flush = |run: &mut Option<(PhonemeClass, f64, f64)>, seq: &mut IntervalSequence| {
        if let Some((class, dur, _)) = run.take() {
            match class {
                PhonemeClass::Vowel => seq.vocalic.push(dur * 1000.0),
                PhonemeClass::Consonant => seq.consonantal.push(dur * 1000.0),
                PhonemeClass::Silence => {}
            }
        }
    };
    for p in response.phonemes() {
        if p.klass == PhonemeClass::Silence {
            flush(&mut run, &mut seq);
            continue;
        }
        if p.duration() <= 0.0 {
            continue;
        }
        match &mut run {
            Some((class, dur, end)) if *class == p.klass && (p.start - *end).abs() < 1e-6 => {
                *dur += p.duration();
                *end = p.end;
            }
            _ => {
                flush(&mut run, &mut seq);
                run = Some((p.klass, p.duration(), p.end));
            }
        }
    }
    flush(&mut run, &mut seq);
    seq.syllabic = syllables
        .iter()
        .map(|s| s.duration() * 1000.0)
        .filter(|d| *d > 0.0)
        .collect();
    seq
}

pub const INTERVAL_FEATURES: [&str; 14] = [
    "vowelPercentage",
    "consonantPercentage",
    "vowelDurationSD",
    "consonantDurationSD",
    "syllableDurationSD",
    "vowelSDNorm",
    "consonantSDNorm",
    "syllableSDNorm",
    "vowelPVI",
    "consonantPVI",
    "syllablePVI",
    "vowelPVINorm",
    "consonantPVINorm",
    "syllablePVINorm",
];

/// Raw pairwise variability index (same unit as the input).
pub fn raw_pvi(d: &[f64]) -> f64 {
    if d.len() < 2 {
        return 0.0;
    }
    d.windows(2).map(|w| (w[0] - w[1]).abs()).sum::<f64>() / (d.len() - 1) as f64
}

/// Normalized pairwise variability index.
pub fn normalized_pvi(d: &[f64]) -> f64 {
    if d.len() < 2 {
        return 0.0;
    }
    100.0 * d
        .windows(2)
        .map(|w| (w[0] - w[1]).abs() / ((w[0] + w[1]) / 2.0))
        .sum::<f64>()
        / (d.len() - 1) as f64
}

/// Interval-based rhythm features. `total_phonation_ms` is the summed
/// duration of all vowel and consonant phonemes.
pub fn interval_features(intervals: &IntervalSequence, total_phonation_ms: f64) -> Result<FeatureMap> {
    let all = intervals
        .vocalic
        .iter()
        .chain(&intervals.consonantal)
        .chain(&intervals.syllabic);
    if all.clone().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::Invalid("interval durations must be positive".into()));
    }
    let mut out = FeatureMap::new();
    let vowel_total: f64 = intervals.vocalic.iter().sum();
    let consonant_total: f64 = intervals.consonantal.iter().sum();
    if total_phonation_ms > 0.0 {
        out.insert("vowelPercentage", 100.0 * vowel_total / total_phonation_ms);
        out.insert("consonantPercentage", 100.0 * consonant_total / total_phonation_ms);
    } else {
        out.flag("no phonation: percentages set to 0");
        out.insert("vowelPercentage", 0.0);
        out.insert("consonantPercentage", 0.0);
    }
    let classes = [
        ("vowel", &intervals.vocalic),
        ("consonant", &intervals.consonantal),
        ("syllable", &intervals.syllabic),
    ];
    for (name, d) in classes {
        if d.is_empty() {
            out.flag(format!("no {name} intervals: spread features set to 0"));
        }
        out.insert(format!("{name}DurationSD"), population_sd(d));
    }
    for (name, d) in classes {
        let m = mean(d);
        out.insert(format!("{name}SDNorm"), if m > 0.0 { population_sd(d) / m } else { 0.0 });
    }
    for (name, d) in classes {
        if d.len() < 2 {
            out.flag(format!("fewer than two {name} intervals: PVI set to 0"));
        }
        out.insert(format!("{name}PVI"), raw_pvi(d));
    }
    for (name, d) in classes {
        out.insert(format!("{name}PVINorm"), normalized_pvi(d));
    }
    Ok(out)
}

/// All nineteen suprasegmental features for one response.
pub fn prosody_features(response: &AlignedResponse, config: StressConfig) -> Result<FeatureMap> {
    let syllables = syllabify(response, config)?;
    let mut out = stress_features(&syllables)?;
    let intervals = interval_sequence(response, &syllables);
    let phonation_ms: f64 = response
        .phonemes()
        .filter(|p| p.klass != PhonemeClass::Silence)
        .map(|p| p.duration().max(0.0))
        .sum::<f64>()
        * 1000.0;
    out.extend(interval_features(&intervals, phonation_ms)?);
    Ok(out)
}
