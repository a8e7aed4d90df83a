//! Breakdown and speed fluency from the word timeline.

use crate::corpus::{AlignedResponse, LexicalResources};
use crate::error::{Error, Result};
use crate::features::{mean, mean_abs_deviation, FeatureMap};

/// Inter-word gaps longer than this are silences (seconds, strict).
pub const SILENCE_THRESHOLD: f64 = 0.145;
/// Inter-word gaps longer than this are long silences (seconds, strict).
pub const LONG_SILENCE_THRESHOLD: f64 = 0.495;
/// Gap comparisons ignore float noise below this (timestamps are rounded to ms or finer).
const BOUNDARY_EPS: f64 = 1e-9;

pub const FLUENCY_FEATURES: [&str; 10] = [
    "filled_pause_rate",
    "general_silence",
    "mean_silence",
    "silence_absolute_deviation",
    "SilenceRate1",
    "SilenceRate2",
    "long_silence_deviation",
    "speaking_rate",
    "articulation_rate",
    "longpfreq",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Gap {
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilenceProfile {
    /// Gaps strictly between consecutive words; edge silence is never included.
    pub gaps: Vec<Gap>,
    pub silences: Vec<Gap>,
    pub long_silences: Vec<Gap>,
    pub response_time: f64,
    pub articulation_time: f64,
}

pub fn silence_profile(response: &AlignedResponse) -> Result<SilenceProfile> {
    if response.words.is_empty() {
        return Err(Error::EmptyResponse);
    }
    let gaps: Vec<Gap> = response
        .words
        .windows(2)
        .map(|w| Gap {
            start: w[0].end,
            duration: (w[1].start - w[0].end).max(0.0),
        })
        .collect();
    let silences: Vec<Gap> = gaps
        .iter()
        .filter(|g| g.duration - SILENCE_THRESHOLD > BOUNDARY_EPS)
        .cloned()
        .collect();
    let long_silences: Vec<Gap> = silences
        .iter()
        .filter(|g| g.duration - LONG_SILENCE_THRESHOLD > BOUNDARY_EPS)
        .cloned()
        .collect();
    Ok(SilenceProfile {
        gaps,
        silences,
        long_silences,
        response_time: response.total_duration(),
        articulation_time: response.words.iter().map(|w| w.duration()).sum(),
    })
}

/// The ten breakdown/speed fluency features.
///
/// Filled pauses are counted for `filled_pause_rate` only; every word-count
/// denominator uses non-filler words. With fewer than two non-filler words
/// the silence statistics are 0 and the map is flagged.
pub fn fluency_features(response: &AlignedResponse, resources: &LexicalResources) -> Result<FeatureMap> {
    let profile = silence_profile(response)?;
    let n_fillers = response
        .words
        .iter()
        .filter(|w| resources.is_filler(&w.text))
        .count() as f64;
    let n_words = response.words.len() as f64 - n_fillers;

    let mut out = FeatureMap::new();
    let rt = profile.response_time;
    let per = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    out.insert("filled_pause_rate", per(n_fillers, rt));

    let silence_durations: Vec<f64> = profile.silences.iter().map(|g| g.duration).collect();
    let long_durations: Vec<f64> = profile.long_silences.iter().map(|g| g.duration).collect();
    if n_words < 2.0 {
        out.flag("fewer than two non-filler words: silence statistics set to 0");
        for name in &FLUENCY_FEATURES[1..7] {
            out.insert(*name, 0.0);
        }
    } else {
        let n_sil = silence_durations.len() as f64;
        out.insert("general_silence", n_sil);
        out.insert("mean_silence", mean(&silence_durations));
        out.insert("silence_absolute_deviation", mean_abs_deviation(&silence_durations));
        out.insert("SilenceRate1", per(n_sil, n_words));
        out.insert("SilenceRate2", per(n_sil, rt));
        if long_durations.is_empty() {
            out.flag("no long silences: long_silence_deviation set to 0");
        }
        out.insert("long_silence_deviation", mean_abs_deviation(&long_durations));
    }
    out.insert("speaking_rate", per(n_words, rt));
    out.insert("articulation_rate", per(n_words, profile.articulation_time));
    out.insert("longpfreq", per(long_durations.len() as f64, n_words));
    Ok(out)
}
