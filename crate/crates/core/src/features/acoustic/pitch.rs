use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub fmin: f64,
    pub fmax: f64,
    /// Frame length in seconds.
    pub frame: f64,
    /// Hop in seconds.
    pub hop: f64,
    pub voicing_threshold: f64,
    pub silence_rms: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        PitchConfig { fmin: 75.0, fmax: 500.0, frame: 0.040, hop: 0.010, voicing_threshold: 0.5, silence_rms: 1e-4 }
    }
}

impl PitchConfig {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame * sample_rate as f64).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        ((self.hop * sample_rate as f64).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeriodTrack {
    /// Seconds, one per voiced frame.
    pub periods: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub n_frames: usize,
}

/// Start offsets of the analysis frames.
pub fn frame_starts(n_samples: usize, frame: usize, hop: usize) -> Vec<usize> {
    if n_samples < frame || frame == 0 {
        return vec![];
    }
    (0..=(n_samples - frame) / hop).map(|k| k * hop).collect()
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn normalized_autocorrelation(x: &[f64], lag: usize) -> f64 {
    let (a, b) = (&x[..x.len() - lag], &x[lag..]);
    let num: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let den = (a.iter().map(|v| v * v).sum::<f64>() * b.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Best lag (fractional, in samples) and its correlation for one frame.
fn frame_period(x: &[f64], min_lag: usize, max_lag: usize) -> Option<(f64, f64)> {
    let lo = min_lag.saturating_sub(1).max(1);
    let hi = (max_lag + 1).min(x.len() - 1);
    if hi <= lo + 1 {
        return None;
    }
    let r: Vec<f64> = (lo..=hi).map(|lag| normalized_autocorrelation(x, lag)).collect();
    let band = (min_lag - lo)..=(max_lag.min(hi) - lo);
    let global = band.clone().map(|i| r[i]).fold(f64::NEG_INFINITY, f64::max);
    if global <= 0.0 {
        return None;
    }
    // The first local maximum near the global one avoids picking sub-harmonics.
    let pick = band.clone().find(|&i| {
        i > 0 && i + 1 < r.len() && r[i] >= r[i - 1] && r[i] >= r[i + 1] && r[i] >= 0.9 * global
    })?;
    let (a, b, c) = (r[pick - 1], r[pick], r[pick + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let peak = b - 0.25 * (a - c) * shift;
    Some(((lo + pick) as f64 + shift, peak.min(1.0)))
}

/// Frame-wise normalized autocorrelation pitch tracking.
pub fn pitch_track(audio: &AudioBuffer, config: &PitchConfig) -> Result<PeriodTrack> {
    let fs = audio.sample_rate as f64;
    let frame = config.frame_len(audio.sample_rate);
    if audio.samples.len() < frame || frame == 0 {
        return Err(Error::Audio(format!(
            "audio of {:.3} s is shorter than one {:.3} s frame",
            audio.duration(),
            config.frame
        )));
    }
    if !(config.fmin > 0.0 && config.fmax > config.fmin) {
        return Err(Error::Invalid("pitch range needs 0 < fmin < fmax".into()));
    }
    let min_lag = ((fs / config.fmax).floor() as usize).max(2);
    let max_lag = ((fs / config.fmin).ceil() as usize).min(frame - 2);
    let mut track = PeriodTrack::default();
    for start in frame_starts(audio.samples.len(), frame, config.hop_len(audio.sample_rate)) {
        track.n_frames += 1;
        let x = &audio.samples[start..start + frame];
        if rms(x) < config.silence_rms || max_lag <= min_lag {
            continue;
        }
        if let Some((lag, corr)) = frame_period(x, min_lag, max_lag) {
            if corr >= config.voicing_threshold {
                track.periods.push(lag / fs);
                track.amplitudes.push(x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            }
        }
    }
    Ok(track)
}
