//! Time-sequenced acoustic features computed from the waveform.

mod pitch;
mod wav;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub use pitch::{frame_starts, pitch_track, rms, PeriodTrack, PitchConfig};
pub use wav::{load_audio, read_wav, render_tone, write_wav, AudioBuffer};

use crate::error::Result;
use crate::features::{mean, population_sd, FeatureMap};

pub const ACOUSTIC_FEATURES: [&str; 16] = [
    "stdev_energy",
    "mean_pitch",
    "stdev_pitch",
    "range_pitch",
    "zero_crossing_rate",
    "energy_entropy",
    "spectral_centroid",
    "localJitter",
    "rapJitter",
    "ppq5Jitter",
    "ddpJitter",
    "localShimmer",
    "apq3Shimmer",
    "aqpq5Shimmer",
    "ddaShimmer",
    "total_duration",
];

const SUB_FRAMES: usize = 10;

pub fn zero_crossing_rate(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    x.windows(2).filter(|w| w[0] * w[1] < 0.0).count() as f64 / (x.len() - 1) as f64
}

/// Shannon entropy (bits) of the energy share of each sub-frame.
pub fn sub_frame_entropy(frame: &[f64], n_sub: usize) -> f64 {
    let len = frame.len() / n_sub;
    if len == 0 {
        return 0.0;
    }
    let energies: Vec<f64> = (0..n_sub).map(|k| frame[k * len..(k + 1) * len].iter().map(|v| v * v).sum()).collect();
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    energies
        .iter()
        .map(|e| e / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

/// Mean absolute deviation of each point from its centred `width`-point
/// average, relative to the overall mean. `width` 2 means adjacent
/// differences.
pub fn perturbation(values: &[f64], width: usize) -> Option<f64> {
    let m = mean(values);
    if m <= 0.0 {
        return None;
    }
    if width == 2 {
        if values.len() < 2 {
            return None;
        }
        let d: Vec<f64> = values.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        return Some(mean(&d) / m);
    }
    if values.len() < width {
        return None;
    }
    let half = width / 2;
    let d: Vec<f64> = values
        .windows(width)
        .map(|w| (w[half] - w.iter().sum::<f64>() / width as f64).abs())
        .collect();
    Some(mean(&d) / m)
}

/// Frame-averaged magnitude-spectrum centroid in Hz.
pub fn spectral_centroid(audio: &AudioBuffer, frame: usize, hop: usize) -> f64 {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(frame);
    let mut buf = vec![Complex::new(0.0, 0.0); frame];
    let bin_hz = audio.sample_rate as f64 / frame as f64;
    let mut centroids = Vec::new();
    for start in frame_starts(audio.samples.len(), frame, hop) {
        for (b, x) in buf.iter_mut().zip(&audio.samples[start..start + frame]) {
            *b = Complex::new(*x, 0.0);
        }
        fft.process(&mut buf);
        let (mut num, mut den) = (0.0, 0.0);
        for (k, c) in buf.iter().enumerate().take(frame / 2 + 1) {
            let mag = c.norm();
            num += k as f64 * bin_hz * mag;
            den += mag;
        }
        if den > 0.0 {
            centroids.push(num / den);
        }
    }
    mean(&centroids)
}

/// The sixteen acoustic features. Frame and hop come from `config`.
pub fn acoustic_features(audio: &AudioBuffer, track: &PeriodTrack, config: &PitchConfig) -> Result<FeatureMap> {
    let frame = config.frame_len(audio.sample_rate);
    let hop = config.hop_len(audio.sample_rate);
    let starts = frame_starts(audio.samples.len(), frame, hop);
    let mut out = FeatureMap::new();

    let energies: Vec<f64> = starts.iter().map(|&s| rms(&audio.samples[s..s + frame])).collect();
    out.insert("stdev_energy", population_sd(&energies));

    let pitches: Vec<f64> = track.periods.iter().map(|p| 1.0 / p).collect();
    if pitches.is_empty() {
        out.flag("no voiced frames: pitch, jitter and shimmer set to 0");
    }
    out.insert("mean_pitch", mean(&pitches));
    out.insert("stdev_pitch", population_sd(&pitches));
    let range = if pitches.is_empty() {
        0.0
    } else {
        pitches.iter().cloned().fold(f64::MIN, f64::max) - pitches.iter().cloned().fold(f64::MAX, f64::min)
    };
    out.insert("range_pitch", range);
    out.insert("zero_crossing_rate", zero_crossing_rate(&audio.samples));
    out.insert(
        "energy_entropy",
        starts.iter().map(|&s| sub_frame_entropy(&audio.samples[s..s + frame], SUB_FRAMES)).sum(),
    );
    out.insert("spectral_centroid", spectral_centroid(audio, frame, hop));

    insert_perturbation(&mut out, "localJitter", &track.periods, 2);
    let rap = insert_perturbation(&mut out, "rapJitter", &track.periods, 3);
    insert_perturbation(&mut out, "ppq5Jitter", &track.periods, 5);
    out.insert("ddpJitter", 3.0 * rap);
    insert_perturbation(&mut out, "localShimmer", &track.amplitudes, 2);
    let apq3 = insert_perturbation(&mut out, "apq3Shimmer", &track.amplitudes, 3);
    insert_perturbation(&mut out, "aqpq5Shimmer", &track.amplitudes, 5);
    out.insert("ddaShimmer", 3.0 * apq3);
    out.insert("total_duration", audio.duration());
    Ok(out)
}

fn insert_perturbation(out: &mut FeatureMap, name: &str, values: &[f64], width: usize) -> f64 {
    let v = perturbation(values, width);
    if v.is_none() && !values.is_empty() {
        out.flag(format!("too few voiced periods for {name}: set to 0"));
    }
    out.insert(name, v.unwrap_or(0.0));
    v.unwrap_or(0.0)
}

/// Pitch tracking followed by feature computation.
pub fn analyze(audio: &AudioBuffer, config: &PitchConfig) -> Result<FeatureMap> {
    let track = pitch_track(audio, config)?;
    acoustic_features(audio, &track, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ToneSpec;
    use proptest::prelude::*;

    fn tone(jitter: f64, shimmer: f64, seed: u64) -> AudioBuffer {
        render_tone(&ToneSpec { f0: 120.0, jitter, shimmer, duration: 2.0, sample_rate: 16000, seed }).unwrap()
    }

    #[test]
    fn periodic_tone_is_stable() {
        let f = analyze(&tone(0.0, 0.0, 1), &PitchConfig::default()).unwrap();
        for n in &ACOUSTIC_FEATURES[7..15] {
            assert!(f.get(n).unwrap() < 1e-3, "{n} = {}", f.get(n).unwrap());
        }
        assert!((f.get("mean_pitch").unwrap() - 120.0).abs() < 1.0);
        assert!((f.get("total_duration").unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(f.len(), 16);
    }

    #[test]
    fn alternating_amplitudes_shimmer() {
        let track = PeriodTrack {
            periods: vec![0.01; 8],
            amplitudes: [0.5, 1.0].repeat(4),
            n_frames: 8,
        };
        let a = AudioBuffer::new(vec![0.0; 1000], 8000).unwrap();
        let f = acoustic_features(&a, &track, &PitchConfig::default()).unwrap();
        assert!((f.get("localShimmer").unwrap() - 0.5 / 0.75).abs() < 1e-12);
        assert_eq!(f.get("localJitter"), Some(0.0));
    }

    #[test]
    fn alternating_signs_cross_every_sample() {
        assert_eq!(zero_crossing_rate(&[1.0, -1.0, 1.0, -1.0]), 1.0);
        assert_eq!(zero_crossing_rate(&[1.0, 1.0, 0.5]), 0.0);
    }

    #[test]
    fn entropy_of_flat_energy() {
        assert!((sub_frame_entropy(&[1.0; 100], 10) - 10f64.log2()).abs() < 1e-12);
        let mut spike = vec![0.0; 100];
        spike[3] = 1.0;
        assert_eq!(sub_frame_entropy(&spike, 10), 0.0);
    }

    #[test]
    fn centroid_of_pure_tone() {
        let fs = 8000;
        let frame = 320;
        // 1000 Hz falls exactly on bin 40
        let x: Vec<f64> = (0..4000).map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / fs as f64).sin()).collect();
        let c = spectral_centroid(&AudioBuffer::new(x, fs).unwrap(), frame, 80);
        assert!((c - 1000.0).abs() < 1.0, "{c}");
    }

    #[test]
    fn silence_has_no_pitch() {
        let a = AudioBuffer::new(vec![0.0; 8000], 8000).unwrap();
        let f = analyze(&a, &PitchConfig::default()).unwrap();
        assert!(f.is_flagged());
        assert_eq!(f.get("mean_pitch"), Some(0.0));
        assert!(ACOUSTIC_FEATURES.iter().all(|n| f.get(n).unwrap().is_finite()));
    }

    #[test]
    fn short_track_flags_five_point_variants() {
        let track = PeriodTrack { periods: vec![0.01, 0.011, 0.01], amplitudes: vec![0.5, 0.6, 0.5], n_frames: 3 };
        let a = AudioBuffer::new(vec![0.0; 1000], 8000).unwrap();
        let f = acoustic_features(&a, &track, &PitchConfig::default()).unwrap();
        assert!(f.is_flagged());
        assert_eq!(f.get("ppq5Jitter"), Some(0.0));
        assert!(f.get("rapJitter").unwrap() > 0.0);
    }

    #[test]
    fn rap_jitter_grows_with_perturbation() {
        let rap = |p: f64| {
            let runs: Vec<f64> = (0..3)
                .map(|s| analyze(&tone(p, 0.0, 10 + s), &PitchConfig::default()).unwrap().get("rapJitter").unwrap())
                .collect();
            mean(&runs)
        };
        let values: Vec<f64> = [0.0, 0.01, 0.02, 0.05].iter().map(|p| rap(*p)).collect();
        for w in values.windows(2) {
            assert!(w[1] > w[0], "{values:?}");
        }
    }

    /// Second-difference form of the period perturbation quotient.
    fn ddp_oracle(t: &[f64]) -> f64 {
        let d: Vec<f64> = t.windows(3).map(|w| ((w[2] - w[1]) - (w[1] - w[0])).abs()).collect();
        mean(&d) / mean(t)
    }

    proptest! {
        #[test]
        fn ddp_is_three_rap(periods in proptest::collection::vec(0.002f64..0.0133, 3..60)) {
            let rap = perturbation(&periods, 3).unwrap();
            prop_assert!((3.0 * rap - ddp_oracle(&periods)).abs() < 1e-12);
        }

        #[test]
        fn perturbation_is_scale_invariant(
            amps in proptest::collection::vec(0.01f64..1.0, 5..40),
            c in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = amps.iter().map(|a| a * c).collect();
            for w in [2, 3, 5] {
                let a = perturbation(&amps, w).unwrap();
                let b = perturbation(&scaled, w).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
            }
        }
    }

    #[test]
    fn amplitude_scaling_leaves_voice_quality() {
        let a = tone(0.02, 0.1, 3);
        let fa = analyze(&a, &PitchConfig::default()).unwrap();
        let fb = analyze(&a.scaled(0.25), &PitchConfig::default()).unwrap();
        for n in &ACOUSTIC_FEATURES[7..15] {
            let (x, y) = (fa.get(n).unwrap(), fb.get(n).unwrap());
            assert!((x - y).abs() < 1e-9, "{n}: {x} vs {y}");
        }
    }
}
