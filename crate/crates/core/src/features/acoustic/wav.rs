use std::path::Path;

use rand::Rng;

use crate::corpus::{AudioRef, ToneSpec};
use crate::error::{Error, Result};
use crate::seeding::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Audio("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Audio("audio has no samples".into()));
        }
        Ok(AudioBuffer { samples, sample_rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, c: f64) -> AudioBuffer {
        AudioBuffer { samples: self.samples.iter().map(|x| x * c).collect(), sample_rate: self.sample_rate }
    }
}

/// 16-bit PCM mono only; samples are scaled by 1/32768.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Audio(format!("{}: expected mono, found {} channels", path.display(), spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Audio(format!(
            "{}: expected 16-bit PCM, found {:?} with {} bits",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    AudioBuffer::new(samples, spec.sample_rate)
}

pub fn write_wav(audio: &AudioBuffer, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let err = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
    let mut w = hound::WavWriter::create(path, spec).map_err(err)?;
    for s in &audio.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(err)?;
    }
    w.finalize().map_err(err)
}

/// Sine built cycle by cycle; each cycle's period and amplitude are
/// perturbed uniformly by up to ±jitter and ±shimmer (relative).
pub fn render_tone(spec: &ToneSpec) -> Result<AudioBuffer> {
    if !(spec.f0 > 0.0 && spec.duration > 0.0 && spec.sample_rate > 0) {
        return Err(Error::Audio("tone needs positive f0, duration and sample rate".into()));
    }
    let fs = spec.sample_rate as f64;
    let n = (spec.duration * fs).round() as usize;
    let mut rng = rng_for(spec.seed, 0);
    let mut samples = Vec::with_capacity(n);
    let base = 1.0 / spec.f0;
    let mut cycle_start = 0.0;
    let mut period = base * (1.0 + spec.jitter * rng.gen_range(-1.0..=1.0));
    let mut amp = 0.5 * (1.0 + spec.shimmer * rng.gen_range(-1.0..=1.0));
    for i in 0..n {
        let t = i as f64 / fs;
        while t >= cycle_start + period {
            cycle_start += period;
            period = base * (1.0 + spec.jitter * rng.gen_range(-1.0..=1.0));
            amp = 0.5 * (1.0 + spec.shimmer * rng.gen_range(-1.0..=1.0));
        }
        let phase = (t - cycle_start) / period;
        samples.push(amp * (2.0 * std::f64::consts::PI * phase).sin());
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Resolves a response's audio reference; relative WAV paths are taken from `base`.
pub fn load_audio(audio: &AudioRef, base: Option<&Path>) -> Result<AudioBuffer> {
    match audio {
        AudioRef::Tone(t) => render_tone(t),
        AudioRef::Wav(p) => match base {
            Some(b) if p.is_relative() => read_wav(&b.join(p)),
            _ => read_wav(p),
        },
    }
}
